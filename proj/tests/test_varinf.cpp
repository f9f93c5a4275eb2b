// SPDX-License-Identifier: Apache-2.0
#include "imvae/varinf.hpp"

#include <doctest.h>

#include <cmath>

using namespace imvae;

namespace {

void fill_normal(Mat& m, Rng& rng, double scale = 0.3) {
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
}

}  // namespace

TEST_CASE("GaussianHead scale starts at exactly one for zero input") {
  Rng rng(1);
  GaussianHead head("h", 6, {4}, 3);
  head.init(rng);
  GaussianHeadCache c;
  const GaussianParams p = head.forward(Vec::Zero(6), c);
  // Hidden GELU(0)=0, so the scale path reduces to its output bias, which is
  // initialized to softplus_inv(1 - floor): sigma == 1 to machine precision.
  for (int i = 0; i < 3; ++i) {
    CHECK(p.sigma(i) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK((p.sigma.array() > 0).all());
}

TEST_CASE("GaussianHead scale is always above the floor") {
  Rng rng(2);
  GaussianHead head("h", 4, {5}, 4);
  head.init(rng);
  for (int trial = 0; trial < 50; ++trial) {
    GaussianHeadCache c;
    const GaussianParams p = head.forward(rng.normal_vec(4) * 10.0, c);
    CHECK((p.sigma.array() >= kSigmaFloor).all());
  }
}

TEST_CASE("GaussianHead backward matches finite differences") {
  Rng rng(3);
  GaussianHead head("h", 3, {4}, 2);
  head.init(rng);
  const Vec x = rng.normal_vec(3);
  const Vec wmu = rng.normal_vec(2), wsig = rng.normal_vec(2);
  nn::ParamList params;
  head.collect(params);
  auto loss = [&] {
    GaussianHeadCache c;
    const GaussianParams p = head.forward(x, c);
    return wmu.dot(p.mu) + wsig.dot(p.sigma);
  };
  nn::zero_grads(params);
  GaussianHeadCache c;
  head.forward(x, c);
  head.backward(wmu, wsig, c);
  const double h = 1e-5;
  for (nn::Param* p : params) {
    for (int i = 0; i < p->w.size(); ++i) {
      const double keep = p->w.data()[i];
      p->w.data()[i] = keep + h;
      const double up = loss();
      p->w.data()[i] = keep - h;
      const double dn = loss();
      p->w.data()[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = p->g.data()[i];
      INFO(p->name, " entry ", i);
      REQUIRE(std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd)) <
              1e-6);
    }
  }
}

TEST_CASE("GaussianPrior starts at the standard normal") {
  GaussianPrior prior("p", 5);
  const GaussianParams p = prior.params();
  CHECK((p.mu.array() == 0.0).all());
  for (int i = 0; i < 5; ++i) {
    CHECK(p.sigma(i) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("reparameterize is the exact affine map") {
  GaussianParams p;
  p.mu = Vec(3);
  p.mu << 1.0, -2.0, 0.5;
  p.sigma = Vec(3);
  p.sigma << 0.1, 2.0, 1.0;
  Vec eps(3);
  eps << 0.3, -0.7, 2.0;
  const Vec z = reparameterize(p, eps);
  CHECK(z(0) == doctest::Approx(1.0 + 0.1 * 0.3).epsilon(1e-15));
  CHECK(z(1) == doctest::Approx(-2.0 + 2.0 * -0.7).epsilon(1e-15));
  CHECK(z(2) == doctest::Approx(0.5 + 2.0).epsilon(1e-15));
  CHECK_THROWS_AS(reparameterize(p, Vec::Zero(2)), ConfigError);

  Vec dmu = Vec::Zero(3), dsig = Vec::Zero(3);
  Vec dz(3);
  dz << 1.0, 2.0, 3.0;
  reparameterize_backward(dz, eps, dmu, dsig);
  CHECK(dmu.isApprox(dz));
  CHECK(dsig(0) == doctest::Approx(1.0 * 0.3));
  CHECK(dsig(1) == doctest::Approx(2.0 * -0.7));
  CHECK(dsig(2) == doctest::Approx(3.0 * 2.0));
}

TEST_CASE("reparameterized samples have the posterior's moments") {
  GaussianParams p;
  p.mu = Vec(2);
  p.mu << 0.7, -1.2;
  p.sigma = Vec(2);
  p.sigma << 0.5, 2.0;
  Rng rng(7);
  const int n = 100000;
  Vec sum = Vec::Zero(2), sum2 = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vec z = reparameterize(p, rng.normal_vec(2));
    sum += z;
    sum2 += z.cwiseProduct(z);
  }
  for (int j = 0; j < 2; ++j) {
    const double mean = sum(j) / n;
    const double sd = std::sqrt(sum2(j) / n - mean * mean);
    const double se = p.sigma(j) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean - p.mu(j)) < 3 * se);
    CHECK(std::abs(sd - p.sigma(j)) < 0.05 * p.sigma(j));
  }
}

TEST_CASE("CrossEncoder mlp mode is a head over pooled summaries") {
  Rng rng(11);
  const int dim = 4;
  CrossEncoder enc("c", CrossMode::kMlp, dim, 2, {5});
  enc.init(rng);
  const int Tt = 3, Ts = 2;
  Mat tgt(Tt, dim), src(Ts, dim);
  fill_normal(tgt, rng);
  fill_normal(src, rng);
  std::vector<std::uint8_t> tmask{1, 1, 0}, smask{1, 1};
  const Vec tp = rng.normal_vec(dim), sp = rng.normal_vec(dim);
  CrossCache c;
  const GaussianParams got = enc.forward(tgt, tmask, tp, src, smask, sp, c);
  Vec cat(2 * dim);
  cat << tp, sp;
  GaussianHeadCache hc;
  const GaussianParams want = enc.head.forward(cat, hc);
  CHECK(got.mu.isApprox(want.mu, 1e-14));
  CHECK(got.sigma.isApprox(want.sigma, 1e-14));
}

TEST_CASE("CrossEncoder attention mode pools only real target rows") {
  Rng rng(12);
  const int dim = 4;
  CrossEncoder enc("c", CrossMode::kAttention, dim, 2, {5});
  enc.init(rng);
  const int Tt = 3, Ts = 3;
  Mat tgt(Tt, dim), src(Ts, dim);
  fill_normal(tgt, rng);
  fill_normal(src, rng);
  std::vector<std::uint8_t> tmask{0, 1, 1}, smask{1, 1, 1};
  const Vec tp = Vec::Zero(dim), sp = Vec::Zero(dim);
  CrossCache c1;
  const GaussianParams base = enc.forward(tgt, tmask, tp, src, smask, sp, c1);
  // A PAD target row only matters through its (ignored) pooled slot.
  Mat tgt2 = tgt;
  tgt2.row(0).setConstant(7.0);
  CrossCache c2;
  const GaussianParams pert = enc.forward(tgt2, tmask, tp, src, smask, sp, c2);
  CHECK(base.mu.isApprox(pert.mu, 1e-12));
  CHECK(base.sigma.isApprox(pert.sigma, 1e-12));
  // A real source row matters.
  Mat src2 = src;
  src2.row(1).setConstant(7.0);
  CrossCache c3;
  const GaussianParams moved = enc.forward(tgt, tmask, tp, src2, smask, sp, c3);
  CHECK((base.mu - moved.mu).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("CrossEncoder backward matches finite differences in both modes") {
  for (const CrossMode mode : {CrossMode::kAttention, CrossMode::kMlp}) {
    CAPTURE(static_cast<int>(mode));
    Rng rng(13);
    const int dim = 4;
    CrossEncoder enc("c", mode, dim, 2, {5});
    enc.init(rng);
    const int Tt = 3, Ts = 2;
    Mat tgt(Tt, dim), src(Ts, dim);
    fill_normal(tgt, rng);
    fill_normal(src, rng);
    std::vector<std::uint8_t> tmask{1, 1, 0}, smask{1, 1};
    Vec tp = rng.normal_vec(dim), sp = rng.normal_vec(dim);
    const Vec wmu = rng.normal_vec(dim), wsig = rng.normal_vec(dim);
    nn::ParamList params;
    enc.collect(params);

    auto loss = [&] {
      CrossCache c;
      const GaussianParams p = enc.forward(tgt, tmask, tp, src, smask, sp, c);
      return wmu.dot(p.mu) + wsig.dot(p.sigma);
    };
    nn::zero_grads(params);
    CrossCache c;
    enc.forward(tgt, tmask, tp, src, smask, sp, c);
    Mat dtgt = Mat::Zero(Tt, dim), dsrc = Mat::Zero(Ts, dim);
    Vec dtp = Vec::Zero(dim), dsp = Vec::Zero(dim);
    enc.backward(wmu, wsig, c, tmask, smask, dtgt, dsrc, dtp, dsp);

    const double h = 1e-5;
    auto fd_entry = [&](double* x) {
      const double keep = *x;
      *x = keep + h;
      const double up = loss();
      *x = keep - h;
      const double dn = loss();
      *x = keep;
      return (up - dn) / (2 * h);
    };
    auto close = [](double a, double b) {
      return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)) < 1e-6;
    };
    for (nn::Param* p : params) {
      for (int i = 0; i < p->w.size(); ++i) {
        REQUIRE(close(p->g.data()[i], fd_entry(&p->w.data()[i])));
      }
    }
    for (int i = 0; i < tgt.size(); ++i) {
      REQUIRE(close(dtgt.data()[i], fd_entry(&tgt.data()[i])));
    }
    for (int i = 0; i < src.size(); ++i) {
      REQUIRE(close(dsrc.data()[i], fd_entry(&src.data()[i])));
    }
    for (int i = 0; i < dim; ++i) {
      REQUIRE(close(dtp(i), fd_entry(&tp(i))));
      REQUIRE(close(dsp(i), fd_entry(&sp(i))));
    }
  }
}
