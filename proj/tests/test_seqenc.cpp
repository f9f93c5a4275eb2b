// SPDX-License-Identifier: Apache-2.0
#include "imvae/seqenc.hpp"

#include <doctest.h>

#include <cmath>

using namespace imvae;

namespace {

// Zero-gradient parameters (attention key bias) compare as FD noise against
// ~1e-18, so allow an absolute branch next to the relative tolerance.
bool grads_close(double an, double fd) {
  if (std::abs(an - fd) < 1e-9) return true;
  return std::abs(an - fd) / (std::abs(an) + std::abs(fd)) < 1e-6;
}

SeqEncoder small_encoder(std::uint64_t seed = 5) {
  SeqEncoder enc(/*dim=*/6, /*heads=*/2, /*T=*/4, /*Tp=*/6, /*n_items_x=*/8,
                 /*n_items_y=*/7);
  Rng rng(seed);
  enc.init(rng);
  return enc;
}

}  // namespace

TEST_CASE("masked_mean averages only real rows") {
  Mat rep(3, 2);
  rep << 1, 2, 10, 20, 100, 200;
  const Vec p = masked_mean(rep, {1, 0, 1});
  CHECK(p(0) == doctest::Approx(50.5));
  CHECK(p(1) == doctest::Approx(101.0));
  const Vec z = masked_mean(rep, {0, 0, 0});
  CHECK(z.norm() == 0.0);

  Mat drep = Mat::Zero(3, 2);
  Vec dp(2);
  dp << 1.0, 3.0;
  masked_mean_backward(dp, {1, 0, 1}, drep);
  CHECK(drep(0, 0) == doctest::Approx(0.5));
  CHECK(drep(1, 0) == 0.0);
  CHECK(drep(2, 1) == doctest::Approx(1.5));
}

TEST_CASE("PAD embedding row is zero and stays zero") {
  SeqEncoder enc = small_encoder();
  for (int d = 0; d < kNumDomains; ++d) {
    CHECK(enc.items[d].w.row(0).cwiseAbs().maxCoeff() == 0.0);
  }
  enc.items[0].w.row(0).setConstant(3.0);
  enc.items[0].g.row(0).setConstant(2.0);
  enc.freeze_pad_rows();
  CHECK(enc.items[0].w.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(enc.items[0].g.row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("embed validates length and item range") {
  SeqEncoder enc = small_encoder();
  CHECK_THROWS_AS(enc.embed(kX, SeqKind::kReal, {1, 2, 3}), ConfigError);
  CHECK_THROWS_AS(enc.embed(kX, SeqKind::kReal, {1, 2, 3, 99}), ConfigError);
  CHECK_THROWS_AS(enc.embed(kX, SeqKind::kReal, {1, 2, 3, -1}), ConfigError);
  CHECK_NOTHROW(enc.embed(kX, SeqKind::kReal, {0, 1, 2, 8}));
  CHECK_NOTHROW(enc.embed(kY, SeqKind::kPseudo, {0, 0, 1, 2, 3, 7}));
  // Domain catalogs differ: item 8 exists in X only.
  CHECK_THROWS_AS(enc.embed(kY, SeqKind::kReal, {0, 0, 0, 8}), ConfigError);
}

TEST_CASE("all-PAD sequences pool to the zero vector") {
  SeqEncoder enc = small_encoder();
  SeqCache c;
  const Vec pooled = enc.forward(kX, SeqKind::kReal, {0, 0, 0, 0}, nullptr,
                                 nullptr, c);
  CHECK(pooled.norm() == 0.0);
  CHECK(c.n_real == 0);
}

TEST_CASE("PAD positions do not influence the pooled output") {
  SeqEncoder enc = small_encoder();
  SeqCache c1;
  const Vec base =
      enc.forward(kX, SeqKind::kReal, {0, 0, 2, 5}, nullptr, nullptr, c1);
  // Perturb the position embedding of a PAD slot: invisible as key (mask) and
  // excluded from pooling, so nothing downstream may move.
  enc.pos_real.w.row(1).setConstant(4.0);
  SeqCache c2;
  const Vec pert =
      enc.forward(kX, SeqKind::kReal, {0, 0, 2, 5}, nullptr, nullptr, c2);
  CHECK(base.isApprox(pert, 1e-14));
  // Perturbing a real slot's position row must move the output.
  enc.pos_real.w.row(2).setConstant(4.0);
  SeqCache c3;
  const Vec moved =
      enc.forward(kX, SeqKind::kReal, {0, 0, 2, 5}, nullptr, nullptr, c3);
  CHECK((base - moved).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("causal attention: earlier rows ignore later items") {
  SeqEncoder enc = small_encoder();
  SeqCache c1, c2;
  enc.forward(kX, SeqKind::kReal, {3, 4, 5, 6}, nullptr, nullptr, c1);
  enc.forward(kX, SeqKind::kReal, {3, 4, 5, 1}, nullptr, nullptr, c2);
  for (int r = 0; r < 3; ++r) {
    CHECK(c1.rep.row(r).isApprox(c2.rep.row(r), 1e-14));
  }
  CHECK((c1.rep.row(3) - c2.rep.row(3)).cwiseAbs().maxCoeff() > 1e-10);
}

TEST_CASE("real and pseudo kinds use separate position tables") {
  SeqEncoder enc = small_encoder();
  SeqCache c1;
  const Vec before =
      enc.forward(kX, SeqKind::kReal, {0, 1, 2, 3}, nullptr, nullptr, c1);
  enc.pos_pseudo.w.array() += 0.5;
  SeqCache c2;
  const Vec after =
      enc.forward(kX, SeqKind::kReal, {0, 1, 2, 3}, nullptr, nullptr, c2);
  CHECK(before.isApprox(after, 1e-14));  // real pass untouched
}

TEST_CASE("SeqEncoder backward matches finite differences") {
  SeqEncoder enc = small_encoder(17);
  const std::vector<int> seq{0, 7, 2, 5};
  Rng rng(23);
  const Vec wp = rng.normal_vec(6);
  Mat wrep(4, 6);
  for (int i = 0; i < wrep.size(); ++i) wrep.data()[i] = rng.normal() * 0.5;

  nn::ParamList params;
  enc.collect(params);
  auto loss = [&] {
    SeqCache c;
    const Vec pooled = enc.forward(kX, SeqKind::kReal, seq, nullptr, nullptr, c);
    return wp.dot(pooled) + (c.rep.array() * wrep.array()).sum();
  };
  nn::zero_grads(params);
  SeqCache c;
  enc.forward(kX, SeqKind::kReal, seq, nullptr, nullptr, c);
  enc.backward(wp, wrep, c);

  const double h = 1e-5;
  int checked = 0;
  for (nn::Param* p : params) {
    for (int i = 0; i < p->w.size(); ++i) {
      // PAD rows are a frozen constraint, not free parameters.
      if ((p == &enc.items[0] || p == &enc.items[1]) &&
          i % p->w.rows() == 0) {
        continue;
      }
      const double keep = p->w.data()[i];
      p->w.data()[i] = keep + h;
      const double up = loss();
      p->w.data()[i] = keep - h;
      const double dn = loss();
      p->w.data()[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = p->g.data()[i];
      INFO(p->name, " entry ", i);
      REQUIRE(grads_close(an, fd));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("unused item rows receive no gradient") {
  SeqEncoder enc = small_encoder();
  nn::ParamList params;
  enc.collect(params);
  nn::zero_grads(params);
  SeqCache c;
  enc.forward(kX, SeqKind::kReal, {0, 0, 2, 5}, nullptr, nullptr, c);
  enc.backward(Vec::Ones(6), Mat(), c);
  CHECK(enc.items[0].g.row(0).cwiseAbs().maxCoeff() == 0.0);  // PAD
  CHECK(enc.items[0].g.row(3).cwiseAbs().maxCoeff() == 0.0);  // absent item
  CHECK(enc.items[0].g.row(2).cwiseAbs().maxCoeff() > 0.0);
  CHECK(enc.items[1].g.cwiseAbs().maxCoeff() == 0.0);  // other domain untouched
}
