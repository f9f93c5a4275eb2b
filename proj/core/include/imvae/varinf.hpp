// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"
#include "imvae/nn.hpp"

namespace imvae {

// Diagonal Gaussian described by its mean and standard deviation.
struct GaussianParams {
  Vec mu, sigma;
  static GaussianParams standard(int dim) {
    return {Vec::Zero(dim), Vec::Ones(dim)};
  }
};

constexpr double kSigmaFloor = 1e-6;

// ---------------------------------------------------------------------------
// Gaussian head: two MLPs mapping a summary vector to (mu, sigma) with
// sigma = softplus(s) + floor. The scale net's output bias is initialized so
// sigma starts at exactly 1.
// ---------------------------------------------------------------------------

struct GaussianHeadCache {
  Vec in;
  nn::MlpCache mu_c, sig_c;
  Vec spre;  // pre-softplus scale
};

struct GaussianHead {
  nn::Mlp mu_net, sig_net;

  GaussianHead() = default;
  GaussianHead(const std::string& name, int in, const std::vector<int>& hidden,
               int out)
      : mu_net(name + ".mu", in, hidden, out),
        sig_net(name + ".sigma", in, hidden, out) {}

  int out_dim() const { return mu_net.out_dim(); }
  void collect(nn::ParamList& out) { mu_net.collect(out); sig_net.collect(out); }
  void init(Rng& rng) {
    mu_net.init(rng);
    sig_net.init(rng);
    sig_net.layers.back().b.w.setConstant(nn::softplus_inv(1.0 - kSigmaFloor));
  }

  GaussianParams forward(const Vec& in, GaussianHeadCache& c) const {
    c.in = in;
    GaussianParams p;
    p.mu = mu_net.forward(in, c.mu_c);
    c.spre = sig_net.forward(in, c.sig_c);
    p.sigma = c.spre.unaryExpr([](double v) { return nn::softplus(v) + kSigmaFloor; });
    return p;
  }

  // Returns d(loss)/d(in); accumulates parameter grads.
  Vec backward(const Vec& dmu, const Vec& dsigma, const GaussianHeadCache& c) {
    const Vec dspre = dsigma.cwiseProduct(
        c.spre.unaryExpr([](double v) { return nn::sigmoid(v); }));
    return mu_net.backward(dmu, c.mu_c) + sig_net.backward(dspre, c.sig_c);
  }
};

// Learnable diagonal Gaussian prior (same softplus parameterization).
struct GaussianPrior {
  nn::Param mu, spre;
  GaussianPrior() = default;
  GaussianPrior(const std::string& name, int dim)
      : mu(name + ".mu", dim, 1), spre(name + ".spre", dim, 1) {
    spre.w.setConstant(nn::softplus_inv(1.0 - kSigmaFloor));
  }
  void collect(nn::ParamList& out) { out.push_back(&mu); out.push_back(&spre); }
  GaussianParams params() const {
    GaussianParams p;
    p.mu = mu.w.col(0);
    p.sigma = spre.w.col(0).unaryExpr(
        [](double v) { return nn::softplus(v) + kSigmaFloor; });
    return p;
  }
  void accumulate(const Vec& dmu, const Vec& dsigma) {
    mu.g.col(0) += dmu;
    spre.g.col(0) += dsigma.cwiseProduct(
        spre.w.col(0).unaryExpr([](double v) { return nn::sigmoid(v); }));
  }
};

// ---------------------------------------------------------------------------
// Reparameterization: z = mu + sigma (.) eps.
// ---------------------------------------------------------------------------

inline Vec reparameterize(const GaussianParams& p, const Vec& eps) {
  if (eps.size() != p.mu.size()) {
    throw ConfigError("noise dimension does not match posterior");
  }
  return p.mu + p.sigma.cwiseProduct(eps);
}

inline void reparameterize_backward(const Vec& dz, const Vec& eps, Vec& dmu,
                                    Vec& dsigma) {
  dmu += dz;
  dsigma += dz.cwiseProduct(eps);
}

// ---------------------------------------------------------------------------
// Cross-domain posterior encoder. In attention mode the target-domain
// representation queries the source-domain representation (one multi-head
// pass, no causal mask), the result is mean-pooled over real target
// positions, and a Gaussian head maps it to (mu, sigma). In mlp mode the head
// consumes the concatenated pooled summaries [target; source].
// ---------------------------------------------------------------------------

enum class CrossMode : int { kAttention = 0, kMlp = 1 };

struct CrossCache {
  nn::MhaCache mha;
  Mat out_rows;  // attention-mode row outputs
  Vec head_in;
  GaussianHeadCache head_c;
};

struct CrossEncoder {
  CrossMode mode = CrossMode::kAttention;
  nn::MultiHeadAttention mha;  // attention mode only
  GaussianHead head;

  CrossEncoder() = default;
  CrossEncoder(const std::string& name, CrossMode m, int dim, int heads,
               const std::vector<int>& hidden)
      : mode(m),
        mha(name + ".xattn", dim, heads),
        head(name + ".head", m == CrossMode::kAttention ? dim : 2 * dim, hidden,
             dim) {}

  void collect(nn::ParamList& out) {
    if (mode == CrossMode::kAttention) mha.collect(out);
    head.collect(out);
  }
  void init(Rng& rng) {
    if (mode == CrossMode::kAttention) mha.init(rng);
    head.init(rng);
  }

  GaussianParams forward(const Mat& tgt_rep, const std::vector<std::uint8_t>& tgt_mask,
                         const Vec& tgt_pooled, const Mat& src_rep,
                         const std::vector<std::uint8_t>& src_mask,
                         const Vec& src_pooled, CrossCache& c) const;

  // Accumulates into the row-gradients of both attended representations
  // (attention mode) or the pooled-summary gradients (mlp mode).
  void backward(const Vec& dmu, const Vec& dsigma, CrossCache& c,
                const std::vector<std::uint8_t>& tgt_mask,
                const std::vector<std::uint8_t>& src_mask, Mat& dtgt_rep,
                Mat& dsrc_rep, Vec& dtgt_pooled, Vec& dsrc_pooled);
};

}  // namespace imvae
