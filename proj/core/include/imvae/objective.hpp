// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"
#include "imvae/varinf.hpp"

namespace imvae {

// ---------------------------------------------------------------------------
// KL divergence between diagonal Gaussians, closed form:
//   KL(q||p) = sum_i [ log(p_s/q_s) + (q_s^2 + (q_m - p_m)^2) / (2 p_s^2) - 1/2 ]
// ---------------------------------------------------------------------------

double kl_diag_gaussians(const GaussianParams& q, const GaussianParams& p);

// Accumulates scale * d(KL)/d(...) into the four gradient vectors; null
// pointers skip that side (e.g. a fixed prior).
void kl_backward(const GaussianParams& q, const GaussianParams& p, double scale,
                 Vec* dq_mu, Vec* dq_sigma, Vec* dp_mu, Vec* dp_sigma);

// ---------------------------------------------------------------------------
// Binary cross-entropy over scored candidates. The positive's probability is
// sigmoid(score); negatives contribute through 1 - sigmoid(score), averaged.
// Probabilities are clamped to [1e-7, 1 - 1e-7]; clamped terms carry zero
// gradient.
// ---------------------------------------------------------------------------

constexpr double kProbClamp = 1e-7;

struct BceResult {
  double loss = 0.0;
  double dpos = 0.0;               // d(loss)/d(pos score)
  std::vector<double> dneg;        // d(loss)/d(neg score k)
};

BceResult bce_loss(double pos_score, const std::vector<double>& neg_scores);

// ---------------------------------------------------------------------------
// Length-adaptive denoising weight: lambda_d(L) = exp(a L / T) - b.
// L is the user's true sequence length, T the window size; L > T is an error.
// ---------------------------------------------------------------------------

double adaptive_weight(int L, int T, double a = 0.8, double b = 0.8);

// ---------------------------------------------------------------------------
// Batch-level loss bookkeeping. All entries are means over the users that
// contribute to the term: reconstruction over users holding a target in that
// domain, everything else over all users in the batch. `dn_*_weighted` stores
// the mean of lambda_d * KL so the composed total is an exact audit of what
// was optimized (the weight varies per user).
// ---------------------------------------------------------------------------

struct LossBreakdown {
  double recon_x = 0, recon_y = 0;
  double kl_x = 0, kl_y = 0;          // KL(q(z|seq) || domain prior)
  double kl_tx = 0, kl_ty = 0;        // KL(cross posterior || N(0,I))
  double kl_ax = 0, kl_ay = 0;        // KL(pseudo posterior || N(0,I))
  double info_x = 0, info_y = 0;      // KL(cross posterior || aux posterior)
  double dn_x = 0, dn_y = 0;                    // unweighted KL(q || q_a)
  double dn_x_weighted = 0, dn_y_weighted = 0;  // mean lambda_d * KL(q || q_a)
  double lambda_d_x = 0, lambda_d_y = 0;        // mean adaptive weight
  double total = 0;
  int n_users = 0, n_recon_x = 0, n_recon_y = 0;
};

struct ObjectiveWeights {
  double lambda_t = 1e-3;
  double lambda_a = 5e-3;
  bool drop_info = false;      // excludes the lambda_t-scaled machinery
  bool drop_denoise = false;   // excludes the lambda_a-scaled machinery

  double effective_lambda_t() const { return drop_info ? 0.0 : lambda_t; }
  double effective_lambda_a() const { return drop_denoise ? 0.0 : lambda_a; }
};

// Minimization-form total:
//   (1 + lt) * (recon + domain KLs) + cross KLs + pseudo KLs
//   + lt * info terms + la * weighted denoise terms
// Dropped machinery stays logged in the breakdown but contributes zero.
double compose_total(const LossBreakdown& b, const ObjectiveWeights& w);

}  // namespace imvae
