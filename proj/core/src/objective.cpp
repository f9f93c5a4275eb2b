// SPDX-License-Identifier: Apache-2.0
#include "imvae/objective.hpp"

#include <cmath>

namespace imvae {

double kl_diag_gaussians(const GaussianParams& q, const GaussianParams& p) {
  if (q.mu.size() != p.mu.size() || q.sigma.size() != p.sigma.size() ||
      q.mu.size() != q.sigma.size()) {
    throw ConfigError("KL arguments have mismatched dimensions");
  }
  if ((q.sigma.array() <= 0).any() || (p.sigma.array() <= 0).any()) {
    throw ConfigError("KL requires strictly positive scales");
  }
  const auto qs2 = q.sigma.array().square();
  const auto ps2 = p.sigma.array().square();
  const auto diff2 = (q.mu - p.mu).array().square();
  return (p.sigma.array().log() - q.sigma.array().log() +
          (qs2 + diff2) / (2.0 * ps2) - 0.5)
      .sum();
}

void kl_backward(const GaussianParams& q, const GaussianParams& p, double scale,
                 Vec* dq_mu, Vec* dq_sigma, Vec* dp_mu, Vec* dp_sigma) {
  const auto ps2 = p.sigma.array().square();
  const auto diff = (q.mu - p.mu).array();
  if (dq_mu) dq_mu->array() += scale * diff / ps2;
  if (dq_sigma) {
    dq_sigma->array() +=
        scale * (q.sigma.array() / ps2 - q.sigma.array().inverse());
  }
  if (dp_mu) dp_mu->array() -= scale * diff / ps2;
  if (dp_sigma) {
    dp_sigma->array() +=
        scale * (p.sigma.array().inverse() -
                 (q.sigma.array().square() + diff.square()) / p.sigma.array().cube());
  }
}

BceResult bce_loss(double pos_score, const std::vector<double>& neg_scores) {
  BceResult r;
  r.dneg.assign(neg_scores.size(), 0.0);
  const double p_pos = nn::sigmoid(pos_score);
  if (p_pos < kProbClamp) {
    r.loss += -std::log(kProbClamp);  // clamped: no gradient
  } else {
    r.loss += -std::log(p_pos);
    r.dpos = p_pos - 1.0;
  }
  // Negatives enter with full weight each (the loss is a sum over all scored
  // samples); the batch mean over users is applied by the caller.
  for (std::size_t k = 0; k < neg_scores.size(); ++k) {
    const double p_neg = nn::sigmoid(neg_scores[k]);
    if (p_neg > 1.0 - kProbClamp) {
      r.loss += -std::log(kProbClamp);
    } else {
      r.loss += -std::log1p(-p_neg);
      r.dneg[k] = p_neg;
    }
  }
  return r;
}

double adaptive_weight(int L, int T, double a, double b) {
  if (T <= 0) throw ConfigError("adaptive weight: window T must be positive");
  if (L < 0 || L > T) {
    throw ConfigError("adaptive weight: length " + std::to_string(L) +
                      " outside [0, " + std::to_string(T) + "]");
  }
  return std::exp(a * static_cast<double>(L) / static_cast<double>(T)) - b;
}

double compose_total(const LossBreakdown& b, const ObjectiveWeights& w) {
  const double lt = w.effective_lambda_t();
  const double la = w.effective_lambda_a();
  return (1.0 + lt) * (b.recon_x + b.recon_y + b.kl_x + b.kl_y) +
         b.kl_tx + b.kl_ty + b.kl_ax + b.kl_ay +
         lt * (b.info_x + b.info_y) +
         la * (b.dn_x_weighted + b.dn_y_weighted);
}

}  // namespace imvae
