// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"
#include "imvae/corpus.hpp"
#include "imvae/objective.hpp"
#include "imvae/seqenc.hpp"
#include "imvae/varinf.hpp"

#include <memory>

namespace imvae {

struct ModelConfig {
  int dim = 128;
  int heads = 4;
  int T = 20;
  int Tp = 40;
  std::vector<int> mlp_hidden{32, 64, 32};
  double dropout = 0.2;
  CrossMode cross_mode = CrossMode::kAttention;
  std::array<int, kNumDomains> n_items{0, 0};

  void validate() const;
  std::uint64_t hash() const;
};

// Eval-time routing for users whose history in one domain was removed.
enum class ColdFallback : int {
  kAux = 0,         // transfer latent from the aux posterior mean
  kPrior = 1,       // transfer latent from the prior mean (zero)
  kCrossEmpty = 2,  // run the cross posterior with the empty cold side
};

struct EvalPolicy {
  ColdFallback fallback = ColdFallback::kAux;
  bool keep_pseudo = true;  // keep the recalled pseudo-sequence latent
};

// Pre-drawn stochasticity for one user's training pass: reparameterization
// noise plus dropout masks for the four encoder passes. Forward is a pure
// function of (params, inputs, noise).
struct UserNoise {
  std::array<Vec, kNumDomains> eps_dom, eps_pse, eps_cross;
  std::array<Mat, kNumDomains> da_real, df_real, da_pse, df_pse;
  bool use_dropout = false;
};

// Raw per-user objective terms (unweighted, unreduced).
struct UserTerms {
  std::array<double, kNumDomains> recon{0, 0};
  std::array<double, kNumDomains> kl_dom{0, 0};
  std::array<double, kNumDomains> kl_cross{0, 0};
  std::array<double, kNumDomains> kl_pse{0, 0};
  std::array<double, kNumDomains> info{0, 0};
  std::array<double, kNumDomains> dn{0, 0};
  std::array<bool, kNumDomains> has_recon{false, false};
};

// d(batch total)/d(term) multipliers handed to the backward pass.
struct TermCoeffs {
  std::array<double, kNumDomains> recon{0, 0}, kl_dom{0, 0}, kl_cross{0, 0},
      kl_pse{0, 0}, info{0, 0}, dn{0, 0};
};

struct UserCache {
  std::array<SeqCache, kNumDomains> real, pseudo;
  std::array<CrossCache, kNumDomains> cross_c;
  std::array<GaussianHeadCache, kNumDomains> dom_c, pse_c, aux_c;
  std::array<GaussianParams, kNumDomains> q_dom, q_pse, q_cross, r_aux;
  std::array<Vec, kNumDomains> z_dom, z_pse, z_cross;
  std::array<Vec, kNumDomains> dec_in;
  std::array<nn::MlpCache, kNumDomains> dec_c;
  std::array<Vec, kNumDomains> h;  // decoded user vector per domain
  const UserNoise* noise = nullptr;
};

// Scored candidates for one domain's reconstruction term.
struct ScoredBatch {
  int pos_item = -1;
  std::vector<int> neg_items;
  BceResult bce;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  // The parameter registry points into this object; fix it in place.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  void init(std::uint64_t seed);
  const nn::ParamList& params() { return params_; }
  // Dense copies of all parameter values (cheap best-epoch snapshots).
  std::vector<Mat> snapshot() const;
  void restore(const std::vector<Mat>& snap);
  const ModelConfig& config() const { return cfg_; }
  // Zero PAD embedding rows and their grads (after each optimizer step).
  void enforce_frozen();

  UserNoise make_noise(Rng& rng) const;

  // Training-mode forward (latents sampled with the given noise). Cold
  // routing never applies here; training users are never cold.
  void forward_train(const UserExample& ex, const UserNoise& noise,
                     UserCache& c) const;

  // Deterministic eval-mode forward (z = posterior mean) with cold-start
  // routing for `cold_domain` (kNoDomain for ordinary users).
  void forward_eval(const UserExample& ex, std::uint8_t cold_domain,
                    const EvalPolicy& policy, UserCache& c) const;

  UserTerms compute_terms(const UserExample& ex, const UserCache& c) const;

  double score(Domain d, const Vec& h, int item) const;
  // Scores + BCE for one domain's target against sampled negatives.
  ScoredBatch score_batch(Domain d, const Vec& h, int pos,
                          const std::vector<int>& negs) const;

  // Full backward for one training user. `scored[d]` must be populated for
  // domains with coeffs.recon[d] != 0. Accumulates parameter gradients.
  void backward_train(const UserExample& ex, UserCache& c,
                      const TermCoeffs& coeffs,
                      const std::array<ScoredBatch, kNumDomains>& scored);

  GaussianParams domain_prior(Domain d) const { return prior_dom_[d].params(); }

  // Submodule access (tests, diagnostics).
  SeqEncoder& seq() { return seq_; }
  GaussianHead& enc_dom(Domain d) { return enc_dom_[d]; }
  GaussianHead& enc_pse(Domain d) { return enc_pse_[d]; }
  GaussianHead& enc_aux(Domain d) { return enc_aux_[d]; }
  CrossEncoder& enc_cross(Domain d) { return enc_cross_[d]; }
  nn::Mlp& decoder(Domain d) { return decoder_[d]; }
  GaussianPrior& prior(Domain d) { return prior_dom_[d]; }

  void save(const std::string& path, std::uint64_t config_hash,
            std::uint64_t examples_hash) const;
  struct LoadInfo {
    std::uint64_t config_hash = 0;
    std::uint64_t examples_hash = 0;
  };
  static std::unique_ptr<Model> load(const std::string& path,
                                     LoadInfo* info = nullptr);

 private:
  void forward_common(const UserExample& ex, const UserNoise* noise,
                      UserCache& c) const;

  ModelConfig cfg_;
  SeqEncoder seq_;
  std::array<GaussianHead, kNumDomains> enc_dom_, enc_pse_, enc_aux_;
  std::array<CrossEncoder, kNumDomains> enc_cross_;
  std::array<GaussianPrior, kNumDomains> prior_dom_;
  std::array<nn::Mlp, kNumDomains> decoder_;
  nn::ParamList params_;
};

}  // namespace imvae
