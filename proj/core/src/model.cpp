// SPDX-License-Identifier: Apache-2.0
#include "imvae/model.hpp"

#include "imvae/detail/binio.hpp"

#include <sstream>

namespace imvae {

namespace {
constexpr char kModelMagic[8] = {'I', 'M', 'V', 'A', 'E', 'M', 'D', '1'};
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

void ModelConfig::validate() const {
  if (dim <= 0) throw ConfigError("model.dim must be positive");
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("model.dim must be divisible by model.heads");
  }
  if (T <= 0 || Tp <= 0) throw ConfigError("sequence windows must be positive");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("model.dropout must be in [0,1)");
  }
  if (mlp_hidden.empty()) throw ConfigError("model.mlp_hidden must be non-empty");
  for (int h : mlp_hidden) {
    if (h <= 0) throw ConfigError("model.mlp_hidden entries must be positive");
  }
  if (n_items[kX] <= 0 || n_items[kY] <= 0) {
    throw ConfigError("model requires positive item counts for both domains");
  }
}

std::uint64_t ModelConfig::hash() const {
  std::ostringstream os;
  os << "dim=" << dim << ";heads=" << heads << ";T=" << T << ";Tp=" << Tp
     << ";dropout=" << dropout << ";cross=" << static_cast<int>(cross_mode)
     << ";nx=" << n_items[kX] << ";ny=" << n_items[kY] << ";hidden=";
  for (int h : mlp_hidden) os << h << ",";
  return fnv1a(os.str());
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  seq_ = SeqEncoder(cfg_.dim, cfg_.heads, cfg_.T, cfg_.Tp, cfg_.n_items[kX],
                    cfg_.n_items[kY]);
  for (int d = 0; d < kNumDomains; ++d) {
    const std::string dn = domain_name(static_cast<Domain>(d));
    enc_dom_[d] = GaussianHead("enc_dom_" + dn, cfg_.dim, cfg_.mlp_hidden, cfg_.dim);
    enc_pse_[d] = GaussianHead("enc_pse_" + dn, cfg_.dim, cfg_.mlp_hidden, cfg_.dim);
    enc_aux_[d] = GaussianHead("enc_aux_" + dn, cfg_.dim, cfg_.mlp_hidden, cfg_.dim);
    enc_cross_[d] = CrossEncoder("enc_cross_" + dn, cfg_.cross_mode, cfg_.dim,
                                 cfg_.heads, cfg_.mlp_hidden);
    prior_dom_[d] = GaussianPrior("prior_" + dn, cfg_.dim);
    decoder_[d] = nn::Mlp("dec_" + dn, 3 * cfg_.dim, cfg_.mlp_hidden, cfg_.dim);
  }
  seq_.collect(params_);
  for (int d = 0; d < kNumDomains; ++d) {
    enc_dom_[d].collect(params_);
    enc_pse_[d].collect(params_);
    enc_aux_[d].collect(params_);
    enc_cross_[d].collect(params_);
    prior_dom_[d].collect(params_);
    decoder_[d].collect(params_);
  }
}

void Model::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "model_init"));
  seq_.init(rng);
  for (int d = 0; d < kNumDomains; ++d) {
    enc_dom_[d].init(rng);
    enc_pse_[d].init(rng);
    enc_aux_[d].init(rng);
    enc_cross_[d].init(rng);
    decoder_[d].init(rng);
    prior_dom_[d].mu.w.setZero();
    prior_dom_[d].spre.w.setConstant(nn::softplus_inv(1.0 - kSigmaFloor));
  }
  enforce_frozen();
}

void Model::enforce_frozen() {
  seq_.freeze_pad_rows();
  for (auto& p : seq_.items) p.g.row(0).setZero();
}

UserNoise Model::make_noise(Rng& rng) const {
  UserNoise n;
  for (int d = 0; d < kNumDomains; ++d) {
    n.eps_dom[d] = rng.normal_vec(cfg_.dim);
    n.eps_pse[d] = rng.normal_vec(cfg_.dim);
    n.eps_cross[d] = rng.normal_vec(cfg_.dim);
  }
  if (cfg_.dropout > 0.0) {
    n.use_dropout = true;
    for (int d = 0; d < kNumDomains; ++d) {
      n.da_real[d] = nn::dropout_mask(cfg_.T, cfg_.dim, cfg_.dropout, rng);
      n.df_real[d] = nn::dropout_mask(cfg_.T, cfg_.dim, cfg_.dropout, rng);
      n.da_pse[d] = nn::dropout_mask(cfg_.Tp, cfg_.dim, cfg_.dropout, rng);
      n.df_pse[d] = nn::dropout_mask(cfg_.Tp, cfg_.dim, cfg_.dropout, rng);
    }
  }
  return n;
}

void Model::forward_common(const UserExample& ex, const UserNoise* noise,
                           UserCache& c) const {
  c.noise = noise;
  const bool drop = noise && noise->use_dropout;
  for (int d = 0; d < kNumDomains; ++d) {
    const auto dom = static_cast<Domain>(d);
    if (static_cast<int>(ex.pseudo[d].size()) != cfg_.Tp) {
      throw MissingArtifact("user example lacks pseudo-sequences", "pseudo");
    }
    seq_.forward(dom, SeqKind::kReal, ex.seq[d],
                 drop ? &noise->da_real[d] : nullptr,
                 drop ? &noise->df_real[d] : nullptr, c.real[d]);
    seq_.forward(dom, SeqKind::kPseudo, ex.pseudo[d],
                 drop ? &noise->da_pse[d] : nullptr,
                 drop ? &noise->df_pse[d] : nullptr, c.pseudo[d]);
  }
  for (int d = 0; d < kNumDomains; ++d) {
    const int o = 1 - d;
    c.q_dom[d] = enc_dom_[d].forward(c.real[d].pooled, c.dom_c[d]);
    c.q_pse[d] = enc_pse_[d].forward(c.pseudo[d].pooled, c.pse_c[d]);
    c.q_cross[d] = enc_cross_[d].forward(c.real[d].rep, c.real[d].mask,
                                         c.real[d].pooled, c.real[o].rep,
                                         c.real[o].mask, c.real[o].pooled,
                                         c.cross_c[d]);
    c.r_aux[d] = enc_aux_[d].forward(c.real[o].pooled, c.aux_c[d]);
  }
}

void Model::forward_train(const UserExample& ex, const UserNoise& noise,
                          UserCache& c) const {
  forward_common(ex, &noise, c);
  for (int d = 0; d < kNumDomains; ++d) {
    c.z_dom[d] = reparameterize(c.q_dom[d], noise.eps_dom[d]);
    c.z_pse[d] = reparameterize(c.q_pse[d], noise.eps_pse[d]);
    c.z_cross[d] = reparameterize(c.q_cross[d], noise.eps_cross[d]);
    c.dec_in[d].resize(3 * cfg_.dim);
    c.dec_in[d] << c.z_dom[d], c.z_cross[d], c.z_pse[d];
    c.h[d] = decoder_[d].forward(c.dec_in[d], c.dec_c[d]);
  }
}

void Model::forward_eval(const UserExample& ex, std::uint8_t cold_domain,
                         const EvalPolicy& policy, UserCache& c) const {
  forward_common(ex, nullptr, c);
  for (int d = 0; d < kNumDomains; ++d) {
    c.z_dom[d] = c.q_dom[d].mu;
    c.z_pse[d] = c.q_pse[d].mu;
    c.z_cross[d] = c.q_cross[d].mu;
  }
  if (cold_domain != kNoDomain) {
    const int cd = cold_domain;
    c.z_dom[cd].setZero();
    if (!policy.keep_pseudo) c.z_pse[cd].setZero();
    switch (policy.fallback) {
      case ColdFallback::kAux:
        c.z_cross[cd] = c.r_aux[cd].mu;
        break;
      case ColdFallback::kPrior:
        c.z_cross[cd].setZero();
        break;
      case ColdFallback::kCrossEmpty:
        break;  // keep q_cross computed over the empty cold side
    }
  }
  for (int d = 0; d < kNumDomains; ++d) {
    c.dec_in[d].resize(3 * cfg_.dim);
    c.dec_in[d] << c.z_dom[d], c.z_cross[d], c.z_pse[d];
    c.h[d] = decoder_[d].forward(c.dec_in[d], c.dec_c[d]);
  }
}

UserTerms Model::compute_terms(const UserExample& ex, const UserCache& c) const {
  UserTerms t;
  for (int d = 0; d < kNumDomains; ++d) {
    const auto n01 = GaussianParams::standard(cfg_.dim);
    t.kl_dom[d] = kl_diag_gaussians(c.q_dom[d], prior_dom_[d].params());
    t.kl_cross[d] = kl_diag_gaussians(c.q_cross[d], n01);
    t.kl_pse[d] = kl_diag_gaussians(c.q_pse[d], n01);
    t.info[d] = kl_diag_gaussians(c.q_cross[d], c.r_aux[d]);
    t.dn[d] = kl_diag_gaussians(c.q_dom[d], c.q_pse[d]);
    t.has_recon[d] = ex.has_target(static_cast<Domain>(d));
  }
  return t;
}

double Model::score(Domain d, const Vec& h, int item) const {
  if (item <= 0 || item > cfg_.n_items[d]) {
    throw ConfigError("score: item id out of range");
  }
  return h.dot(seq_.items[d].w.row(item).transpose());
}

ScoredBatch Model::score_batch(Domain d, const Vec& h, int pos,
                               const std::vector<int>& negs) const {
  ScoredBatch b;
  b.pos_item = pos;
  b.neg_items = negs;
  std::vector<double> neg_scores(negs.size());
  for (std::size_t k = 0; k < negs.size(); ++k) {
    neg_scores[k] = score(d, h, negs[k]);
  }
  b.bce = bce_loss(score(d, h, pos), neg_scores);
  return b;
}

void Model::backward_train(const UserExample& ex, UserCache& c,
                           const TermCoeffs& coeffs,
                           const std::array<ScoredBatch, kNumDomains>& scored) {
  const int dim = cfg_.dim;
  const auto n01 = GaussianParams::standard(dim);
  std::array<Vec, kNumDomains> dmu_dom, dsig_dom, dmu_pse, dsig_pse, dmu_cross,
      dsig_cross, dmu_aux, dsig_aux;
  for (int d = 0; d < kNumDomains; ++d) {
    dmu_dom[d] = Vec::Zero(dim);
    dsig_dom[d] = Vec::Zero(dim);
    dmu_pse[d] = Vec::Zero(dim);
    dsig_pse[d] = Vec::Zero(dim);
    dmu_cross[d] = Vec::Zero(dim);
    dsig_cross[d] = Vec::Zero(dim);
    dmu_aux[d] = Vec::Zero(dim);
    dsig_aux[d] = Vec::Zero(dim);
  }

  // Reconstruction: scores -> decoder -> latents (plus item-row grads).
  for (int d = 0; d < kNumDomains; ++d) {
    const double cr = coeffs.recon[d];
    if (cr == 0.0 || !ex.has_target(d == 0 ? kX : kY)) continue;
    const ScoredBatch& sb = scored[d];
    nn::Param& table = seq_.items[d];
    Vec dh = Vec::Zero(dim);
    const double dpos = cr * sb.bce.dpos;
    if (dpos != 0.0) {
      dh += dpos * table.w.row(sb.pos_item).transpose();
      table.g.row(sb.pos_item) += dpos * c.h[d].transpose();
    }
    for (std::size_t k = 0; k < sb.neg_items.size(); ++k) {
      const double dneg = cr * sb.bce.dneg[k];
      if (dneg == 0.0) continue;
      dh += dneg * table.w.row(sb.neg_items[k]).transpose();
      table.g.row(sb.neg_items[k]) += dneg * c.h[d].transpose();
    }
    const Vec ddec = decoder_[d].backward(dh, c.dec_c[d]);
    reparameterize_backward(ddec.segment(0, dim), c.noise->eps_dom[d], dmu_dom[d],
                            dsig_dom[d]);
    reparameterize_backward(ddec.segment(dim, dim), c.noise->eps_cross[d],
                            dmu_cross[d], dsig_cross[d]);
    reparameterize_backward(ddec.segment(2 * dim, dim), c.noise->eps_pse[d],
                            dmu_pse[d], dsig_pse[d]);
  }

  // KL terms.
  for (int d = 0; d < kNumDomains; ++d) {
    if (coeffs.kl_dom[d] != 0.0) {
      Vec dp_mu = Vec::Zero(dim), dp_sig = Vec::Zero(dim);
      kl_backward(c.q_dom[d], prior_dom_[d].params(), coeffs.kl_dom[d],
                  &dmu_dom[d], &dsig_dom[d], &dp_mu, &dp_sig);
      prior_dom_[d].accumulate(dp_mu, dp_sig);
    }
    if (coeffs.kl_cross[d] != 0.0) {
      kl_backward(c.q_cross[d], n01, coeffs.kl_cross[d], &dmu_cross[d],
                  &dsig_cross[d], nullptr, nullptr);
    }
    if (coeffs.kl_pse[d] != 0.0) {
      kl_backward(c.q_pse[d], n01, coeffs.kl_pse[d], &dmu_pse[d], &dsig_pse[d],
                  nullptr, nullptr);
    }
    if (coeffs.info[d] != 0.0) {
      kl_backward(c.q_cross[d], c.r_aux[d], coeffs.info[d], &dmu_cross[d],
                  &dsig_cross[d], &dmu_aux[d], &dsig_aux[d]);
    }
    if (coeffs.dn[d] != 0.0) {
      kl_backward(c.q_dom[d], c.q_pse[d], coeffs.dn[d], &dmu_dom[d], &dsig_dom[d],
                  &dmu_pse[d], &dsig_pse[d]);
    }
  }

  // Heads -> pooled summaries / attended rows.
  std::array<Vec, kNumDomains> dpooled_real, dpooled_pse;
  std::array<Mat, kNumDomains> drep_real;
  for (int d = 0; d < kNumDomains; ++d) {
    dpooled_real[d] = Vec::Zero(dim);
    dpooled_pse[d] = Vec::Zero(dim);
    drep_real[d] = Mat::Zero(cfg_.T, dim);
  }
  for (int d = 0; d < kNumDomains; ++d) {
    const int o = 1 - d;
    dpooled_real[d] += enc_dom_[d].backward(dmu_dom[d], dsig_dom[d], c.dom_c[d]);
    dpooled_pse[d] += enc_pse_[d].backward(dmu_pse[d], dsig_pse[d], c.pse_c[d]);
    dpooled_real[o] += enc_aux_[d].backward(dmu_aux[d], dsig_aux[d], c.aux_c[d]);
    enc_cross_[d].backward(dmu_cross[d], dsig_cross[d], c.cross_c[d],
                           c.real[d].mask, c.real[o].mask, drep_real[d],
                           drep_real[o], dpooled_real[d], dpooled_real[o]);
  }
  for (int d = 0; d < kNumDomains; ++d) {
    seq_.backward(dpooled_real[d], drep_real[d], c.real[d]);
    seq_.backward(dpooled_pse[d], Mat(), c.pseudo[d]);
  }
  // PAD embedding rows stay frozen.
  for (auto& p : seq_.items) p.g.row(0).setZero();
}

void Model::save(const std::string& path, std::uint64_t config_hash,
                 std::uint64_t examples_hash) const {
  detail::BinWriter w(path, kModelMagic, kModelVersion);
  w.u64(config_hash);
  w.u64(examples_hash);
  w.i32(cfg_.dim);
  w.i32(cfg_.heads);
  w.i32(cfg_.T);
  w.i32(cfg_.Tp);
  w.f64(cfg_.dropout);
  w.i32(static_cast<int>(cfg_.cross_mode));
  w.i32(cfg_.n_items[kX]);
  w.i32(cfg_.n_items[kY]);
  w.vec_i32(cfg_.mlp_hidden);
  w.u64(params_.size());
  for (const nn::Param* p : params_) {
    w.str(p->name);
    w.mat(p->w);
  }
  w.close();
}

std::unique_ptr<Model> Model::load(const std::string& path, LoadInfo* info) {
  detail::BinReader r(path, kModelMagic, kModelVersion, "train");
  LoadInfo li;
  li.config_hash = r.u64();
  li.examples_hash = r.u64();
  ModelConfig cfg;
  cfg.dim = r.i32();
  cfg.heads = r.i32();
  cfg.T = r.i32();
  cfg.Tp = r.i32();
  cfg.dropout = r.f64();
  cfg.cross_mode = static_cast<CrossMode>(r.i32());
  cfg.n_items[kX] = r.i32();
  cfg.n_items[kY] = r.i32();
  cfg.mlp_hidden = r.vec_i32();
  auto model = std::make_unique<Model>(cfg);
  const std::uint64_t n = r.u64();
  if (n != model->params_.size()) {
    throw DataError("checkpoint parameter count mismatch in " + path);
  }
  for (nn::Param* p : model->params_) {
    const std::string name = r.str();
    if (name != p->name) {
      throw DataError("checkpoint parameter order mismatch at " + name);
    }
    Mat m = r.mat();
    if (m.rows() != p->w.rows() || m.cols() != p->w.cols()) {
      throw DataError("checkpoint parameter shape mismatch at " + name);
    }
    p->w = std::move(m);
  }
  if (info) *info = li;
  return model;
}

std::vector<Mat> Model::snapshot() const {
  std::vector<Mat> snap;
  snap.reserve(params_.size());
  for (const nn::Param* p : params_) snap.push_back(p->w);
  return snap;
}

void Model::restore(const std::vector<Mat>& snap) {
  if (snap.size() != params_.size()) {
    throw ConfigError("snapshot does not match parameter registry");
  }
  for (std::size_t i = 0; i < snap.size(); ++i) params_[i]->w = snap[i];
}

}  // namespace imvae
