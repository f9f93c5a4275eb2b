// SPDX-License-Identifier: Apache-2.0
#include "imvae/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace imvae {

const std::vector<double>& lr_grid() {
  static const std::vector<double> g{3e-4, 4e-4, 5e-4, 6e-4, 7e-4, 8e-4};
  return g;
}

const std::vector<double>& lambda_grid() {
  static const std::vector<double> g{5e-4, 1e-3, 2e-3, 3e-3, 4e-3, 5e-3};
  return g;
}

namespace {
bool on_grid(double v, const std::vector<double>& grid) {
  for (double g : grid) {
    if (std::abs(v - g) <= 1e-12) return true;
  }
  return false;
}
}  // namespace

void RunConfig::validate() const {
  if (batch <= 0) throw ConfigError("run.batch must be positive");
  if (epochs <= 0) throw ConfigError("run.epochs must be positive");
  if (neg_per_pos <= 0) throw ConfigError("run.neg_per_pos must be positive");
  if (!(lr > 0.0)) throw ConfigError("run.lr must be positive");
  if (grad_clip < 0.0) throw ConfigError("run.grad_clip must be >= 0");
  if (lambda_t < 0.0 || lambda_a < 0.0) {
    throw ConfigError("objective weights must be >= 0");
  }
  if (eval_k <= 0 || eval_negatives <= 0) {
    throw ConfigError("eval cutoff and negative count must be positive");
  }
  if (!allow_off_grid) {
    if (!on_grid(lr, lr_grid())) {
      throw ConfigError("run.lr is outside the declared grid");
    }
    if (!on_grid(lambda_t, lambda_grid())) {
      throw ConfigError("run.lambda_t is outside the declared grid");
    }
    if (!on_grid(lambda_a, lambda_grid())) {
      throw ConfigError("run.lambda_a is outside the declared grid");
    }
  }
}

ModelConfig RunConfig::model_config(
    const std::array<int, kNumDomains>& n_items) const {
  ModelConfig mc;
  mc.dim = dim;
  mc.heads = heads;
  mc.T = T;
  mc.Tp = Tp;
  mc.mlp_hidden = mlp_hidden;
  mc.dropout = dropout;
  mc.cross_mode = cross_mode;
  mc.n_items = n_items;
  return mc;
}

ObjectiveWeights RunConfig::weights() const {
  ObjectiveWeights w;
  w.lambda_t = lambda_t;
  w.lambda_a = lambda_a;
  w.drop_info = no_if_ds;
  w.drop_denoise = no_dn;
  return w;
}

EvalPolicy RunConfig::effective_policy() const {
  EvalPolicy p = policy;
  if (no_if_ds && p.fallback == ColdFallback::kAux) {
    p.fallback = ColdFallback::kPrior;
  }
  return p;
}

std::uint64_t RunConfig::hash() const {
  std::ostringstream os;
  os << dim << "|" << heads << "|" << T << "|" << Tp << "|" << dropout << "|"
     << static_cast<int>(cross_mode) << "|" << batch << "|" << epochs << "|"
     << neg_per_pos << "|" << lr << "|" << grad_clip << "|" << lambda_t << "|"
     << lambda_a << "|" << adapt_a << "|" << adapt_b << "|" << no_psg << "|"
     << no_if_ds << "|" << no_dn << "|" << eval_k << "|" << eval_negatives << "|"
     << neg_seed << "|" << seed << "|" << static_cast<int>(policy.fallback) << "|"
     << policy.keep_pseudo << "|";
  for (int h : mlp_hidden) os << h << ",";
  return fnv1a(os.str());
}

namespace {

struct BreakdownSums {
  double recon[2] = {0, 0}, kl_dom[2] = {0, 0}, kl_cross[2] = {0, 0},
         kl_pse[2] = {0, 0}, info[2] = {0, 0}, dn[2] = {0, 0},
         dn_weighted[2] = {0, 0}, lambda_d[2] = {0, 0};
  int n_users = 0, n_recon[2] = {0, 0};

  void add(const UserTerms& t, const std::array<double, 2>& lam) {
    ++n_users;
    for (int d = 0; d < 2; ++d) {
      if (t.has_recon[d]) {
        recon[d] += t.recon[d];
        ++n_recon[d];
      }
      kl_dom[d] += t.kl_dom[d];
      kl_cross[d] += t.kl_cross[d];
      kl_pse[d] += t.kl_pse[d];
      info[d] += t.info[d];
      dn[d] += t.dn[d];
      dn_weighted[d] += lam[d] * t.dn[d];
      lambda_d[d] += lam[d];
    }
  }

  LossBreakdown to_breakdown(const ObjectiveWeights& w) const {
    LossBreakdown b;
    b.n_users = n_users;
    b.n_recon_x = n_recon[0];
    b.n_recon_y = n_recon[1];
    const double inv = n_users ? 1.0 / n_users : 0.0;
    b.recon_x = n_recon[0] ? recon[0] / n_recon[0] : 0.0;
    b.recon_y = n_recon[1] ? recon[1] / n_recon[1] : 0.0;
    b.kl_x = kl_dom[0] * inv;
    b.kl_y = kl_dom[1] * inv;
    b.kl_tx = kl_cross[0] * inv;
    b.kl_ty = kl_cross[1] * inv;
    b.kl_ax = kl_pse[0] * inv;
    b.kl_ay = kl_pse[1] * inv;
    b.info_x = info[0] * inv;
    b.info_y = info[1] * inv;
    b.dn_x = dn[0] * inv;
    b.dn_y = dn[1] * inv;
    b.dn_x_weighted = dn_weighted[0] * inv;
    b.dn_y_weighted = dn_weighted[1] * inv;
    b.lambda_d_x = lambda_d[0] * inv;
    b.lambda_d_y = lambda_d[1] * inv;
    b.total = compose_total(b, w);
    return b;
  }
};

}  // namespace

TrainResult train(const RunConfig& cfg, const ExampleSet& set,
                  const TrainLogFn& log) {
  cfg.validate();
  if (set.Tp != cfg.Tp) {
    throw MissingArtifact(
        "example store lacks pseudo-sequences of length " + std::to_string(cfg.Tp),
        "pseudo");
  }
  const ObjectiveWeights w = cfg.weights();
  const double lt = w.effective_lambda_t();
  const double la = w.effective_lambda_a();
  const EvalPolicy policy = cfg.effective_policy();

  auto model = std::make_unique<Model>(cfg.model_config(set.n_items));
  model->init(cfg.seed);

  nn::Adam adam;
  adam.lr = cfg.lr;
  adam.clip = cfg.grad_clip;
  adam.attach(model->params());

  std::vector<int> train_uids;
  for (const auto& ex : set.users) {
    if (set.split.role[ex.uid] == Role::kTrain) train_uids.push_back(ex.uid);
  }
  if (train_uids.empty()) throw DataError("no training users in example store");

  EvalOptions val_opts;
  val_opts.role = Role::kValid;
  val_opts.k = cfg.eval_k;
  val_opts.n_negatives = cfg.eval_negatives;
  val_opts.neg_seed = cfg.neg_seed;
  val_opts.policy = policy;

  std::vector<int> valid_overlap;
  for (const auto& ex : set.users) {
    if (set.split.role[ex.uid] == Role::kValid && set.split.overlapping[ex.uid]) {
      valid_overlap.push_back(ex.uid);
    }
  }

  TrainResult result;
  std::vector<Mat> best_snap = model->snapshot();
  UserCache cache;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(cfg.seed, "epoch_shuffle",
                                static_cast<std::uint64_t>(epoch)));
    std::vector<int> order = train_uids;
    shuffle_rng.shuffle(order);

    BreakdownSums epoch_sums;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      // First pass: counts for batch normalization. Users whose remaining
      // catalog cannot supply a negative are excluded from reconstruction.
      int n_batch = static_cast<int>(end - start);
      int n_recon[2] = {0, 0};
      for (std::size_t i = start; i < end; ++i) {
        const UserExample& ex = set.at(order[i]);
        for (int d = 0; d < kNumDomains; ++d) {
          const int avail =
              set.n_items[d] - static_cast<int>(ex.interacted[d].size());
          if (ex.has_target(static_cast<Domain>(d)) && avail >= cfg.neg_per_pos) {
            ++n_recon[d];
          }
        }
      }
      nn::zero_grads(model->params());
      for (std::size_t i = start; i < end; ++i) {
        const UserExample& ex = set.at(order[i]);
        Rng user_rng(derive_seed(cfg.seed, "user_pass",
                                 static_cast<std::uint64_t>(epoch),
                                 static_cast<std::uint64_t>(ex.uid)));
        const UserNoise noise = model->make_noise(user_rng);
        model->forward_train(ex, noise, cache);

        std::array<ScoredBatch, kNumDomains> scored;
        UserTerms terms = model->compute_terms(ex, cache);
        std::array<double, 2> lam{0.0, 0.0};
        TermCoeffs coeffs;
        for (int d = 0; d < kNumDomains; ++d) {
          const auto dom = static_cast<Domain>(d);
          lam[d] = adaptive_weight(ex.true_len[d], cfg.T, cfg.adapt_a, cfg.adapt_b);
          if (terms.has_recon[d]) {
            const int avail =
                set.n_items[d] - static_cast<int>(ex.interacted[d].size());
            if (avail < cfg.neg_per_pos) {
              terms.has_recon[d] = false;  // catalog exhausted for this user
            } else {
              const std::vector<int> negs = sample_negatives(
                  ex.interacted[d], set.n_items[d], cfg.neg_per_pos, user_rng);
              scored[d] = model->score_batch(dom, cache.h[d], ex.target[d], negs);
              terms.recon[d] = scored[d].bce.loss;
            }
          }
          coeffs.kl_dom[d] = (1.0 + lt) / n_batch;
          coeffs.kl_cross[d] = 1.0 / n_batch;
          coeffs.kl_pse[d] = 1.0 / n_batch;
          coeffs.info[d] = lt / n_batch;
          coeffs.dn[d] = la * lam[d] / n_batch;
        }
        for (int d = 0; d < kNumDomains; ++d) {
          coeffs.recon[d] =
              terms.has_recon[d] && n_recon[d] > 0 ? (1.0 + lt) / n_recon[d] : 0.0;
        }
        model->backward_train(ex, cache, coeffs, scored);
        epoch_sums.add(terms, lam);
      }
      adam.step(model->params());
      model->enforce_frozen();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = epoch_sums.to_breakdown(w);
    if (!std::isfinite(rec.train.total)) {
      throw NumericFailure("non-finite training loss at epoch " +
                           std::to_string(epoch));
    }

    const EvalReport val = evaluate_model(*model, set, val_opts);
    rec.val_hr = val.overall.hr;
    rec.val_ndcg = val.overall.ndcg;

    // Transfer KL diagnostics on overlapping validation users.
    if (!valid_overlap.empty()) {
      double sums[2] = {0, 0};
      for (int uid : valid_overlap) {
        model->forward_eval(set.at(uid), set.split.cold_domain[uid], policy, cache);
        const UserTerms t = model->compute_terms(set.at(uid), cache);
        for (int d = 0; d < kNumDomains; ++d) sums[d] += t.info[d];
      }
      rec.val_info_x = sums[0] / static_cast<double>(valid_overlap.size());
      rec.val_info_y = sums[1] / static_cast<double>(valid_overlap.size());
    }

    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                      .count();
    result.history.push_back(rec);

    if (result.best_epoch < 0 || rec.val_ndcg > result.best_ndcg) {
      result.best_ndcg = rec.val_ndcg;
      result.best_epoch = epoch;
      best_snap = model->snapshot();
    }
    if (log) {
      std::ostringstream os;
      os.setf(std::ios::fixed);
      os.precision(5);
      os << "epoch " << epoch << " loss " << rec.train.total << " val_ndcg "
         << rec.val_ndcg << " val_hr " << rec.val_hr;
      log(os.str());
    }
  }

  model->restore(best_snap);
  model->enforce_frozen();
  result.model = std::move(model);
  return result;
}

void write_history_jsonl(const std::vector<EpochRecord>& history,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write history: " + path);
  for (const auto& r : history) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["total"] = r.train.total;
    j["recon_x"] = r.train.recon_x;
    j["recon_y"] = r.train.recon_y;
    j["kl_x"] = r.train.kl_x;
    j["kl_y"] = r.train.kl_y;
    j["kl_tx"] = r.train.kl_tx;
    j["kl_ty"] = r.train.kl_ty;
    j["kl_ax"] = r.train.kl_ax;
    j["kl_ay"] = r.train.kl_ay;
    j["info_x"] = r.train.info_x;
    j["info_y"] = r.train.info_y;
    j["dn_x"] = r.train.dn_x;
    j["dn_y"] = r.train.dn_y;
    j["dn_x_weighted"] = r.train.dn_x_weighted;
    j["dn_y_weighted"] = r.train.dn_y_weighted;
    j["lambda_d_x"] = r.train.lambda_d_x;
    j["lambda_d_y"] = r.train.lambda_d_y;
    j["val_hr"] = r.val_hr;
    j["val_ndcg"] = r.val_ndcg;
    j["val_info_x"] = r.val_info_x;
    j["val_info_y"] = r.val_info_y;
    j["seconds"] = r.seconds;
    out << j.dump() << "\n";
  }
}

GridReport grid_search(const RunConfig& base, const GridSpace& space,
                       const ExampleSet& set, const TrainLogFn& log) {
  const std::vector<double>& lrs = space.lrs.empty() ? lr_grid() : space.lrs;
  const std::vector<double>& lts =
      space.lambda_ts.empty() ? lambda_grid() : space.lambda_ts;
  const std::vector<double>& las =
      space.lambda_as.empty() ? lambda_grid() : space.lambda_as;
  if (space.seeds.empty()) throw ConfigError("grid search requires seeds");

  GridReport report;
  const GridCell* best_cell = nullptr;
  for (double lr : lrs) {
    for (double lt : lts) {
      for (double la : las) {
        GridCell cell;
        cell.lr = lr;
        cell.lambda_t = lt;
        cell.lambda_a = la;
        for (std::uint64_t seed : space.seeds) {
          RunConfig cfg = base;
          cfg.lr = lr;
          cfg.lambda_t = lt;
          cfg.lambda_a = la;
          cfg.seed = seed;
          if (log) {
            std::ostringstream os;
            os << "grid lr=" << lr << " lambda_t=" << lt << " lambda_a=" << la
               << " seed=" << seed;
            log(os.str());
          }
          const TrainResult r = train(cfg, set, nullptr);
          cell.ndcg_per_seed.push_back(r.best_ndcg);
        }
        double mean = 0;
        for (double v : cell.ndcg_per_seed) mean += v;
        mean /= static_cast<double>(cell.ndcg_per_seed.size());
        double var = 0;
        for (double v : cell.ndcg_per_seed) var += (v - mean) * (v - mean);
        cell.mean = mean;
        cell.stddev = cell.ndcg_per_seed.size() > 1
                          ? std::sqrt(var / (cell.ndcg_per_seed.size() - 1))
                          : 0.0;
        report.cells.push_back(cell);
      }
    }
  }
  for (const auto& cell : report.cells) {
    if (!best_cell || cell.mean > best_cell->mean) best_cell = &cell;
  }
  report.best = base;
  report.best.lr = best_cell->lr;
  report.best.lambda_t = best_cell->lambda_t;
  report.best.lambda_a = best_cell->lambda_a;
  return report;
}

void write_grid_report(const GridReport& report, const std::string& csv_path,
                       const std::string& json_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw ConfigError("cannot write grid report: " + csv_path);
  csv << "lr,lambda_t,lambda_a,mean_ndcg,std_ndcg,n_seeds\n";
  for (const auto& c : report.cells) {
    csv << c.lr << "," << c.lambda_t << "," << c.lambda_a << "," << c.mean << ","
        << c.stddev << "," << c.ndcg_per_seed.size() << "\n";
  }
  nlohmann::json j;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : report.cells) {
    j["cells"].push_back({{"lr", c.lr},
                          {"lambda_t", c.lambda_t},
                          {"lambda_a", c.lambda_a},
                          {"ndcg_per_seed", c.ndcg_per_seed},
                          {"mean", c.mean},
                          {"stddev", c.stddev}});
  }
  j["best"] = {{"lr", report.best.lr},
               {"lambda_t", report.best.lambda_t},
               {"lambda_a", report.best.lambda_a}};
  std::ofstream js(json_path);
  if (!js) throw ConfigError("cannot write grid report: " + json_path);
  js << j.dump(2) << "\n";
}

}  // namespace imvae
