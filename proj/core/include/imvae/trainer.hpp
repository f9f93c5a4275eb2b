// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"
#include "imvae/corpus.hpp"
#include "imvae/evalharness.hpp"
#include "imvae/model.hpp"

#include <functional>
#include <memory>

namespace imvae {

// Declared hyperparameter grids; configs outside them are rejected unless
// explicitly allowed (experimental escape hatch).
const std::vector<double>& lr_grid();      // 3e-4 .. 8e-4 step 1e-4
const std::vector<double>& lambda_grid();  // 5e-4, 1e-3, 2e-3, 3e-3, 4e-3, 5e-3

struct RunConfig {
  // Model shape.
  int dim = 128;
  int heads = 4;
  int T = 20;
  int Tp = 40;
  std::vector<int> mlp_hidden{32, 64, 32};
  double dropout = 0.2;
  CrossMode cross_mode = CrossMode::kAttention;

  // Optimization.
  int batch = 512;
  int epochs = 100;
  int neg_per_pos = 1;
  double lr = 5e-4;
  double grad_clip = 5.0;

  // Objective.
  double lambda_t = 1e-3;
  double lambda_a = 5e-3;
  double adapt_a = 0.8, adapt_b = 0.8;

  // Ablations.
  bool no_psg = false;    // pseudo-sequences replaced upstream by random draws
  bool no_if_ds = false;  // information-filter machinery off (lambda_t -> 0)
  bool no_dn = false;     // denoising machinery off (lambda_a -> 0)

  // Evaluation during training.
  int eval_k = 10;
  int eval_negatives = 999;
  std::uint64_t neg_seed = 97;
  EvalPolicy policy;

  std::uint64_t seed = 1;
  bool allow_off_grid = false;

  void validate() const;
  ModelConfig model_config(const std::array<int, kNumDomains>& n_items) const;
  ObjectiveWeights weights() const;
  // Eval policy with ablation-aware cold fallback: without trained aux
  // encoders, cold users fall back to the prior mean.
  EvalPolicy effective_policy() const;
  std::uint64_t hash() const;
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown train;
  double val_hr = 0.0, val_ndcg = 0.0;
  double val_info_x = 0.0, val_info_y = 0.0;  // KL(cross || aux) on valid overlap
  double seconds = 0.0;
};

struct TrainResult {
  std::unique_ptr<Model> model;  // best-validation checkpoint
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_ndcg = 0.0;
};

using TrainLogFn = std::function<void(const std::string&)>;

TrainResult train(const RunConfig& cfg, const ExampleSet& set,
                  const TrainLogFn& log = nullptr);

void write_history_jsonl(const std::vector<EpochRecord>& history,
                         const std::string& path);

// ---------------------------------------------------------------------------
// Grid search over (lr, lambda_t, lambda_a) x seeds; cells are scored by the
// best validation NDCG of each run, averaged over seeds. Ties prefer smaller
// lr, then smaller lambda_t, then smaller lambda_a.
// ---------------------------------------------------------------------------

struct GridSpace {
  std::vector<double> lrs;        // empty -> full declared grid
  std::vector<double> lambda_ts;  // empty -> full declared grid
  std::vector<double> lambda_as;  // empty -> full declared grid
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct GridCell {
  double lr = 0, lambda_t = 0, lambda_a = 0;
  std::vector<double> ndcg_per_seed;
  double mean = 0, stddev = 0;
};

struct GridReport {
  std::vector<GridCell> cells;
  RunConfig best;
};

GridReport grid_search(const RunConfig& base, const GridSpace& space,
                       const ExampleSet& set, const TrainLogFn& log = nullptr);

void write_grid_report(const GridReport& report, const std::string& csv_path,
                       const std::string& json_path);

}  // namespace imvae
