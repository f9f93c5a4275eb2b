// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"
#include "imvae/psg.hpp"
#include "imvae/synthdata.hpp"
#include "imvae/trainer.hpp"

#include <functional>
#include <optional>
#include <string>

namespace imvae {

// ---------------------------------------------------------------------------
// End-to-end run configuration (JSON file). Sections: data, psg, run, and the
// optional synth/sweep blocks. Unknown keys are rejected.
// ---------------------------------------------------------------------------

struct DataConfig {
  std::string ratings_x, ratings_y;
  double density = 1.0;        // record-level downsampling factor
  double overlap_ratio = 1.0;  // K_o: share of overlapping train users kept
  double cold_fraction = 0.0;  // K_cs: share of overlap valid/test users made cold
  SplitRatios ratios;
  std::uint64_t seed = 11;
};

struct PipelineConfig {
  DataConfig data;
  PsgConfig psg;
  RunConfig run;
  std::optional<SynthConfig> synth;
  GridSpace sweep;

  static PipelineConfig from_json_file(const std::string& path);
  static PipelineConfig from_json_text(const std::string& text);
  std::string to_json_text() const;

  // Section fingerprints used to chain artifacts between stages.
  std::uint64_t prepare_hash() const;  // data section + window T
  std::uint64_t psg_hash() const;
  std::uint64_t run_hash() const;
  // Fingerprint of the pseudo-sequence inputs consumed by training.
  std::uint64_t pseudo_hash(std::uint64_t corpus_hash) const;

  void validate() const;
};

// Artifact filenames inside the output directory.
namespace artifacts {
inline constexpr const char* kResolvedConfig = "resolved_config.json";
inline constexpr const char* kExamples = "examples.bin";
inline constexpr const char* kSplitManifest = "split_manifest.json";
inline constexpr const char* kPsg = "psg.bin";
inline constexpr const char* kPsgStats = "psg_stats.json";
inline constexpr const char* kPseudo = "pseudo.bin";
inline constexpr const char* kPseudoMeta = "pseudo_meta.json";
inline constexpr const char* kModel = "model.bin";
inline constexpr const char* kHistory = "history.jsonl";
inline constexpr const char* kEvalReport = "eval_report.json";
inline constexpr const char* kEvalTable = "eval_table.txt";
inline constexpr const char* kSweepCsv = "sweep_summary.csv";
inline constexpr const char* kSweepJson = "sweep_summary.json";
}  // namespace artifacts

struct StageResult {
  bool skipped = false;
  std::string message;
};

using StageLogFn = std::function<void(const std::string&)>;

namespace pipeline {

// Materializes synthetic ratings CSVs and rewrites the config's data paths.
StageResult synth(PipelineConfig& cfg, const std::string& out_dir, bool force);

StageResult prepare(const PipelineConfig& cfg, const std::string& out_dir,
                    bool force);
StageResult train_psg(const PipelineConfig& cfg, const std::string& out_dir,
                      bool force, const StageLogFn& log = nullptr);
StageResult pseudo(const PipelineConfig& cfg, const std::string& out_dir,
                   bool force);
StageResult train(const PipelineConfig& cfg, const std::string& out_dir,
                  bool force, const StageLogFn& log = nullptr);
StageResult evaluate(const PipelineConfig& cfg, const std::string& out_dir,
                     bool force);
// Trains and evaluates one ablation variant; writes model_<name>.bin and
// eval_<name>.json/txt. `name` is one of no_psg, no_if_ds, no_dn.
StageResult ablate(const PipelineConfig& cfg, const std::string& out_dir,
                   const std::string& name, bool force,
                   const StageLogFn& log = nullptr);
StageResult sweep(const PipelineConfig& cfg, const std::string& out_dir,
                  bool force, const StageLogFn& log = nullptr);

// Shared helpers (exposed for tests).
ExampleSet load_training_inputs(const PipelineConfig& cfg,
                                const std::string& out_dir, bool no_psg);
EvalReport evaluate_checkpoint(const PipelineConfig& cfg,
                               const std::string& out_dir,
                               const std::string& model_file, bool no_psg);

}  // namespace pipeline

}  // namespace imvae
