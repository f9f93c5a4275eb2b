// SPDX-License-Identifier: Apache-2.0
//
// imvae — command-line front end for the cross-domain recommender pipeline.
//
// Stages (each writes its artifacts into --out and skips work that is already
// up to date unless --force is given):
//
//   synth      materialize synthetic ratings CSVs from the config's synth block
//   prepare    ingest ratings, split users, build the example store
//   train-psg  train graph recall embeddings on the unified interaction graph
//   pseudo     attach recall-based pseudo-sequences to the example store
//   train      train the recommender and keep the best validation checkpoint
//   evaluate   rank held-out targets against sampled negatives (test split)
//   ablate     train + evaluate one ablation variant (no_psg|no_if_ds|no_dn)
//   sweep      grid search over (lr, lambda_t, lambda_a) x seeds
//
// Exit codes: 0 success, 2 configuration/data error, 3 missing upstream
// artifact (the message names the stage to run), 4 numeric failure.

#include "imvae/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  bool force = false;
  std::optional<std::uint64_t> seed;       // overrides run.seed
  std::optional<double> density;           // overrides data.density
  std::optional<double> overlap_ratio;     // overrides data.overlap_ratio
  std::optional<std::string> cross_encoder;
  std::string ablation;                    // ablate only
};

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "pipeline config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opt.out_dir, "output directory for artifacts");
  cmd->add_flag("--force", opt.force, "recompute even if artifacts are current");
  cmd->add_option("--seed", opt.seed, "override the training seed (run.seed)");
  cmd->add_option("--density", opt.density,
                 "override data.density (record downsampling, in (0,1])");
  cmd->add_option("--overlap-ratio", opt.overlap_ratio,
                 "override data.overlap_ratio (share of overlapping train "
                 "users kept in both domains)");
  cmd->add_option("--cross-encoder", opt.cross_encoder,
                 "cross-domain encoder form")
      ->check(CLI::IsMember({"attention", "mlp"}));
}

imvae::PipelineConfig load_config(const CliOptions& opt) {
  imvae::PipelineConfig cfg =
      imvae::PipelineConfig::from_json_file(opt.config_path);
  if (opt.seed) cfg.run.seed = *opt.seed;
  if (opt.density) cfg.data.density = *opt.density;
  if (opt.overlap_ratio) cfg.data.overlap_ratio = *opt.overlap_ratio;
  if (opt.cross_encoder) {
    cfg.run.cross_mode = *opt.cross_encoder == "mlp"
                             ? imvae::CrossMode::kMlp
                             : imvae::CrossMode::kAttention;
  }
  return cfg;
}

// Configs that carry a synth block may omit explicit ratings paths; in that
// case the synthetic CSVs are materialized (or reused) before any data stage.
void resolve_data_paths(imvae::PipelineConfig& cfg, const std::string& out_dir) {
  if (cfg.synth && (cfg.data.ratings_x.empty() || cfg.data.ratings_y.empty())) {
    imvae::pipeline::synth(cfg, out_dir, /*force=*/false);
  }
}

void report(const imvae::StageResult& r) {
  if (r.skipped) {
    std::cout << "[skip] " << r.message << "\n";
  } else {
    std::cout << r.message << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"imvae: cross-domain sequential recommender pipeline"};
  app.require_subcommand(1);

  CliOptions opt;
  CLI::App* c_synth = app.add_subcommand("synth", "write synthetic ratings CSVs");
  CLI::App* c_prepare =
      app.add_subcommand("prepare", "ingest ratings and build the example store");
  CLI::App* c_psg =
      app.add_subcommand("train-psg", "train graph recall embeddings");
  CLI::App* c_pseudo =
      app.add_subcommand("pseudo", "attach pseudo-sequences to the store");
  CLI::App* c_train = app.add_subcommand("train", "train the recommender");
  CLI::App* c_eval =
      app.add_subcommand("evaluate", "rank held-out targets (test split)");
  CLI::App* c_ablate =
      app.add_subcommand("ablate", "train and evaluate an ablation variant");
  CLI::App* c_sweep =
      app.add_subcommand("sweep", "grid search over lr and loss weights");
  for (CLI::App* c :
       {c_synth, c_prepare, c_psg, c_pseudo, c_train, c_eval, c_ablate, c_sweep}) {
    add_common(c, opt);
  }
  c_ablate->add_option("--ablation", opt.ablation, "variant to run")
      ->required()
      ->check(CLI::IsMember({"no_psg", "no_if_ds", "no_dn"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto log = [](const std::string& line) {
    std::cout << line << "\n" << std::flush;
  };

  try {
    imvae::PipelineConfig cfg = load_config(opt);
    namespace pl = imvae::pipeline;
    if (c_synth->parsed()) {
      report(pl::synth(cfg, opt.out_dir, opt.force));
      return 0;
    }
    resolve_data_paths(cfg, opt.out_dir);
    if (c_prepare->parsed()) {
      report(pl::prepare(cfg, opt.out_dir, opt.force));
    } else if (c_psg->parsed()) {
      report(pl::train_psg(cfg, opt.out_dir, opt.force, log));
    } else if (c_pseudo->parsed()) {
      report(pl::pseudo(cfg, opt.out_dir, opt.force));
    } else if (c_train->parsed()) {
      report(pl::train(cfg, opt.out_dir, opt.force, log));
    } else if (c_eval->parsed()) {
      report(pl::evaluate(cfg, opt.out_dir, opt.force));
    } else if (c_ablate->parsed()) {
      report(pl::ablate(cfg, opt.out_dir, opt.ablation, opt.force, log));
    } else if (c_sweep->parsed()) {
      report(pl::sweep(cfg, opt.out_dir, opt.force, log));
    }
    return 0;
  } catch (const imvae::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "run `imvae " << e.stage << "` first\n";
    return 3;
  } catch (const imvae::ConfigError& e) {  // includes DataError
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const imvae::NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  }
}
