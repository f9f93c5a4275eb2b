// SPDX-License-Identifier: Apache-2.0
#include "imvae/pipeline.hpp"

#include "imvae/evalharness.hpp"
#include "imvae/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace imvae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& section,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key '" + key + "' in section " + section);
    }
  }
}

json read_json_file(const std::string& path, const std::string& producer) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("missing file: " + path, producer);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write: " + path);
  out << j.dump(2) << "\n";
}

CrossMode parse_cross_mode(const std::string& s) {
  if (s == "attention") return CrossMode::kAttention;
  if (s == "mlp") return CrossMode::kMlp;
  throw ConfigError("cross_encoder must be 'attention' or 'mlp', got '" + s + "'");
}

std::string cross_mode_name(CrossMode m) {
  return m == CrossMode::kAttention ? "attention" : "mlp";
}

ColdFallback parse_fallback(const std::string& s) {
  if (s == "aux") return ColdFallback::kAux;
  if (s == "prior") return ColdFallback::kPrior;
  if (s == "cross_empty") return ColdFallback::kCrossEmpty;
  throw ConfigError("cold_fallback must be aux|prior|cross_empty, got '" + s + "'");
}

std::string fallback_name(ColdFallback f) {
  switch (f) {
    case ColdFallback::kAux: return "aux";
    case ColdFallback::kPrior: return "prior";
    case ColdFallback::kCrossEmpty: return "cross_empty";
  }
  return "aux";
}

}  // namespace

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  reject_unknown(j, "(top level)", {"data", "psg", "run", "synth", "sweep"});
  PipelineConfig cfg;

  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, "data",
                   {"ratings_x", "ratings_y", "density", "overlap_ratio",
                    "cold_fraction", "ratios", "seed"});
    cfg.data.ratings_x = d.value("ratings_x", "");
    cfg.data.ratings_y = d.value("ratings_y", "");
    cfg.data.density = d.value("density", 1.0);
    cfg.data.overlap_ratio = d.value("overlap_ratio", 1.0);
    cfg.data.cold_fraction = d.value("cold_fraction", 0.0);
    if (d.contains("ratios")) {
      const json& r = d["ratios"];
      reject_unknown(r, "data.ratios", {"train", "valid", "test"});
      cfg.data.ratios.train = r.value("train", 0.8);
      cfg.data.ratios.valid = r.value("valid", 0.1);
      cfg.data.ratios.test = r.value("test", 0.1);
    }
    cfg.data.seed = d.value("seed", std::uint64_t{11});
  }

  if (j.contains("psg")) {
    const json& p = j["psg"];
    reject_unknown(p, "psg",
                   {"dim", "layers", "epochs", "lr", "weight_decay",
                    "val_fraction", "eval_every", "seed"});
    cfg.psg.dim = p.value("dim", cfg.psg.dim);
    cfg.psg.layers = p.value("layers", cfg.psg.layers);
    cfg.psg.epochs = p.value("epochs", cfg.psg.epochs);
    cfg.psg.lr = p.value("lr", cfg.psg.lr);
    cfg.psg.weight_decay = p.value("weight_decay", cfg.psg.weight_decay);
    cfg.psg.val_fraction = p.value("val_fraction", cfg.psg.val_fraction);
    cfg.psg.eval_every = p.value("eval_every", cfg.psg.eval_every);
    cfg.psg.seed = p.value("seed", cfg.psg.seed);
  }

  if (j.contains("run")) {
    const json& r = j["run"];
    reject_unknown(
        r, "run",
        {"dim", "heads", "T", "Tp", "mlp_hidden", "dropout", "cross_encoder",
         "batch", "epochs", "neg_per_pos", "lr", "grad_clip", "lambda_t",
         "lambda_a", "adapt_a", "adapt_b", "no_psg", "no_if_ds", "no_dn",
         "eval_k", "eval_negatives", "neg_seed", "seed", "allow_off_grid",
         "cold_fallback", "cold_keep_pseudo"});
    auto& run = cfg.run;
    run.dim = r.value("dim", run.dim);
    run.heads = r.value("heads", run.heads);
    run.T = r.value("T", run.T);
    run.Tp = r.value("Tp", run.Tp);
    if (r.contains("mlp_hidden")) {
      run.mlp_hidden = r["mlp_hidden"].get<std::vector<int>>();
    }
    run.dropout = r.value("dropout", run.dropout);
    if (r.contains("cross_encoder")) {
      run.cross_mode = parse_cross_mode(r["cross_encoder"].get<std::string>());
    }
    run.batch = r.value("batch", run.batch);
    run.epochs = r.value("epochs", run.epochs);
    run.neg_per_pos = r.value("neg_per_pos", run.neg_per_pos);
    run.lr = r.value("lr", run.lr);
    run.grad_clip = r.value("grad_clip", run.grad_clip);
    run.lambda_t = r.value("lambda_t", run.lambda_t);
    run.lambda_a = r.value("lambda_a", run.lambda_a);
    run.adapt_a = r.value("adapt_a", run.adapt_a);
    run.adapt_b = r.value("adapt_b", run.adapt_b);
    run.no_psg = r.value("no_psg", false);
    run.no_if_ds = r.value("no_if_ds", false);
    run.no_dn = r.value("no_dn", false);
    run.eval_k = r.value("eval_k", run.eval_k);
    run.eval_negatives = r.value("eval_negatives", run.eval_negatives);
    run.neg_seed = r.value("neg_seed", run.neg_seed);
    run.seed = r.value("seed", run.seed);
    run.allow_off_grid = r.value("allow_off_grid", false);
    if (r.contains("cold_fallback")) {
      run.policy.fallback = parse_fallback(r["cold_fallback"].get<std::string>());
    }
    run.policy.keep_pseudo = r.value("cold_keep_pseudo", true);
  }

  if (j.contains("synth")) {
    const json& s = j["synth"];
    reject_unknown(s, "synth",
                   {"n_users", "overlap_frac", "n_items", "n_clusters",
                    "p_cluster", "p_specific", "size_ratio", "p_fresh",
                    "geom_p", "min_len", "max_len", "seed"});
    SynthConfig sc;
    sc.n_users = s.value("n_users", sc.n_users);
    sc.overlap_frac = s.value("overlap_frac", sc.overlap_frac);
    sc.n_items = s.value("n_items", sc.n_items);
    sc.n_clusters = s.value("n_clusters", sc.n_clusters);
    sc.p_cluster = s.value("p_cluster", sc.p_cluster);
    sc.p_specific = s.value("p_specific", sc.p_specific);
    sc.size_ratio = s.value("size_ratio", sc.size_ratio);
    sc.p_fresh = s.value("p_fresh", sc.p_fresh);
    sc.geom_p = s.value("geom_p", sc.geom_p);
    sc.min_len = s.value("min_len", sc.min_len);
    sc.max_len = s.value("max_len", sc.max_len);
    sc.seed = s.value("seed", sc.seed);
    cfg.synth = sc;
  }

  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    reject_unknown(s, "sweep", {"lrs", "lambda_ts", "lambda_as", "seeds"});
    if (s.contains("lrs")) cfg.sweep.lrs = s["lrs"].get<std::vector<double>>();
    if (s.contains("lambda_ts")) {
      cfg.sweep.lambda_ts = s["lambda_ts"].get<std::vector<double>>();
    }
    if (s.contains("lambda_as")) {
      cfg.sweep.lambda_as = s["lambda_as"].get<std::vector<double>>();
    }
    if (s.contains("seeds")) {
      cfg.sweep.seeds = s["seeds"].get<std::vector<std::uint64_t>>();
    }
  }
  return cfg;
}

std::string PipelineConfig::to_json_text() const {
  json j;
  j["data"] = {{"ratings_x", data.ratings_x},
               {"ratings_y", data.ratings_y},
               {"density", data.density},
               {"overlap_ratio", data.overlap_ratio},
               {"cold_fraction", data.cold_fraction},
               {"ratios",
                {{"train", data.ratios.train},
                 {"valid", data.ratios.valid},
                 {"test", data.ratios.test}}},
               {"seed", data.seed}};
  j["psg"] = {{"dim", psg.dim},
              {"layers", psg.layers},
              {"epochs", psg.epochs},
              {"lr", psg.lr},
              {"weight_decay", psg.weight_decay},
              {"val_fraction", psg.val_fraction},
              {"eval_every", psg.eval_every},
              {"seed", psg.seed}};
  j["run"] = {{"dim", run.dim},
              {"heads", run.heads},
              {"T", run.T},
              {"Tp", run.Tp},
              {"mlp_hidden", run.mlp_hidden},
              {"dropout", run.dropout},
              {"cross_encoder", cross_mode_name(run.cross_mode)},
              {"batch", run.batch},
              {"epochs", run.epochs},
              {"neg_per_pos", run.neg_per_pos},
              {"lr", run.lr},
              {"grad_clip", run.grad_clip},
              {"lambda_t", run.lambda_t},
              {"lambda_a", run.lambda_a},
              {"adapt_a", run.adapt_a},
              {"adapt_b", run.adapt_b},
              {"no_psg", run.no_psg},
              {"no_if_ds", run.no_if_ds},
              {"no_dn", run.no_dn},
              {"eval_k", run.eval_k},
              {"eval_negatives", run.eval_negatives},
              {"neg_seed", run.neg_seed},
              {"seed", run.seed},
              {"allow_off_grid", run.allow_off_grid},
              {"cold_fallback", fallback_name(run.policy.fallback)},
              {"cold_keep_pseudo", run.policy.keep_pseudo}};
  if (synth) {
    j["synth"] = {{"n_users", synth->n_users},
                  {"overlap_frac", synth->overlap_frac},
                  {"n_items", synth->n_items},
                  {"n_clusters", synth->n_clusters},
                  {"p_cluster", synth->p_cluster},
                  {"p_specific", synth->p_specific},
                  {"size_ratio", synth->size_ratio},
                  {"p_fresh", synth->p_fresh},
                  {"geom_p", synth->geom_p},
                  {"min_len", synth->min_len},
                  {"max_len", synth->max_len},
                  {"seed", synth->seed}};
  }
  return j.dump(2);
}

void PipelineConfig::validate() const {
  if (data.ratings_x.empty() || data.ratings_y.empty()) {
    throw ConfigError("data.ratings_x and data.ratings_y are required");
  }
  if (!(data.density > 0.0) || data.density > 1.0) {
    throw ConfigError("data.density must be in (0,1]");
  }
  if (data.overlap_ratio < 0.0 || data.overlap_ratio > 1.0) {
    throw ConfigError("data.overlap_ratio must be in [0,1]");
  }
  if (data.cold_fraction < 0.0 || data.cold_fraction > 1.0) {
    throw ConfigError("data.cold_fraction must be in [0,1]");
  }
  psg.validate();
  run.validate();
  if (synth) synth->validate();
}

std::uint64_t PipelineConfig::prepare_hash() const {
  std::ostringstream os;
  os << data.ratings_x << "|" << data.ratings_y << "|" << data.density << "|"
     << data.overlap_ratio << "|" << data.cold_fraction << "|"
     << data.ratios.train << "|" << data.ratios.valid << "|" << data.ratios.test
     << "|" << data.seed << "|T=" << run.T;
  return fnv1a(os.str());
}

std::uint64_t PipelineConfig::psg_hash() const {
  std::ostringstream os;
  os << psg.dim << "|" << psg.layers << "|" << psg.epochs << "|" << psg.lr << "|"
     << psg.weight_decay << "|" << psg.val_fraction << "|" << psg.eval_every
     << "|" << psg.recall_k << "|" << psg.seed;
  return fnv1a(os.str());
}

std::uint64_t PipelineConfig::run_hash() const { return run.hash(); }

std::uint64_t PipelineConfig::pseudo_hash(std::uint64_t corpus_hash) const {
  std::ostringstream os;
  os << hex64(corpus_hash) << "|Tp=" << run.Tp << "|psg=" << hex64(psg_hash());
  return fnv1a(os.str());
}

// ---------------------------------------------------------------------------

namespace pipeline {

namespace {

std::string join(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory: " + dir);
}

ExampleSet load_examples_checked(const PipelineConfig& cfg,
                                 const std::string& out_dir) {
  const std::string path = join(out_dir, artifacts::kExamples);
  ExampleSet set = load_examples(path);
  // Guard against a stale store from a different data configuration.
  const json rc = read_json_file(join(out_dir, artifacts::kResolvedConfig),
                                 "prepare");
  if (rc.value("prepare_hash", std::string()) != hex64(cfg.prepare_hash())) {
    throw ConfigError(
        "examples.bin was prepared from a different data configuration; rerun "
        "prepare (or pass --force)");
  }
  return set;
}

}  // namespace

StageResult synth(PipelineConfig& cfg, const std::string& out_dir, bool force) {
  if (!cfg.synth) {
    throw ConfigError("config has no synth section");
  }
  ensure_dir(out_dir);
  const std::string dir = (fs::path(out_dir) / "synth_data").string();
  const std::string px = dir + "/ratings_x.csv";
  const std::string py = dir + "/ratings_y.csv";
  if (!force && fs::exists(px) && fs::exists(py)) {
    cfg.data.ratings_x = px;
    cfg.data.ratings_y = py;
    return {true, "synthetic ratings already present: " + dir};
  }
  const auto paths = write_synthetic(*cfg.synth, dir);
  cfg.data.ratings_x = paths.first;
  cfg.data.ratings_y = paths.second;
  return {false, "wrote " + paths.first + " and " + paths.second};
}

StageResult prepare(const PipelineConfig& cfg, const std::string& out_dir,
                    bool force) {
  cfg.validate();
  ensure_dir(out_dir);
  const std::string ex_path = join(out_dir, artifacts::kExamples);
  const std::string rc_path = join(out_dir, artifacts::kResolvedConfig);
  if (!force && fs::exists(ex_path) && fs::exists(rc_path)) {
    const json rc = read_json_file(rc_path, "prepare");
    if (rc.value("prepare_hash", std::string()) == hex64(cfg.prepare_hash())) {
      return {true, "examples up to date: " + ex_path};
    }
  }

  InteractionLog log_x = ingest_ratings(cfg.data.ratings_x, kX);
  InteractionLog log_y = ingest_ratings(cfg.data.ratings_y, kY);
  if (cfg.data.density < 1.0) {
    log_x = downsample_records(log_x, cfg.data.density, cfg.data.seed);
    log_y = downsample_records(log_y, cfg.data.density, cfg.data.seed);
  }
  const Corpus corpus = build_corpus(log_x, log_y);
  UserSplit split = split_users(corpus, cfg.data.ratios, cfg.data.overlap_ratio,
                                cfg.data.seed);
  simulate_cold_start(corpus, split, cfg.data.cold_fraction, cfg.data.seed);
  const ExampleSet set = build_examples(corpus, split, cfg.run.T);
  save_examples(set, ex_path);
  write_split_manifest(set, join(out_dir, artifacts::kSplitManifest));

  json rc = json::parse(cfg.to_json_text());
  rc["prepare_hash"] = hex64(cfg.prepare_hash());
  rc["corpus_hash"] = hex64(set.corpus_hash);
  rc["ingest_stats"] = {
      {"x",
       {{"users", log_x.stats.n_users},
        {"items", log_x.stats.n_items},
        {"records", log_x.stats.n_records},
        {"density", log_x.stats.density},
        {"mean_seq_len", log_x.stats.mean_seq_len},
        {"malformed", log_x.stats.n_malformed},
        {"duplicates", log_x.stats.n_duplicates}}},
      {"y",
       {{"users", log_y.stats.n_users},
        {"items", log_y.stats.n_items},
        {"records", log_y.stats.n_records},
        {"density", log_y.stats.density},
        {"mean_seq_len", log_y.stats.mean_seq_len},
        {"malformed", log_y.stats.n_malformed},
        {"duplicates", log_y.stats.n_duplicates}}}};
  write_json_file(rc, rc_path);
  return {false, "wrote " + ex_path};
}

StageResult train_psg(const PipelineConfig& cfg, const std::string& out_dir,
                      bool force, const StageLogFn& log) {
  const ExampleSet set = load_examples_checked(cfg, out_dir);
  const std::string psg_path = join(out_dir, artifacts::kPsg);
  if (!force && fs::exists(psg_path)) {
    const PsgCheckpoint ck = load_psg(psg_path);
    if (ck.config_hash == cfg.psg_hash() && ck.examples_hash == set.corpus_hash) {
      return {true, "recall embeddings up to date: " + psg_path};
    }
  }
  PsgConfig pc = cfg.psg;
  pc.recall_k = cfg.run.Tp;  // validation metric matches the pseudo budget
  const UnifiedGraph graph = build_unified_graph(set);
  PsgTrainStats stats;
  const GraphEmbeddings emb = imvae::train_psg(graph, set, pc, &stats, log);
  save_psg(emb, graph, cfg.psg_hash(), set.corpus_hash, psg_path);

  json js;
  js["best_epoch"] = stats.best_epoch;
  js["best_recall"] = stats.best_recall;
  js["n_edges"] = graph.n_edges;
  js["val_recall"] = json::array();
  for (const auto& [epoch, rec] : stats.val_recall) {
    js["val_recall"].push_back({{"epoch", epoch}, {"recall", rec}});
  }
  write_json_file(js, join(out_dir, artifacts::kPsgStats));
  return {false, "wrote " + psg_path};
}

StageResult pseudo(const PipelineConfig& cfg, const std::string& out_dir,
                   bool force) {
  ExampleSet set = load_examples_checked(cfg, out_dir);
  const std::string pseudo_path = join(out_dir, artifacts::kPseudo);
  const std::string meta_path = join(out_dir, artifacts::kPseudoMeta);
  const std::uint64_t want = cfg.pseudo_hash(set.corpus_hash);
  if (!force && fs::exists(pseudo_path) && fs::exists(meta_path)) {
    const json meta = read_json_file(meta_path, "pseudo");
    if (meta.value("pseudo_hash", std::string()) == hex64(want)) {
      return {true, "pseudo-sequences up to date: " + pseudo_path};
    }
  }
  const PsgCheckpoint ck = load_psg(join(out_dir, artifacts::kPsg));
  if (ck.examples_hash != set.corpus_hash) {
    throw ConfigError(
        "recall embeddings were trained on different data; rerun train-psg");
  }
  if (ck.config_hash != cfg.psg_hash()) {
    throw ConfigError(
        "recall embeddings were trained under a different psg config; rerun "
        "train-psg (or pass --force there)");
  }
  const UnifiedGraph graph = build_unified_graph(set);
  attach_pseudo_sequences(set, graph, ck.emb, cfg.run.Tp);
  if (auto leak = find_target_leak(set)) {
    throw NumericFailure("pseudo-sequence generation leaked a target: " + *leak);
  }
  save_examples(set, pseudo_path);
  json meta;
  meta["pseudo_hash"] = hex64(want);
  meta["Tp"] = cfg.run.Tp;
  meta["psg_hash"] = hex64(cfg.psg_hash());
  meta["corpus_hash"] = hex64(set.corpus_hash);
  write_json_file(meta, meta_path);
  return {false, "wrote " + pseudo_path};
}

ExampleSet load_training_inputs(const PipelineConfig& cfg,
                                const std::string& out_dir, bool no_psg) {
  const std::string pseudo_path = join(out_dir, artifacts::kPseudo);
  if (!fs::exists(pseudo_path)) {
    throw MissingArtifact("pseudo-sequence store not found: " + pseudo_path,
                          "pseudo");
  }
  ExampleSet set = load_examples(pseudo_path);
  if (set.Tp != cfg.run.Tp) {
    throw ConfigError("pseudo.bin was built with Tp=" + std::to_string(set.Tp) +
                      " but run.Tp=" + std::to_string(cfg.run.Tp) +
                      "; rerun pseudo");
  }
  if (no_psg) {
    // Ablation: equal-length uniformly random pseudo-sequences, derived from
    // the data seed so train and evaluate agree.
    attach_random_pseudo_sequences(set, cfg.run.Tp,
                                   derive_seed(cfg.data.seed, "no_psg_pseudo"));
  }
  return set;
}

namespace {

StageResult train_variant(const PipelineConfig& cfg, const std::string& out_dir,
                          const RunConfig& run, const std::string& model_file,
                          const std::string& history_file, bool force,
                          const StageLogFn& log) {
  const std::string model_path = join(out_dir, model_file);
  const ExampleSet set = load_training_inputs(cfg, out_dir, run.no_psg);
  const std::uint64_t examples_hash = cfg.pseudo_hash(set.corpus_hash);
  PipelineConfig variant = cfg;
  variant.run = run;
  const std::uint64_t config_hash = variant.run_hash();
  if (!force && fs::exists(model_path)) {
    Model::LoadInfo info;
    Model::load(model_path, &info);
    if (info.config_hash == config_hash && info.examples_hash == examples_hash) {
      return {true, "model up to date: " + model_path};
    }
  }
  const TrainResult result = imvae::train(run, set, log);
  result.model->save(model_path, config_hash, examples_hash);
  write_history_jsonl(result.history, join(out_dir, history_file));
  std::ostringstream os;
  os << "wrote " << model_path << " (best epoch " << result.best_epoch
     << ", val ndcg " << result.best_ndcg << ")";
  return {false, os.str()};
}

}  // namespace

StageResult train(const PipelineConfig& cfg, const std::string& out_dir,
                  bool force, const StageLogFn& log) {
  cfg.run.validate();
  return train_variant(cfg, out_dir, cfg.run, artifacts::kModel,
                       artifacts::kHistory, force, log);
}

EvalReport evaluate_checkpoint(const PipelineConfig& cfg,
                               const std::string& out_dir,
                               const std::string& model_file, bool no_psg) {
  const ExampleSet set = load_training_inputs(cfg, out_dir, no_psg);
  Model::LoadInfo info;
  auto model = Model::load(join(out_dir, model_file), &info);
  if (info.examples_hash != cfg.pseudo_hash(set.corpus_hash)) {
    throw ConfigError("model " + model_file +
                      " was trained on different inputs; rerun train");
  }
  EvalOptions opts;
  opts.role = Role::kTest;
  opts.k = cfg.run.eval_k;
  opts.n_negatives = cfg.run.eval_negatives;
  opts.neg_seed = cfg.run.neg_seed;
  opts.policy = cfg.run.effective_policy();
  return evaluate_model(*model, set, opts);
}

namespace {

json report_to_json(const EvalReport& rep) {
  const auto group = [](const GroupMetrics& g) {
    return json{{"n", g.n}, {"hr", g.hr}, {"ndcg", g.ndcg}};
  };
  json j;
  j["k"] = rep.k;
  j["n_negatives"] = rep.n_negatives;
  for (int d = 0; d < kNumDomains; ++d) {
    const char* dn = domain_name(static_cast<Domain>(d));
    j[dn] = {{"all", group(rep.all[d])},
             {"tailed", group(rep.tailed[d])},
             {"cold", group(rep.cold[d])}};
  }
  j["overall"] = group(rep.overall);
  return j;
}

}  // namespace

StageResult evaluate(const PipelineConfig& cfg, const std::string& out_dir,
                     bool force) {
  (void)force;  // evaluation is cheap; always recomputed
  PipelineConfig eff = cfg;
  const EvalReport rep =
      evaluate_checkpoint(eff, out_dir, artifacts::kModel, cfg.run.no_psg);
  json j = report_to_json(rep);
  j["run_hash"] = hex64(cfg.run_hash());
  write_json_file(j, join(out_dir, artifacts::kEvalReport));
  const std::string table = format_report(rep);
  std::ofstream out(join(out_dir, artifacts::kEvalTable));
  out << table;
  return {false, table};
}

StageResult ablate(const PipelineConfig& cfg, const std::string& out_dir,
                   const std::string& name, bool force, const StageLogFn& log) {
  RunConfig run = cfg.run;
  if (name == "no_psg") {
    run.no_psg = true;
  } else if (name == "no_if_ds") {
    run.no_if_ds = true;
  } else if (name == "no_dn") {
    run.no_dn = true;
  } else {
    throw ConfigError("unknown ablation '" + name +
                      "' (expected no_psg|no_if_ds|no_dn)");
  }
  const std::string model_file = "model_" + name + ".bin";
  const std::string history_file = "history_" + name + ".jsonl";
  const StageResult tr =
      train_variant(cfg, out_dir, run, model_file, history_file, force, log);

  PipelineConfig variant = cfg;
  variant.run = run;
  const EvalReport rep =
      evaluate_checkpoint(variant, out_dir, model_file, run.no_psg);
  json j = report_to_json(rep);
  j["ablation"] = name;
  write_json_file(j, join(out_dir, "eval_" + name + ".json"));
  std::ofstream out(join(out_dir, "eval_" + name + ".txt"));
  out << format_report(rep);
  return {tr.skipped, "ablation " + name + ":\n" + format_report(rep)};
}

StageResult sweep(const PipelineConfig& cfg, const std::string& out_dir,
                  bool force, const StageLogFn& log) {
  (void)force;
  const ExampleSet set = load_training_inputs(cfg, out_dir, cfg.run.no_psg);
  const GridReport report = grid_search(cfg.run, cfg.sweep, set, log);
  write_grid_report(report, join(out_dir, artifacts::kSweepCsv),
                    join(out_dir, artifacts::kSweepJson));
  std::ostringstream os;
  os << "best: lr=" << report.best.lr << " lambda_t=" << report.best.lambda_t
     << " lambda_a=" << report.best.lambda_a;
  return {false, os.str()};
}

}  // namespace pipeline

}  // namespace imvae
