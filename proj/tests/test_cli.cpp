// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunOutput {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("imvae_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

RunOutput run_cli(const TempDir& tmp, const std::string& args) {
  const fs::path out_file = tmp.path / "stdout.txt";
  const fs::path err_file = tmp.path / "stderr.txt";
  const std::string cmd = std::string(IMVAE_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  RunOutput r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

std::string write_config(const TempDir& tmp) {
  const fs::path p = tmp.path / "cfg.json";
  std::ofstream out(p);
  out << R"({
    "synth": {"n_users": 100, "n_items": 70, "n_clusters": 4,
              "overlap_frac": 0.6, "max_len": 10, "seed": 5},
    "data": {"overlap_ratio": 1.0, "cold_fraction": 0.2, "seed": 11},
    "psg": {"dim": 8, "layers": 2, "epochs": 10, "eval_every": 5, "seed": 3},
    "run": {"dim": 8, "heads": 2, "T": 5, "Tp": 6, "mlp_hidden": [8],
            "batch": 64, "epochs": 1, "lr": 5e-4, "lambda_t": 1e-3,
            "lambda_a": 5e-3, "eval_negatives": 30, "seed": 1}
  })";
  return p.string();
}

}  // namespace

TEST_CASE("help and argument errors use conventional exit codes") {
  TempDir tmp;
  CHECK(run_cli(tmp, "--help").code == 0);
  const RunOutput help = run_cli(tmp, "--help");
  CHECK(help.out.find("prepare") != std::string::npos);
  CHECK(help.out.find("evaluate") != std::string::npos);

  CHECK(run_cli(tmp, "").code == 2);                        // missing subcommand
  CHECK(run_cli(tmp, "frobnicate").code == 2);              // unknown subcommand
  CHECK(run_cli(tmp, "train").code == 2);                   // missing --config
  CHECK(run_cli(tmp, "train --config /no/such.json").code == 2);

  const fs::path bad = tmp.path / "bad.json";
  std::ofstream(bad) << R"({"run": {"unknown_knob": 1}})";
  const RunOutput r = run_cli(tmp, "prepare --config " + bad.string());
  CHECK(r.code == 2);
  CHECK(r.err.find("unknown_knob") != std::string::npos);
}

TEST_CASE("ablation name is validated") {
  TempDir tmp;
  const std::string cfg = write_config(tmp);
  const RunOutput r =
      run_cli(tmp, "ablate --config " + cfg + " --ablation bogus --out " +
                       tmp.str() + "/out");
  CHECK(r.code == 2);
}

TEST_CASE("stage ordering errors point at the missing stage") {
  TempDir tmp;
  const std::string cfg = write_config(tmp);
  const std::string out = tmp.str() + "/out";
  const RunOutput r = run_cli(tmp, "train --config " + cfg + " --out " + out);
  CHECK(r.code == 3);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(r.err.find("run `imvae") != std::string::npos);
}

TEST_CASE("the full stage sequence runs from one config") {
  TempDir tmp;
  const std::string cfg = write_config(tmp);
  const std::string out = tmp.str() + "/out";
  const std::string common = " --config " + cfg + " --out " + out;

  RunOutput r = run_cli(tmp, "prepare" + common);
  CHECK(r.code == 0);
  CHECK(fs::exists(fs::path(out) / "examples.bin"));
  // Synthetic data was materialized on demand.
  CHECK(fs::exists(fs::path(out) / "synth_data"));

  r = run_cli(tmp, "prepare" + common);
  CHECK(r.code == 0);
  CHECK(r.out.find("skip") != std::string::npos);

  r = run_cli(tmp, "train-psg" + common);
  CHECK(r.code == 0);
  CHECK(fs::exists(fs::path(out) / "psg.bin"));

  r = run_cli(tmp, "pseudo" + common);
  CHECK(r.code == 0);
  CHECK(fs::exists(fs::path(out) / "pseudo.bin"));

  r = run_cli(tmp, "train" + common);
  CHECK(r.code == 0);
  CHECK(fs::exists(fs::path(out) / "model.bin"));
  CHECK(fs::exists(fs::path(out) / "history.jsonl"));

  r = run_cli(tmp, "train" + common);
  CHECK(r.code == 0);
  CHECK(r.out.find("skip") != std::string::npos);

  r = run_cli(tmp, "evaluate" + common);
  CHECK(r.code == 0);
  CHECK(fs::exists(fs::path(out) / "eval_report.json"));
  const std::string table = slurp(fs::path(out) / "eval_table.txt");
  CHECK(table.find("overall:") != std::string::npos);

  r = run_cli(tmp, "ablate" + common + " --ablation no_dn");
  CHECK(r.code == 0);
  CHECK(fs::exists(fs::path(out) / "model_no_dn.bin"));
  CHECK(fs::exists(fs::path(out) / "eval_no_dn.json"));

  // Forced retrain reports the rebuild rather than the skip.
  r = run_cli(tmp, "train" + common + " --force");
  CHECK(r.code == 0);
  CHECK(r.out.find("skip") == std::string::npos);
}
