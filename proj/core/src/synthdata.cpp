// SPDX-License-Identifier: Apache-2.0
#include "imvae/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace imvae {

void SynthConfig::validate() const {
  if (n_users < 10) throw ConfigError("synth.n_users too small");
  if (overlap_frac < 0.0 || overlap_frac > 1.0) {
    throw ConfigError("synth.overlap_frac must be in [0,1]");
  }
  if (n_items < n_clusters || n_clusters <= 0) {
    throw ConfigError("synth.n_items must cover synth.n_clusters");
  }
  if (p_cluster < 0.0 || p_cluster > 1.0) {
    throw ConfigError("synth.p_cluster must be in [0,1]");
  }
  if (p_specific < 0.0 || p_cluster + p_specific > 1.0) {
    throw ConfigError("synth.p_specific must be in [0, 1 - p_cluster]");
  }
  if (size_ratio <= 0.0 || size_ratio > 1.0) {
    throw ConfigError("synth.size_ratio must be in (0,1]");
  }
  if (p_fresh < 0.0 || p_fresh > 1.0) {
    throw ConfigError("synth.p_fresh must be in [0,1]");
  }
  if (geom_p <= 0.0 || geom_p >= 1.0) {
    throw ConfigError("synth.geom_p must be in (0,1)");
  }
  if (min_len < 1 || max_len < min_len) {
    throw ConfigError("synth length bounds invalid");
  }
}

namespace {

int draw_length(const SynthConfig& cfg, Rng& rng) {
  const double u = rng.uniform();
  const int geo =
      static_cast<int>(std::floor(std::log1p(-u) / std::log1p(-cfg.geom_p)));
  return std::min(cfg.max_len, cfg.min_len + geo);
}

// Catalog boundaries of the factor slices: geometric sizes with the first
// (broadest) factor the largest. Rounded cumulatively so every factor keeps at
// least one item and the slices tile the catalog exactly.
std::vector<int> slice_offsets(const SynthConfig& cfg) {
  const int k = cfg.n_clusters;
  std::vector<double> w(static_cast<std::size_t>(k));
  double total = 0.0;
  for (int c = 0; c < k; ++c) total += (w[c] = std::pow(cfg.size_ratio, c));
  std::vector<int> offs(static_cast<std::size_t>(k) + 1, 0);
  double acc = 0.0;
  for (int c = 0; c < k; ++c) {
    acc += w[c];
    int edge = static_cast<int>(std::llround(acc / total * cfg.n_items));
    edge = std::max(edge, offs[c] + 1);
    edge = std::min(edge, cfg.n_items - (k - 1 - c));
    offs[c + 1] = edge;
  }
  return offs;
}

// A draw comes from the shared-factor slice, the domain-specific slice, or
// anywhere in the catalog (noise).
int draw_item(const SynthConfig& cfg, const std::vector<int>& offs, int shared,
              int specific, Rng& rng) {
  const double u = rng.uniform();
  int slice = -1;
  if (u < cfg.p_cluster) {
    slice = shared;
  } else if (u < cfg.p_cluster + cfg.p_specific) {
    slice = specific;
  }
  if (slice >= 0) {
    const int lo = offs[slice];
    return lo + rng.below_int(offs[slice + 1] - lo);
  }
  return rng.below_int(cfg.n_items);
}

void emit_user(const SynthConfig& cfg, const std::vector<int>& offs,
               std::ostringstream& os, int uid, char item_prefix, int shared,
               int specific, Rng& rng, int force_len = -1) {
  const int len = force_len > 0 ? force_len : draw_length(cfg, rng);
  std::set<int> used;
  std::int64_t ts = static_cast<std::int64_t>(uid) * 1000;
  int emitted = 0;
  int tries = 0;
  while (emitted < len && tries < len * 60) {
    ++tries;
    const int it = draw_item(cfg, offs, shared, specific, rng);
    if (!used.insert(it).second) continue;
    char line[64];
    std::snprintf(line, sizeof(line), "u%05d,%c%05d,5.0,%lld\n", uid, item_prefix,
                  it, static_cast<long long>(ts++));
    os << line;
    ++emitted;
  }
}

}  // namespace

SynthCorpus generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::vector<int> offs = slice_offsets(cfg);
  std::ostringstream os_x, os_y;
  const int n_overlap =
      static_cast<int>(std::llround(cfg.overlap_frac * cfg.n_users));
  const int n_single = cfg.n_users - n_overlap;
  const int n_only_x = n_single / 2;

  Rng rng(derive_seed(cfg.seed, "synth"));
  for (int uid = 0; uid < cfg.n_users; ++uid) {
    const int shared = rng.below_int(cfg.n_clusters);
    const int spec_x = rng.below_int(cfg.n_clusters);
    const int spec_y = rng.below_int(cfg.n_clusters);
    const bool in_x = uid < n_overlap || uid < n_overlap + n_only_x;
    const bool in_y = uid < n_overlap || uid >= n_overlap + n_only_x;
    // Some two-domain users have just arrived in one domain: a single
    // interaction there, a full history in the other.
    int force_x = -1, force_y = -1;
    if (cfg.p_fresh > 0.0 && uid < n_overlap && rng.uniform() < cfg.p_fresh) {
      (rng.below_int(2) == 0 ? force_x : force_y) = 1;
    }
    Rng user_rng(derive_seed(cfg.seed, "synth_user", static_cast<std::uint64_t>(uid)));
    if (in_x) emit_user(cfg, offs, os_x, uid, 'x', shared, spec_x, user_rng, force_x);
    if (in_y) emit_user(cfg, offs, os_y, uid, 'y', shared, spec_y, user_rng, force_y);
  }
  return {os_x.str(), os_y.str()};
}

std::pair<std::string, std::string> write_synthetic(const SynthConfig& cfg,
                                                    const std::string& dir) {
  const SynthCorpus corpus = generate_synthetic(cfg);
  std::filesystem::create_directories(dir);
  const std::string px = dir + "/ratings_x.csv";
  const std::string py = dir + "/ratings_y.csv";
  std::ofstream fx(px), fy(py);
  if (!fx || !fy) throw ConfigError("cannot write synthetic ratings under " + dir);
  fx << corpus.csv_x;
  fy << corpus.csv_y;
  return {px, py};
}

}  // namespace imvae
