// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"

#include <string>

namespace imvae {

// Synthetic two-domain interaction generator with planted interest factors.
// Each user carries a shared factor (the same catalog slice in both domains)
// and, optionally, a per-domain specific factor; draws mix the two with
// uniform noise. Factor slices are graded in size (geometric in `size_ratio`),
// so broad interests own large catalog slices and niche interests small ones —
// per-item interaction rates then differ by factor, the way mainstream and
// niche titles differ in real logs. Sequence lengths are heavy-tailed
// (shifted geometric), and a `p_fresh` fraction of two-domain users have just
// arrived in one domain (a single interaction there, a full history in the
// other), so short-history and cold-start behavior can be probed on data
// where cross-domain transfer is actually learnable.
struct SynthConfig {
  int n_users = 2000;
  double overlap_frac = 0.3;  // users present in both domains
  int n_items = 1500;         // per-domain catalog
  int n_clusters = 20;
  double p_cluster = 0.85;    // probability a draw comes from the shared slice
  double p_specific = 0.0;    // probability it comes from the specific slice
  double size_ratio = 0.75;   // slice k holds ~size_ratio^k of the catalog
  double p_fresh = 0.0;       // two-domain users newly arrived in one domain
  double geom_p = 0.25;       // length tail: L = min_len + Geom(geom_p)
  int min_len = 2;
  int max_len = 60;
  std::uint64_t seed = 11;

  void validate() const;
};

struct SynthCorpus {
  std::string csv_x, csv_y;  // `user,item,rating,timestamp` lines
};

SynthCorpus generate_synthetic(const SynthConfig& cfg);

// Writes ratings_x.csv / ratings_y.csv under dir; returns the two paths.
std::pair<std::string, std::string> write_synthetic(const SynthConfig& cfg,
                                                    const std::string& dir);

}  // namespace imvae
