// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"
#include "imvae/corpus.hpp"
#include "imvae/model.hpp"

#include <functional>

namespace imvae {

// ---------------------------------------------------------------------------
// Leave-one-out ranking: the held-out target competes against sampled
// negatives. Ties are handled pessimistically (every tied negative counts as
// ranked above the target).
// ---------------------------------------------------------------------------

struct RankResult {
  int rank = 0;  // 1-based
  double hr = 0.0;
  double ndcg = 0.0;
};

RankResult rank_metrics(double pos_score, const std::vector<double>& neg_scores,
                        int k);

// Uniform sample of `count` distinct non-interacted items (1-based ids) from a
// catalog of `n_items`; fatal when the catalog cannot supply enough.
std::vector<int> sample_negatives(const std::vector<int>& interacted_sorted,
                                  int n_items, int count, Rng& rng);

// ---------------------------------------------------------------------------
// Grouped evaluation. Negatives are derived from (neg_seed, uid, domain) so
// every model evaluated under the same options sees identical candidates.
// ---------------------------------------------------------------------------

struct EvalOptions {
  Role role = Role::kTest;
  int k = 10;
  int n_negatives = 999;
  std::uint64_t neg_seed = 97;
  EvalPolicy policy;
};

struct GroupMetrics {
  int n = 0;
  double hr = 0.0, ndcg = 0.0;
  void add(const RankResult& r) {
    ++n;
    hr += r.hr;
    ndcg += r.ndcg;
  }
  void finalize() {
    if (n > 0) {
      hr /= n;
      ndcg /= n;
    }
  }
};

struct EvalReport {
  std::array<GroupMetrics, kNumDomains> all, tailed, cold;
  GroupMetrics overall;  // both domains pooled
  int k = 10;
  int n_negatives = 999;
};

// Scores a candidate list for one (user, domain); candidates are 1-based
// per-domain item ids.
using CandidateScorer = std::function<std::vector<double>(
    int uid, Domain d, const std::vector<int>& items)>;

EvalReport evaluate_scorer(const ExampleSet& set, const EvalOptions& opts,
                           const CandidateScorer& scorer);

EvalReport evaluate_model(Model& model, const ExampleSet& set,
                          const EvalOptions& opts);

std::string format_report(const EvalReport& report);

}  // namespace imvae
