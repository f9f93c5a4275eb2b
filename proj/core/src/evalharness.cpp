// SPDX-License-Identifier: Apache-2.0
#include "imvae/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace imvae {

RankResult rank_metrics(double pos_score, const std::vector<double>& neg_scores,
                        int k) {
  if (k <= 0) throw ConfigError("rank cutoff k must be positive");
  int above = 0;
  for (double s : neg_scores) {
    if (s >= pos_score) ++above;  // ties count against the target
  }
  RankResult r;
  r.rank = 1 + above;
  if (r.rank <= k) {
    r.hr = 1.0;
    r.ndcg = 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
  }
  return r;
}

std::vector<int> sample_negatives(const std::vector<int>& interacted_sorted,
                                  int n_items, int count, Rng& rng) {
  const int available = n_items - static_cast<int>(interacted_sorted.size());
  if (count > available) {
    throw DataError("catalog too small: need " + std::to_string(count) +
                    " negatives, only " + std::to_string(available) +
                    " non-interacted items");
  }
  std::vector<int> out;
  out.reserve(count);
  if (count * 3 >= available) {
    // Dense: materialize the complement and draw without replacement.
    std::vector<int> pool;
    pool.reserve(available);
    for (int it = 1; it <= n_items; ++it) {
      if (!std::binary_search(interacted_sorted.begin(), interacted_sorted.end(), it)) {
        pool.push_back(it);
      }
    }
    const auto idx = rng.sample_without_replacement(available, count);
    for (int i : idx) out.push_back(pool[i]);
  } else {
    // Sparse: rejection sampling.
    std::vector<int> seen;
    while (static_cast<int>(out.size()) < count) {
      const int it = 1 + rng.below_int(n_items);
      if (std::binary_search(interacted_sorted.begin(), interacted_sorted.end(), it)) {
        continue;
      }
      auto pos = std::lower_bound(seen.begin(), seen.end(), it);
      if (pos != seen.end() && *pos == it) continue;
      seen.insert(pos, it);
      out.push_back(it);
    }
  }
  return out;
}

EvalReport evaluate_scorer(const ExampleSet& set, const EvalOptions& opts,
                           const CandidateScorer& scorer) {
  EvalReport rep;
  rep.k = opts.k;
  rep.n_negatives = opts.n_negatives;
  for (const auto& ex : set.users) {
    if (set.split.role[ex.uid] != opts.role) continue;
    for (int d = 0; d < kNumDomains; ++d) {
      const auto dom = static_cast<Domain>(d);
      if (!ex.has_target(dom)) continue;
      Rng rng(derive_seed(opts.neg_seed, "eval_neg",
                          static_cast<std::uint64_t>(ex.uid),
                          static_cast<std::uint64_t>(d)));
      const std::vector<int> negs =
          sample_negatives(ex.interacted[d], set.n_items[d], opts.n_negatives, rng);
      std::vector<int> candidates;
      candidates.reserve(negs.size() + 1);
      candidates.push_back(ex.target[d]);
      candidates.insert(candidates.end(), negs.begin(), negs.end());
      const std::vector<double> scores = scorer(ex.uid, dom, candidates);
      if (scores.size() != candidates.size()) {
        throw ConfigError("scorer returned wrong number of scores");
      }
      const std::vector<double> neg_scores(scores.begin() + 1, scores.end());
      const RankResult r = rank_metrics(scores[0], neg_scores, opts.k);
      rep.all[d].add(r);
      rep.overall.add(r);
      if (ex.tailed(dom)) rep.tailed[d].add(r);
      if (set.split.cold_domain[ex.uid] == d) rep.cold[d].add(r);
    }
  }
  for (int d = 0; d < kNumDomains; ++d) {
    rep.all[d].finalize();
    rep.tailed[d].finalize();
    rep.cold[d].finalize();
  }
  rep.overall.finalize();
  return rep;
}

EvalReport evaluate_model(Model& model, const ExampleSet& set,
                          const EvalOptions& opts) {
  // Forward each user once; users arrive in order, so a one-entry cache works.
  auto cache = std::make_shared<UserCache>();
  auto cached_uid = std::make_shared<int>(-1);
  CandidateScorer scorer = [&, cache, cached_uid](
                               int uid, Domain d,
                               const std::vector<int>& items) {
    if (*cached_uid != uid) {
      model.forward_eval(set.at(uid), set.split.cold_domain[uid], opts.policy,
                         *cache);
      *cached_uid = uid;
    }
    std::vector<double> out(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      out[i] = model.score(d, cache->h[d], items[i]);
    }
    return out;
  };
  return evaluate_scorer(set, opts, scorer);
}

std::string format_report(const EvalReport& rep) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  const auto line = [&](const char* name, const GroupMetrics& g) {
    os << "  " << name << "  n=" << g.n << "  HR@" << rep.k << "=" << g.hr
       << "  NDCG@" << rep.k << "=" << g.ndcg << "\n";
  };
  for (int d = 0; d < kNumDomains; ++d) {
    os << "domain " << domain_name(static_cast<Domain>(d)) << ":\n";
    line("all    ", rep.all[d]);
    line("tailed ", rep.tailed[d]);
    line("cold   ", rep.cold[d]);
  }
  os << "overall:\n";
  line("pooled ", rep.overall);
  return os.str();
}

}  // namespace imvae
