// SPDX-License-Identifier: Apache-2.0
#include "imvae/evalharness.hpp"

#include "imvae/synthdata.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace imvae;

namespace {

// Independent reference: sort the full candidate list (target + negatives)
// descending and place the target after every tied negative.
RankResult brute_force_rank(double pos, const std::vector<double>& negs, int k) {
  std::vector<double> sorted = negs;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  int rank = 1;
  for (double s : sorted) {
    if (s >= pos) {
      ++rank;
    } else {
      break;
    }
  }
  RankResult r;
  r.rank = rank;
  if (rank <= k) {
    r.hr = 1.0;
    r.ndcg = 1.0 / std::log2(rank + 1.0);
  }
  return r;
}

// Four-user fixture with 12-item catalogs per domain:
//  - u1 (test): both domains,
//  - u2 (test): cold in Y (input erased, target kept),
//  - u3 (valid): excluded from test-role evaluation,
//  - u4 (train): long histories that realize the full catalogs.
ExampleSet eval_fixture() {
  std::string x, y;
  for (int i = 1; i <= 12; ++i) {
    const char c = static_cast<char>('0' + i % 10);
    x += std::string("u4,a") + (i < 10 ? "0" : "1") + c + ",1.0," +
         std::to_string(i) + "\n";
    y += std::string("u4,b") + (i < 10 ? "0" : "1") + c + ",1.0," +
         std::to_string(i) + "\n";
  }
  x += "u1,a01,1.0,10\nu1,a02,1.0,20\nu1,a03,1.0,30\nu1,a04,1.0,40\nu1,a05,1.0,50\n";
  y += "u1,b01,1.0,5\nu1,b02,1.0,15\nu1,b03,1.0,25\n";
  x += "u2,a06,1.0,10\nu2,a07,1.0,20\nu2,a08,1.0,30\n";
  y += "u2,b04,1.0,10\nu2,b05,1.0,20\nu2,b06,1.0,30\n";
  x += "u3,a09,1.0,10\nu3,a10,1.0,20\n";
  const Corpus corpus =
      build_corpus(ingest_ratings_text(x, kX), ingest_ratings_text(y, kY));
  UserSplit split;
  split.role = {Role::kTest, Role::kTest, Role::kValid, Role::kTrain};
  split.overlapping = {1, 1, 0, 1};
  split.dropped_domain.assign(4, kNoDomain);
  split.cold_domain = {kNoDomain, kY, kNoDomain, kNoDomain};
  return build_examples(corpus, split, 6);
}

}  // namespace

TEST_CASE("rank_metrics basic oracles") {
  CHECK(rank_metrics(1.0, {0.5, 0.2, 0.1}, 10).rank == 1);
  CHECK(rank_metrics(1.0, {0.5, 0.2}, 10).hr == 1.0);
  CHECK(rank_metrics(1.0, {0.5}, 10).ndcg == doctest::Approx(1.0));
  CHECK(rank_metrics(1.0, {}, 10).rank == 1);

  const RankResult r = rank_metrics(0.3, {0.9, 0.8, 0.4, 0.1, 0.0}, 10);
  CHECK(r.rank == 4);
  CHECK(r.hr == 1.0);
  CHECK(r.ndcg == doctest::Approx(1.0 / std::log2(5.0)));

  SUBCASE("ties count against the target") {
    CHECK(rank_metrics(0.5, {0.5, 0.5, 0.1}, 10).rank == 3);
    CHECK(rank_metrics(0.5, {0.5}, 1).hr == 0.0);
  }
  SUBCASE("cutoff boundary") {
    std::vector<double> nine_above(9, 2.0);
    const RankResult at_k = rank_metrics(1.0, nine_above, 10);
    CHECK(at_k.rank == 10);
    CHECK(at_k.hr == 1.0);
    CHECK(at_k.ndcg == doctest::Approx(1.0 / std::log2(11.0)));
    std::vector<double> ten_above(10, 2.0);
    const RankResult past_k = rank_metrics(1.0, ten_above, 10);
    CHECK(past_k.rank == 11);
    CHECK(past_k.hr == 0.0);
    CHECK(past_k.ndcg == 0.0);
  }
  SUBCASE("invalid cutoff") {
    CHECK_THROWS_AS(rank_metrics(1.0, {0.5}, 0), ConfigError);
    CHECK_THROWS_AS(rank_metrics(1.0, {0.5}, -3), ConfigError);
  }
}

TEST_CASE("rank_metrics agrees with a sort-based reference") {
  Rng rng(777);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + rng.below_int(100);
    const int k = 1 + rng.below_int(20);
    const bool quantize = trial % 3 == 0;  // force ties in a third of trials
    double pos = rng.uniform();
    std::vector<double> negs(n);
    for (double& s : negs) s = rng.uniform();
    if (quantize) {
      pos = std::floor(pos * 8.0) / 8.0;
      for (double& s : negs) s = std::floor(s * 8.0) / 8.0;
    }
    const RankResult got = rank_metrics(pos, negs, k);
    const RankResult want = brute_force_rank(pos, negs, k);
    REQUIRE(got.rank == want.rank);
    REQUIRE(got.hr == want.hr);
    REQUIRE(got.ndcg == doctest::Approx(want.ndcg).epsilon(1e-12));
  }
}

TEST_CASE("sample_negatives draws distinct non-interacted items") {
  SUBCASE("exhaustive draw returns the exact complement") {
    Rng rng(1);
    std::vector<int> negs = sample_negatives({2, 5}, 10, 8, rng);
    std::sort(negs.begin(), negs.end());
    CHECK(negs == std::vector<int>{1, 3, 4, 6, 7, 8, 9, 10});
  }
  SUBCASE("overdraw is fatal") {
    Rng rng(1);
    CHECK_THROWS_AS(sample_negatives({2, 5}, 10, 9, rng), DataError);
  }
  SUBCASE("sparse path: distinct, in range, excluded") {
    const std::vector<int> interacted{10, 20, 30, 40, 50};
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      const std::vector<int> negs = sample_negatives(interacted, 5000, 50, rng);
      REQUIRE(negs.size() == 50);
      std::set<int> seen;
      for (int it : negs) {
        CHECK(it >= 1);
        CHECK(it <= 5000);
        CHECK(!std::binary_search(interacted.begin(), interacted.end(), it));
        CHECK(seen.insert(it).second);
      }
    }
  }
  SUBCASE("dense path: distinct and excluded") {
    const std::vector<int> interacted{1, 2, 3};
    Rng rng(4);
    const std::vector<int> negs = sample_negatives(interacted, 20, 10, rng);
    REQUIRE(negs.size() == 10);
    std::set<int> seen;
    for (int it : negs) {
      CHECK(it > 3);
      CHECK(it <= 20);
      CHECK(seen.insert(it).second);
    }
  }
  SUBCASE("deterministic under the same stream") {
    Rng a(31), b(31);
    CHECK(sample_negatives({7}, 1000, 99, a) == sample_negatives({7}, 1000, 99, b));
  }
}

TEST_CASE("evaluate_scorer routes users into the right groups") {
  const ExampleSet set = eval_fixture();
  EvalOptions opts;
  opts.role = Role::kTest;
  opts.k = 3;
  opts.n_negatives = 5;

  SUBCASE("a perfect scorer hits everywhere") {
    const EvalReport rep = evaluate_scorer(
        set, opts, [&](int uid, Domain d, const std::vector<int>& items) {
          std::vector<double> s(items.size(), 0.0);
          for (std::size_t i = 0; i < items.size(); ++i) {
            if (items[i] == set.at(uid).target[d]) s[i] = 1.0;
          }
          return s;
        });
    // Test-role targets: u1 in X and Y, u2 in X and Y.
    CHECK(rep.all[kX].n == 2);
    CHECK(rep.all[kY].n == 2);
    CHECK(rep.overall.n == 4);
    CHECK(rep.all[kX].hr == 1.0);
    CHECK(rep.all[kY].ndcg == 1.0);
    CHECK(rep.overall.hr == 1.0);
    // u2 is cold in Y only.
    CHECK(rep.cold[kY].n == 1);
    CHECK(rep.cold[kX].n == 0);
    CHECK(rep.cold[kY].hr == 1.0);
    CHECK(rep.cold[kX].hr == 0.0);  // finalize leaves empty groups at zero
    // Tailed counts mirror the example tags.
    int want_tailed_x = 0, want_tailed_y = 0;
    for (const auto& ex : set.users) {
      if (set.split.role[ex.uid] != Role::kTest) continue;
      if (ex.has_target(kX) && ex.tailed(kX)) ++want_tailed_x;
      if (ex.has_target(kY) && ex.tailed(kY)) ++want_tailed_y;
    }
    CHECK(rep.tailed[kX].n == want_tailed_x);
    CHECK(rep.tailed[kY].n == want_tailed_y);
    CHECK(rep.k == 3);
    CHECK(rep.n_negatives == 5);
  }

  SUBCASE("an adversarial scorer misses everywhere") {
    const EvalReport rep = evaluate_scorer(
        set, opts, [&](int uid, Domain d, const std::vector<int>& items) {
          std::vector<double> s(items.size(), 1.0);
          for (std::size_t i = 0; i < items.size(); ++i) {
            if (items[i] == set.at(uid).target[d]) s[i] = 0.0;
          }
          return s;
        });
    CHECK(rep.overall.n == 4);
    CHECK(rep.overall.hr == 0.0);
    CHECK(rep.overall.ndcg == 0.0);
  }

  SUBCASE("a constant scorer loses every tie") {
    const EvalReport rep = evaluate_scorer(
        set, opts, [](int, Domain, const std::vector<int>& items) {
          return std::vector<double>(items.size(), 0.25);
        });
    CHECK(rep.overall.hr == 0.0);  // rank = 6 > k = 3 under pessimistic ties
  }

  SUBCASE("candidates lead with the target and exclude history") {
    std::vector<std::vector<int>> seen_lists;
    const auto capture = [&](int uid, Domain d, const std::vector<int>& items) {
      const UserExample& ex = set.at(uid);
      REQUIRE(items.size() == 6);  // target + 5 negatives
      CHECK(items[0] == ex.target[d]);
      std::set<int> uniq;
      for (std::size_t i = 0; i < items.size(); ++i) {
        CHECK(uniq.insert(items[i]).second);
        if (i > 0) {
          CHECK(!std::binary_search(ex.interacted[d].begin(),
                                    ex.interacted[d].end(), items[i]));
        }
      }
      seen_lists.push_back(items);
      return std::vector<double>(items.size(), 0.0);
    };
    evaluate_scorer(set, opts, capture);
    std::vector<std::vector<int>> first = seen_lists;
    seen_lists.clear();
    evaluate_scorer(set, opts, capture);
    CHECK(first == seen_lists);  // negatives derive from (seed, uid, domain)

    std::vector<std::vector<int>> reseeded;
    EvalOptions opts2 = opts;
    opts2.neg_seed = opts.neg_seed + 1;
    evaluate_scorer(set, opts2,
                    [&](int, Domain, const std::vector<int>& items) {
                      reseeded.push_back(items);
                      return std::vector<double>(items.size(), 0.0);
                    });
    CHECK(reseeded != first);
  }

  SUBCASE("scorer must return one score per candidate") {
    CHECK_THROWS_AS(
        evaluate_scorer(set, opts,
                        [](int, Domain, const std::vector<int>&) {
                          return std::vector<double>{1.0};
                        }),
        ConfigError);
  }
}

TEST_CASE("a random scorer lands at the chance rate") {
  SynthConfig sc;
  sc.n_users = 500;
  sc.n_items = 300;
  sc.n_clusters = 6;
  sc.overlap_frac = 0.5;
  sc.seed = 2;
  const SynthCorpus synth = generate_synthetic(sc);
  const Corpus corpus = build_corpus(ingest_ratings_text(synth.csv_x, kX),
                                     ingest_ratings_text(synth.csv_y, kY));
  const UserSplit split = split_users(corpus, SplitRatios{}, 1.0, 3);
  const ExampleSet set = build_examples(corpus, split, 8);

  EvalOptions opts;
  opts.role = Role::kTrain;  // the large stratum, for tight statistics
  opts.k = 10;
  opts.n_negatives = 99;
  const EvalReport rep = evaluate_scorer(
      set, opts, [](int uid, Domain d, const std::vector<int>& items) {
        Rng rng(derive_seed(555, "random_scorer", static_cast<std::uint64_t>(uid),
                            static_cast<std::uint64_t>(d)));
        std::vector<double> s(items.size());
        for (double& v : s) v = rng.uniform();
        return s;
      });
  REQUIRE(rep.overall.n > 300);
  // The target's rank is uniform on 1..100, so HR@10 ~ Bin(n, 0.1)/n.
  const double se = std::sqrt(0.1 * 0.9 / rep.overall.n);
  CHECK(std::abs(rep.overall.hr - 0.1) < 4.0 * se);
  double expected_ndcg = 0.0;
  for (int r = 1; r <= 10; ++r) expected_ndcg += 1.0 / std::log2(r + 1.0);
  expected_ndcg /= 100.0;
  CHECK(std::abs(rep.overall.ndcg - expected_ndcg) < 6.0 * se);
}

TEST_CASE("report formatting names every group") {
  const ExampleSet set = eval_fixture();
  EvalOptions opts;
  opts.role = Role::kTest;
  opts.k = 3;
  opts.n_negatives = 5;
  const EvalReport rep = evaluate_scorer(
      set, opts, [&](int uid, Domain d, const std::vector<int>& items) {
        std::vector<double> s(items.size(), 0.0);
        for (std::size_t i = 0; i < items.size(); ++i) {
          if (items[i] == set.at(uid).target[d]) s[i] = 1.0;
        }
        return s;
      });
  const std::string text = format_report(rep);
  CHECK(text.find("domain x:") != std::string::npos);
  CHECK(text.find("domain y:") != std::string::npos);
  CHECK(text.find("overall:") != std::string::npos);
  CHECK(text.find("HR@3=1.0000") != std::string::npos);
  CHECK(text.find("NDCG@3=1.0000") != std::string::npos);
  CHECK(text.find("cold") != std::string::npos);
  CHECK(text.find("tailed") != std::string::npos);
  CHECK(text.find("n=4") != std::string::npos);  // pooled count
}
