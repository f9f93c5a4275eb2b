// SPDX-License-Identifier: Apache-2.0
#include "imvae/common.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace imvae;

TEST_CASE("fnv1a matches published test vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
  const char bytes[] = {'f', 'o', 'o', 'b', 'a', 'r'};
  CHECK(fnv1a_bytes(bytes, 6) == fnv1a("foobar"));
}

TEST_CASE("splitmix64 matches the reference sequence") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(splitmix64(1) == 0x910a2dec89025cc1ULL);
}

TEST_CASE("derive_seed separates tags and arguments") {
  const std::uint64_t a = derive_seed(7, "epoch_shuffle", 0);
  CHECK(a == derive_seed(7, "epoch_shuffle", 0));  // reproducible
  std::set<std::uint64_t> seen{a};
  CHECK(seen.insert(derive_seed(7, "epoch_shuffle", 1)).second);
  CHECK(seen.insert(derive_seed(7, "user_pass", 0)).second);
  CHECK(seen.insert(derive_seed(8, "epoch_shuffle", 0)).second);
  CHECK(seen.insert(derive_seed(7, "epoch_shuffle", 0, 1)).second);
}

TEST_CASE("hex64 renders fixed-width lowercase hex") {
  CHECK(hex64(0) == "0000000000000000");
  CHECK(hex64(255) == "00000000000000ff");
  CHECK(hex64(0xDEADBEEFULL) == "00000000deadbeef");
}

TEST_CASE("Rng::below stays in range and is unbiased enough") {
  Rng rng(123);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto v = rng.below(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) CHECK(std::abs(c - n / 7) < 500);  // ~5 sigma
  CHECK_THROWS(rng.below(0));
}

TEST_CASE("Rng::uniform lies in [0,1)") {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("Rng::normal has the right first two moments") {
  Rng rng(99);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("Rng streams are reproducible and seed-sensitive") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
    all_equal = all_equal && (x == y);
    any_diff = any_diff || (x != z);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("Rng::shuffle is a permutation and deterministic") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  std::vector<int> w = v;
  Rng a(7), b(7);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("sample_without_replacement draws distinct in-range values") {
  Rng rng(11);
  SUBCASE("sparse draw") {
    const auto s = rng.sample_without_replacement(1000000, 50);
    REQUIRE(s.size() == 50);
    std::set<int> uniq(s.begin(), s.end());
    CHECK(uniq.size() == 50);
    for (int v : s) CHECK(v < 1000000);
  }
  SUBCASE("exhaustive draw returns every element") {
    const auto s = rng.sample_without_replacement(20, 20);
    std::set<int> uniq(s.begin(), s.end());
    REQUIRE(uniq.size() == 20);
    CHECK(*uniq.begin() == 0);
    CHECK(*uniq.rbegin() == 19);
  }
  SUBCASE("dense draw") {
    const auto s = rng.sample_without_replacement(30, 25);
    std::set<int> uniq(s.begin(), s.end());
    CHECK(uniq.size() == 25);
    for (int v : s) {
      CHECK(v >= 0);
      CHECK(v < 30);
    }
  }
}
