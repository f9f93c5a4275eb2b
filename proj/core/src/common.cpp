// SPDX-License-Identifier: Apache-2.0
#include "imvae/common.hpp"

#include <algorithm>
#include <cstdio>

namespace imvae {

std::vector<int> Rng::sample_without_replacement(int n, int k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  if (k * 3 >= n) {
    // Dense case: partial Fisher-Yates over the full index range.
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      const int j = i + below_int(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }
  // Sparse case: rejection against a sorted accept list.
  std::vector<int> out;
  out.reserve(k);
  std::vector<int> sorted;
  sorted.reserve(k);
  while (static_cast<int>(out.size()) < k) {
    const int c = below_int(n);
    auto it = std::lower_bound(sorted.begin(), sorted.end(), c);
    if (it != sorted.end() && *it == c) continue;
    sorted.insert(it, c);
    out.push_back(c);
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace imvae
