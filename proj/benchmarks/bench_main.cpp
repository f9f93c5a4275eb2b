// SPDX-License-Identifier: Apache-2.0
// Microbenchmarks for the numeric hot paths: divergence terms, the shared
// attention block (forward and backward), and candidate ranking.

#include "imvae/nn.hpp"
#include "imvae/objective.hpp"
#include "imvae/evalharness.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace imvae;

void fill_normal(Mat& m, Rng& rng, double scale) {
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
}

void BM_KlDiagGaussians(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  GaussianParams q;
  q.mu = Vec::Constant(dim, 0.3);
  q.sigma = Vec::Constant(dim, 1.2);
  const GaussianParams p = GaussianParams::standard(dim);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kl_diag_gaussians(q, p));
  }
}
BENCHMARK(BM_KlDiagGaussians)->Arg(32)->Arg(128)->Arg(512);

void BM_AttentionForward(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  const int dim = 64;
  Rng rng(7);
  nn::MultiHeadAttention mha("bench", dim, 4);
  mha.init(rng);
  Mat x(T, dim);
  fill_normal(x, rng, 1.0);
  std::vector<std::uint8_t> mask(T, 1);
  nn::MhaCache cache;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mha.forward(x, x, mask, /*causal=*/true, cache));
  }
}
BENCHMARK(BM_AttentionForward)->Arg(20)->Arg(40)->Arg(80);

void BM_AttentionBackward(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  const int dim = 64;
  Rng rng(7);
  nn::MultiHeadAttention mha("bench", dim, 4);
  mha.init(rng);
  Mat x(T, dim), dout(T, dim);
  fill_normal(x, rng, 1.0);
  fill_normal(dout, rng, 1.0);
  std::vector<std::uint8_t> mask(T, 1);
  nn::MhaCache cache;
  mha.forward(x, x, mask, /*causal=*/true, cache);
  Mat dq = Mat::Zero(T, dim), dkv = Mat::Zero(T, dim);
  for (auto _ : state) {
    dq.setZero();
    dkv.setZero();
    mha.backward(dout, cache, mask, /*causal=*/true, dq, dkv);
    benchmark::DoNotOptimize(dq);
  }
}
BENCHMARK(BM_AttentionBackward)->Arg(20)->Arg(40)->Arg(80);

void BM_RankMetrics(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(3);
  std::vector<double> negs(n);
  for (double& s : negs) s = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(rank_metrics(0.5, negs, 10));
  }
}
BENCHMARK(BM_RankMetrics)->Arg(999);

}  // namespace

BENCHMARK_MAIN();
