// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace imvae::nn {

// ---------------------------------------------------------------------------
// Activations (exact-erf GELU keeps finite-difference probes smooth).
// ---------------------------------------------------------------------------

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Inverse of softplus; used to bias scale heads toward unit sigma at init.
inline double softplus_inv(double y) { return std::log(std::expm1(y)); }

// ---------------------------------------------------------------------------
// Parameters. Every trainable tensor is a named Mat with a matching grad
// buffer; modules expose their parameters through collect().
// ---------------------------------------------------------------------------

struct Param {
  std::string name;
  Mat w, g;
  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), w(Mat::Zero(rows, cols)), g(Mat::Zero(rows, cols)) {}
  void zero_grad() { g.setZero(); }
};

using ParamList = std::vector<Param*>;

void zero_grads(const ParamList& params);
double grad_norm(const ParamList& params);
void clip_grads(const ParamList& params, double max_norm);

// Xavier-normal init for weight matrices (fan_in = cols, fan_out = rows).
void init_xavier(Param& p, Rng& rng);

// ---------------------------------------------------------------------------
// Dense: y = W x + b on vectors, Y = X W^T + 1 b^T row-wise on matrices.
// ---------------------------------------------------------------------------

struct Dense {
  Param W, b;
  Dense() = default;
  Dense(const std::string& name, int in, int out)
      : W(name + ".W", out, in), b(name + ".b", out, 1) {}

  int in_dim() const { return static_cast<int>(W.w.cols()); }
  int out_dim() const { return static_cast<int>(W.w.rows()); }
  void collect(ParamList& out) { out.push_back(&W); out.push_back(&b); }
  void init(Rng& rng) { init_xavier(W, rng); b.w.setZero(); }

  Vec forward(const Vec& x) const { return W.w * x + b.w.col(0); }
  // dx accumulated and returned; parameter grads accumulated in place.
  Vec backward(const Vec& x, const Vec& dy) {
    W.g += dy * x.transpose();
    b.g.col(0) += dy;
    return W.w.transpose() * dy;
  }

  Mat forward_rows(const Mat& X) const {
    return (X * W.w.transpose()).rowwise() + b.w.col(0).transpose();
  }
  Mat backward_rows(const Mat& X, const Mat& dY) {
    W.g += dY.transpose() * X;
    b.g.col(0) += dY.colwise().sum().transpose();
    return dY * W.w;
  }
};

// ---------------------------------------------------------------------------
// MLP on vectors: GELU between layers, linear output.
// ---------------------------------------------------------------------------

struct MlpCache {
  std::vector<Vec> inputs;   // input to each layer
  std::vector<Vec> preacts;  // pre-activation of each hidden layer
};

struct Mlp {
  std::vector<Dense> layers;
  Mlp() = default;
  Mlp(const std::string& name, int in, const std::vector<int>& hidden, int out);

  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }
  void collect(ParamList& out) { for (auto& l : layers) l.collect(out); }
  void init(Rng& rng) { for (auto& l : layers) l.init(rng); }

  Vec forward(const Vec& x, MlpCache& c) const;
  Vec backward(const Vec& dy, const MlpCache& c);
};

// ---------------------------------------------------------------------------
// Row-wise LayerNorm.
// ---------------------------------------------------------------------------

struct LayerNormCache {
  Mat xhat;
  Vec inv_std;  // per row
};

struct LayerNorm {
  Param gamma, beta;
  double eps = 1e-8;
  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim)
      : gamma(name + ".gamma", dim, 1), beta(name + ".beta", dim, 1) {
    gamma.w.setOnes();
  }
  void collect(ParamList& out) { out.push_back(&gamma); out.push_back(&beta); }
  void reset() { gamma.w.setOnes(); beta.w.setZero(); }

  Mat forward(const Mat& x, LayerNormCache& c) const;
  Mat backward(const Mat& dy, const LayerNormCache& c);
};

// ---------------------------------------------------------------------------
// Multi-head attention. Rows are positions. kv_mask marks attendable keys;
// causal restricts row i to keys j <= i (requires equal lengths). Query rows
// with no visible keys produce zero context.
// ---------------------------------------------------------------------------

struct MhaCache {
  Mat q_in, kv_in;
  Mat Q, K, V;
  std::vector<Mat> attn;  // per head, rows sum to 1 (or 0 when fully masked)
  Mat ctx;
};

struct MultiHeadAttention {
  int n_heads = 1;
  Param Wq, Wk, Wv, Wo, bq, bk, bv, bo;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int dim, int heads);

  int dim() const { return static_cast<int>(Wq.w.rows()); }
  void collect(ParamList& out);
  void init(Rng& rng);

  Mat forward(const Mat& q_in, const Mat& kv_in,
              const std::vector<std::uint8_t>& kv_mask, bool causal,
              MhaCache& c) const;
  // Accumulates input grads into dq_in / dkv_in (must be pre-sized & zeroed by
  // caller or already holding other contributions).
  void backward(const Mat& dout, const MhaCache& c,
                const std::vector<std::uint8_t>& kv_mask, bool causal,
                Mat& dq_in, Mat& dkv_in);
};

// ---------------------------------------------------------------------------
// Pre-LN transformer block: self-attention + position-wise feed-forward with
// residuals. Dropout is applied via caller-supplied masks (entries already
// scaled by 1/(1-p)); null masks disable dropout.
// ---------------------------------------------------------------------------

struct BlockCache {
  LayerNormCache ln1, ln2;
  MhaCache mha;
  Mat x, xn1, att, r1, xn2, ff_pre, ff_hidden;
  const Mat* drop_att = nullptr;
  const Mat* drop_ff = nullptr;
  std::vector<std::uint8_t> mask;
};

struct TransformerBlock {
  MultiHeadAttention mha;
  LayerNorm ln1, ln2;
  Dense ff1, ff2;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int dim, int heads);

  void collect(ParamList& out);
  void init(Rng& rng);

  Mat forward(const Mat& x, const std::vector<std::uint8_t>& mask,
              const Mat* drop_att, const Mat* drop_ff, BlockCache& c) const;
  Mat backward(const Mat& dout, BlockCache& c);
};

// ---------------------------------------------------------------------------
// Adam with global-norm gradient clipping.
// ---------------------------------------------------------------------------

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip = 0.0;  // 0 disables clipping
  int t = 0;
  std::vector<Mat> m, v;

  void attach(const ParamList& params);
  void step(const ParamList& params);
};

// Scaled dropout mask: entries are 0 with probability p, else 1/(1-p).
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);

}  // namespace imvae::nn
