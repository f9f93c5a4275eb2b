// SPDX-License-Identifier: Apache-2.0
#include "imvae/nn.hpp"

namespace imvae::nn {

void zero_grads(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

double grad_norm(const ParamList& params) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->g.squaredNorm();
  return std::sqrt(sq);
}

void clip_grads(const ParamList& params, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = grad_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Param* p : params) p->g *= scale;
  }
}

void init_xavier(Param& p, Rng& rng) {
  const double std =
      std::sqrt(2.0 / static_cast<double>(p.w.rows() + p.w.cols()));
  for (Eigen::Index j = 0; j < p.w.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.w.rows(); ++i) {
      p.w(i, j) = std * rng.normal();
    }
  }
}

// ---------------------------------------------------------------------------

Mlp::Mlp(const std::string& name, int in, const std::vector<int>& hidden, int out) {
  int prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers.emplace_back(name + ".h" + std::to_string(i), prev, hidden[i]);
    prev = hidden[i];
  }
  layers.emplace_back(name + ".out", prev, out);
}

Vec Mlp::forward(const Vec& x, MlpCache& c) const {
  c.inputs.clear();
  c.preacts.clear();
  Vec cur = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    c.inputs.push_back(cur);
    Vec z = layers[i].forward(cur);
    if (i + 1 < layers.size()) {
      c.preacts.push_back(z);
      cur = z.unaryExpr([](double v) { return gelu(v); });
    } else {
      cur = std::move(z);
    }
  }
  return cur;
}

Vec Mlp::backward(const Vec& dy, const MlpCache& c) {
  Vec d = dy;
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (i + 1 < layers.size()) {
      const Vec& z = c.preacts[i];
      d = d.cwiseProduct(z.unaryExpr([](double v) { return gelu_grad(v); }));
    }
    d = layers[i].backward(c.inputs[i], d);
  }
  return d;
}

// ---------------------------------------------------------------------------

Mat LayerNorm::forward(const Mat& x, LayerNormCache& c) const {
  const auto rows = x.rows();
  const auto cols = x.cols();
  c.xhat.resize(rows, cols);
  c.inv_std.resize(rows);
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    c.inv_std(i) = inv;
    c.xhat.row(i) = (x.row(i).array() - mu) * inv;
    out.row(i) = c.xhat.row(i).cwiseProduct(gamma.w.col(0).transpose()) +
                 beta.w.col(0).transpose();
  }
  return out;
}

Mat LayerNorm::backward(const Mat& dy, const LayerNormCache& c) {
  const auto rows = dy.rows();
  const auto cols = dy.cols();
  Mat dx(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::RowVectorXd dxhat =
        dy.row(i).cwiseProduct(gamma.w.col(0).transpose());
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(c.xhat.row(i)).mean();
    dx.row(i) =
        c.inv_std(i) * (dxhat.array() - m1 - c.xhat.row(i).array() * m2).matrix();
    gamma.g.col(0) += dy.row(i).cwiseProduct(c.xhat.row(i)).transpose();
    beta.g.col(0) += dy.row(i).transpose();
  }
  (void)cols;
  return dx;
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(const std::string& name, int dim, int heads)
    : n_heads(heads),
      Wq(name + ".Wq", dim, dim), Wk(name + ".Wk", dim, dim),
      Wv(name + ".Wv", dim, dim), Wo(name + ".Wo", dim, dim),
      bq(name + ".bq", dim, 1), bk(name + ".bk", dim, 1),
      bv(name + ".bv", dim, 1), bo(name + ".bo", dim, 1) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("attention width must be divisible by head count");
  }
}

void MultiHeadAttention::collect(ParamList& out) {
  for (Param* p : {&Wq, &Wk, &Wv, &Wo, &bq, &bk, &bv, &bo}) out.push_back(p);
}

void MultiHeadAttention::init(Rng& rng) {
  for (Param* p : {&Wq, &Wk, &Wv, &Wo}) init_xavier(*p, rng);
  for (Param* p : {&bq, &bk, &bv, &bo}) p->w.setZero();
}

Mat MultiHeadAttention::forward(const Mat& q_in, const Mat& kv_in,
                                const std::vector<std::uint8_t>& kv_mask,
                                bool causal, MhaCache& c) const {
  const auto Tq = q_in.rows();
  const auto Tk = kv_in.rows();
  const int d = dim();
  const int dh = d / n_heads;
  if (causal && Tq != Tk) {
    throw ConfigError("causal attention requires equal sequence lengths");
  }
  if (static_cast<Eigen::Index>(kv_mask.size()) != Tk) {
    throw ConfigError("kv mask length does not match key sequence");
  }
  c.q_in = q_in;
  c.kv_in = kv_in;
  c.Q = (q_in * Wq.w.transpose()).rowwise() + bq.w.col(0).transpose();
  c.K = (kv_in * Wk.w.transpose()).rowwise() + bk.w.col(0).transpose();
  c.V = (kv_in * Wv.w.transpose()).rowwise() + bv.w.col(0).transpose();
  c.attn.assign(n_heads, Mat::Zero(Tq, Tk));
  c.ctx.resize(Tq, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < n_heads; ++h) {
    const auto Qh = c.Q.middleCols(h * dh, dh);
    const auto Kh = c.K.middleCols(h * dh, dh);
    const auto Vh = c.V.middleCols(h * dh, dh);
    Mat S = Qh * Kh.transpose() * scale;
    Mat& A = c.attn[h];
    for (Eigen::Index i = 0; i < Tq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < Tk; ++j) {
        if (!kv_mask[j] || (causal && j > i)) continue;
        mx = std::max(mx, S(i, j));
      }
      if (!std::isfinite(mx)) continue;  // fully masked row: zero context
      double z = 0.0;
      for (Eigen::Index j = 0; j < Tk; ++j) {
        if (!kv_mask[j] || (causal && j > i)) continue;
        const double e = std::exp(S(i, j) - mx);
        A(i, j) = e;
        z += e;
      }
      A.row(i) /= z;
    }
    c.ctx.middleCols(h * dh, dh) = A * Vh;
  }
  return (c.ctx * Wo.w.transpose()).rowwise() + bo.w.col(0).transpose();
}

void MultiHeadAttention::backward(const Mat& dout, const MhaCache& c,
                                  const std::vector<std::uint8_t>& kv_mask,
                                  bool causal, Mat& dq_in, Mat& dkv_in) {
  const auto Tq = c.q_in.rows();
  const auto Tk = c.kv_in.rows();
  const int d = dim();
  const int dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Wo.g += dout.transpose() * c.ctx;
  bo.g.col(0) += dout.colwise().sum().transpose();
  const Mat dctx = dout * Wo.w;

  Mat dQ = Mat::Zero(Tq, d), dK = Mat::Zero(Tk, d), dV = Mat::Zero(Tk, d);
  for (int h = 0; h < n_heads; ++h) {
    const auto Qh = c.Q.middleCols(h * dh, dh);
    const auto Kh = c.K.middleCols(h * dh, dh);
    const auto Vh = c.V.middleCols(h * dh, dh);
    const auto dctx_h = dctx.middleCols(h * dh, dh);
    const Mat& A = c.attn[h];
    const Mat dA = dctx_h * Vh.transpose();
    dV.middleCols(h * dh, dh) += A.transpose() * dctx_h;
    Mat dS = Mat::Zero(Tq, Tk);
    for (Eigen::Index i = 0; i < Tq; ++i) {
      double dot = 0.0;
      for (Eigen::Index j = 0; j < Tk; ++j) dot += dA(i, j) * A(i, j);
      for (Eigen::Index j = 0; j < Tk; ++j) {
        if (!kv_mask[j] || (causal && j > i)) continue;
        dS(i, j) = A(i, j) * (dA(i, j) - dot);
      }
    }
    dQ.middleCols(h * dh, dh) += dS * Kh * scale;
    dK.middleCols(h * dh, dh) += dS.transpose() * Qh * scale;
  }
  Wq.g += dQ.transpose() * c.q_in;
  bq.g.col(0) += dQ.colwise().sum().transpose();
  Wk.g += dK.transpose() * c.kv_in;
  bk.g.col(0) += dK.colwise().sum().transpose();
  Wv.g += dV.transpose() * c.kv_in;
  bv.g.col(0) += dV.colwise().sum().transpose();
  dq_in += dQ * Wq.w;
  dkv_in += dK * Wk.w + dV * Wv.w;
}

// ---------------------------------------------------------------------------

TransformerBlock::TransformerBlock(const std::string& name, int dim, int heads)
    : mha(name + ".mha", dim, heads),
      ln1(name + ".ln1", dim), ln2(name + ".ln2", dim),
      ff1(name + ".ff1", dim, dim), ff2(name + ".ff2", dim, dim) {}

void TransformerBlock::collect(ParamList& out) {
  mha.collect(out);
  ln1.collect(out);
  ln2.collect(out);
  ff1.collect(out);
  ff2.collect(out);
}

void TransformerBlock::init(Rng& rng) {
  mha.init(rng);
  ln1.reset();
  ln2.reset();
  ff1.init(rng);
  ff2.init(rng);
}

Mat TransformerBlock::forward(const Mat& x, const std::vector<std::uint8_t>& mask,
                              const Mat* drop_att, const Mat* drop_ff,
                              BlockCache& c) const {
  c.x = x;
  c.mask = mask;
  c.drop_att = drop_att;
  c.drop_ff = drop_ff;
  c.xn1 = ln1.forward(x, c.ln1);
  c.att = mha.forward(c.xn1, c.xn1, mask, /*causal=*/true, c.mha);
  Mat att_d = drop_att ? c.att.cwiseProduct(*drop_att) : c.att;
  c.r1 = x + att_d;
  c.xn2 = ln2.forward(c.r1, c.ln2);
  c.ff_pre = ff1.forward_rows(c.xn2);
  c.ff_hidden = c.ff_pre.unaryExpr([](double v) { return gelu(v); });
  Mat f = ff2.forward_rows(c.ff_hidden);
  Mat f_d = drop_ff ? f.cwiseProduct(*drop_ff) : std::move(f);
  return c.r1 + f_d;
}

Mat TransformerBlock::backward(const Mat& dout, BlockCache& c) {
  Mat df = c.drop_ff ? dout.cwiseProduct(*c.drop_ff) : dout;
  Mat dhidden = ff2.backward_rows(c.ff_hidden, df);
  Mat dpre =
      dhidden.cwiseProduct(c.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }));
  Mat dxn2 = ff1.backward_rows(c.xn2, dpre);
  Mat dr1 = dout + ln2.backward(dxn2, c.ln2);

  Mat datt = c.drop_att ? dr1.cwiseProduct(*c.drop_att) : dr1;
  Mat dxn1 = Mat::Zero(c.x.rows(), c.x.cols());
  mha.backward(datt, c.mha, c.mask, /*causal=*/true, dxn1, dxn1);
  return dr1 + ln1.backward(dxn1, c.ln1);
}

// ---------------------------------------------------------------------------

void Adam::attach(const ParamList& params) {
  m.clear();
  v.clear();
  t = 0;
  for (const Param* p : params) {
    m.push_back(Mat::Zero(p->w.rows(), p->w.cols()));
    v.push_back(Mat::Zero(p->w.rows(), p->w.cols()));
  }
}

void Adam::step(const ParamList& params) {
  if (m.size() != params.size()) {
    throw ConfigError("Adam state not attached to this parameter list");
  }
  clip_grads(params, clip);
  ++t;
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * p.g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * p.g.cwiseProduct(p.g);
    p.w.array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
  }
}

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  const double keep = 1.0 - p;
  return Mat::NullaryExpr(rows, cols, [&](Eigen::Index, Eigen::Index) {
    return rng.uniform() < p ? 0.0 : 1.0 / keep;
  });
}

}  // namespace imvae::nn
