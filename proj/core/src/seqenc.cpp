// SPDX-License-Identifier: Apache-2.0
#include "imvae/seqenc.hpp"

namespace imvae {

Vec masked_mean(const Mat& rep, const std::vector<std::uint8_t>& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != rep.rows()) {
    throw ConfigError("pool mask length does not match representation");
  }
  Vec out = Vec::Zero(rep.cols());
  int n = 0;
  for (Eigen::Index i = 0; i < rep.rows(); ++i) {
    if (mask[i]) {
      out += rep.row(i).transpose();
      ++n;
    }
  }
  if (n > 0) out /= static_cast<double>(n);
  return out;
}

void masked_mean_backward(const Vec& dpooled, const std::vector<std::uint8_t>& mask,
                          Mat& drep) {
  int n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  if (n == 0) return;
  const Eigen::RowVectorXd share = dpooled.transpose() / static_cast<double>(n);
  for (Eigen::Index i = 0; i < drep.rows(); ++i) {
    if (mask[i]) drep.row(i) += share;
  }
}

SeqEncoder::SeqEncoder(int dim_, int heads, int T_, int Tp_, int n_items_x,
                       int n_items_y)
    : dim(dim_), n_heads(heads), T(T_), Tp(Tp_),
      items{nn::Param("seq.items_x", n_items_x + 1, dim_),
            nn::Param("seq.items_y", n_items_y + 1, dim_)},
      pos_real("seq.pos_real", T_, dim_),
      pos_pseudo("seq.pos_pseudo", Tp_, dim_),
      block("seq.block", dim_, heads) {
  if (T <= 0 || Tp <= 0) throw ConfigError("sequence lengths must be positive");
}

void SeqEncoder::collect(nn::ParamList& out) {
  for (auto& p : items) out.push_back(&p);
  out.push_back(&pos_real);
  out.push_back(&pos_pseudo);
  block.collect(out);
}

void SeqEncoder::init(Rng& rng) {
  for (auto& p : items) {
    for (Eigen::Index j = 0; j < p.w.cols(); ++j) {
      for (Eigen::Index i = 0; i < p.w.rows(); ++i) p.w(i, j) = 0.1 * rng.normal();
    }
  }
  for (nn::Param* p : {&pos_real, &pos_pseudo}) {
    for (Eigen::Index j = 0; j < p->w.cols(); ++j) {
      for (Eigen::Index i = 0; i < p->w.rows(); ++i) p->w(i, j) = 0.1 * rng.normal();
    }
  }
  block.init(rng);
  freeze_pad_rows();
}

void SeqEncoder::freeze_pad_rows() {
  for (auto& p : items) {
    p.w.row(0).setZero();
    p.g.row(0).setZero();
  }
}

Mat SeqEncoder::embed(Domain d, SeqKind kind, const std::vector<int>& seq) const {
  const int len = seq_len(kind);
  if (static_cast<int>(seq.size()) != len) {
    throw ConfigError("sequence length does not match position table");
  }
  const Mat& table = items[d].w;
  const Mat& pos = pos_table(kind).w;
  Mat emb(len, dim);
  for (int i = 0; i < len; ++i) {
    const int it = seq[i];
    if (it < 0 || it >= table.rows()) {
      throw ConfigError("item id out of range for domain " +
                        std::string(domain_name(d)));
    }
    emb.row(i) = table.row(it) + pos.row(i);
  }
  return emb;
}

Vec SeqEncoder::forward(Domain d, SeqKind kind, const std::vector<int>& seq,
                        const Mat* drop_att, const Mat* drop_ff,
                        SeqCache& c) const {
  c.seq = seq;
  c.domain = d;
  c.kind = kind;
  c.mask.resize(seq.size());
  c.n_real = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    c.mask[i] = seq[i] != kPad;
    c.n_real += c.mask[i];
  }
  c.emb = embed(d, kind, seq);
  c.rep = block.forward(c.emb, c.mask, drop_att, drop_ff, c.block);
  c.pooled = masked_mean(c.rep, c.mask);
  return c.pooled;
}

void SeqEncoder::backward(const Vec& dpooled, const Mat& drep_extra, SeqCache& c) {
  Mat drep = Mat::Zero(c.rep.rows(), c.rep.cols());
  if (drep_extra.size() > 0) drep += drep_extra;
  masked_mean_backward(dpooled, c.mask, drep);
  const Mat demb = block.backward(drep, c.block);
  nn::Param& table = items[c.domain];
  nn::Param& pos = c.kind == SeqKind::kReal ? pos_real : pos_pseudo;
  for (Eigen::Index i = 0; i < demb.rows(); ++i) {
    const int it = c.seq[static_cast<std::size_t>(i)];
    if (it != kPad) table.g.row(it) += demb.row(i);
    pos.g.row(i) += demb.row(i);
  }
}

}  // namespace imvae
