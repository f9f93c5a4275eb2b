// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"
#include "imvae/corpus.hpp"
#include "imvae/nn.hpp"

namespace imvae {

// Real input windows and pseudo-sequences are encoded by the same machinery
// but carry separate position tables (lengths T and Tp differ).
enum class SeqKind : int { kReal = 0, kPseudo = 1 };

struct SeqCache {
  std::vector<int> seq;
  std::vector<std::uint8_t> mask;  // 1 for non-PAD positions
  Mat emb;
  nn::BlockCache block;
  Mat rep;        // attended representation, rows = positions
  Vec pooled;     // masked mean over real rows (zero vector if none)
  int n_real = 0;
  Domain domain = kX;
  SeqKind kind = SeqKind::kReal;
};

// Masked mean pooling; rep rows where mask==0 are ignored. All-PAD input
// pools to the zero vector.
Vec masked_mean(const Mat& rep, const std::vector<std::uint8_t>& mask);
// Backward of masked_mean into drep (accumulates).
void masked_mean_backward(const Vec& dpooled, const std::vector<std::uint8_t>& mask,
                          Mat& drep);

// ---------------------------------------------------------------------------
// Shared sequential encoder: per-domain item tables (row 0 = PAD, held at
// zero), a position table per sequence kind, and one causal self-attention
// block shared across domains and kinds.
// ---------------------------------------------------------------------------

struct SeqEncoder {
  int dim = 0, n_heads = 0, T = 0, Tp = 0;
  std::array<nn::Param, kNumDomains> items;  // (n_items[d]+1) x dim
  nn::Param pos_real;                        // T x dim
  nn::Param pos_pseudo;                      // Tp x dim
  nn::TransformerBlock block;

  SeqEncoder() = default;
  SeqEncoder(int dim, int heads, int T, int Tp, int n_items_x, int n_items_y);

  void collect(nn::ParamList& out);
  void init(Rng& rng);
  // Re-freeze PAD rows (call after every optimizer step).
  void freeze_pad_rows();

  int seq_len(SeqKind kind) const { return kind == SeqKind::kReal ? T : Tp; }
  const nn::Param& pos_table(SeqKind kind) const {
    return kind == SeqKind::kReal ? pos_real : pos_pseudo;
  }

  // Item rows + position rows; rejects sequences of the wrong length or with
  // out-of-range item ids.
  Mat embed(Domain d, SeqKind kind, const std::vector<int>& seq) const;

  // embed -> causal self-attention -> masked mean. Dropout masks optional.
  Vec forward(Domain d, SeqKind kind, const std::vector<int>& seq,
              const Mat* drop_att, const Mat* drop_ff, SeqCache& c) const;

  // dpooled: gradient on the pooled vector. drep_extra: additional per-row
  // gradient on the attended representation (e.g. from cross-attention), may
  // be empty. Accumulates parameter grads.
  void backward(const Vec& dpooled, const Mat& drep_extra, SeqCache& c);
};

}  // namespace imvae
