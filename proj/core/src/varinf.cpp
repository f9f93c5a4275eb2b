// SPDX-License-Identifier: Apache-2.0
#include "imvae/varinf.hpp"

#include "imvae/seqenc.hpp"

namespace imvae {

GaussianParams CrossEncoder::forward(const Mat& tgt_rep,
                                     const std::vector<std::uint8_t>& tgt_mask,
                                     const Vec& tgt_pooled, const Mat& src_rep,
                                     const std::vector<std::uint8_t>& src_mask,
                                     const Vec& src_pooled, CrossCache& c) const {
  if (mode == CrossMode::kAttention) {
    c.out_rows = mha.forward(tgt_rep, src_rep, src_mask, /*causal=*/false, c.mha);
    c.head_in = masked_mean(c.out_rows, tgt_mask);
  } else {
    c.head_in.resize(tgt_pooled.size() + src_pooled.size());
    c.head_in << tgt_pooled, src_pooled;
  }
  return head.forward(c.head_in, c.head_c);
}

void CrossEncoder::backward(const Vec& dmu, const Vec& dsigma, CrossCache& c,
                            const std::vector<std::uint8_t>& tgt_mask,
                            const std::vector<std::uint8_t>& src_mask,
                            Mat& dtgt_rep, Mat& dsrc_rep, Vec& dtgt_pooled,
                            Vec& dsrc_pooled) {
  const Vec din = head.backward(dmu, dsigma, c.head_c);
  if (mode == CrossMode::kAttention) {
    Mat dout = Mat::Zero(c.out_rows.rows(), c.out_rows.cols());
    masked_mean_backward(din, tgt_mask, dout);
    mha.backward(dout, c.mha, src_mask, /*causal=*/false, dtgt_rep, dsrc_rep);
  } else {
    const auto d = dtgt_pooled.size();
    dtgt_pooled += din.head(d);
    dsrc_pooled += din.tail(din.size() - d);
  }
}

}  // namespace imvae
