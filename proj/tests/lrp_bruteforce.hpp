#pragma once

// Independent relevance oracle built from per-neuron double loops. Kept
// free of the library's vectorized kernels on purpose: tests compare the
// production path against this straight-line restatement of the rule.

#include <Eigen/Dense>

#include "croptime/model.hpp"

namespace oracle {

inline double stab(double z, double eps) {
  return z >= 0.0 ? z + eps : z - eps;
}

// R_i = sum_j x_i w_ij / (sum_i' x_i' w_i'j + eps sign) R_j, with w given
// as lower x upper. Upper units carrying zero relevance distribute
// nothing.
inline Eigen::VectorXd lrp_linear_loops(const Eigen::VectorXd& x,
                                        const Eigen::MatrixXd& w,
                                        const Eigen::VectorXd& r_up,
                                        double eps) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index j = 0; j < r_up.size(); ++j) {
    if (r_up(j) == 0.0) continue;
    double denom = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) denom += x(i) * w(i, j);
    const double scale = r_up(j) / stab(denom, eps);
    for (Eigen::Index i = 0; i < x.size(); ++i) r(i) += x(i) * w(i, j) * scale;
  }
  return r;
}

// Full-chain restatement of the production map: decoder, pooling,
// output projection, per-head attention map, value projection, the
// positional-code identity step, then the encoder stack. Returns B x T.
inline Eigen::MatrixXd relevance_map_loops(const croptime::ForwardTrace& tr,
                                           const croptime::Parameters& p,
                                           int target, double eps) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const int T = int(tr.attn_out.rows());
  const int d = p.config.d_model;
  const int n_heads = p.config.n_heads;
  const int dh = d / n_heads;

  VectorXd r = VectorXd::Zero(tr.logits.size());
  r(target) = tr.logits(target);

  for (int i = int(p.decoder.size()) - 1; i >= 0; --i) {
    const VectorXd& x =
        (i == 0) ? tr.pooled : tr.decoder_act[std::size_t(i - 1)];
    r = lrp_linear_loops(x, p.decoder[std::size_t(i)].weight.transpose(), r,
                         eps);
  }

  // pooled_c = sum_t alpha_t attn_out(t, c): one tiny map per channel.
  MatrixXd r_attn(T, d);
  for (int c = 0; c < d; ++c) {
    VectorXd up(1);
    up(0) = r(c);
    r_attn.col(c) =
        lrp_linear_loops(tr.attn_out.col(c), tr.pool_weights, up, eps);
  }

  MatrixXd r_mix(T, d);
  for (int t = 0; t < T; ++t) {
    r_mix.row(t) = lrp_linear_loops(tr.head_mix.row(t).transpose(),
                                    p.wo.weight.transpose(),
                                    r_attn.row(t).transpose(), eps)
                       .transpose();
  }

  // Z_h(t, c) = sum_s A_h(t, s) V_h(s, c): lower index s, upper index t.
  MatrixXd r_v(T, d);
  for (int h = 0; h < n_heads; ++h) {
    const MatrixXd& a = tr.attention[std::size_t(h)];
    for (int c = 0; c < dh; ++c) {
      r_v.col(h * dh + c) = lrp_linear_loops(
          tr.v.col(h * dh + c), a.transpose(), r_mix.col(h * dh + c), eps);
    }
  }

  MatrixXd r_emb(T, d);
  for (int t = 0; t < T; ++t) {
    r_emb.row(t) = lrp_linear_loops(tr.embedded.row(t).transpose(),
                                    p.wv.weight.transpose(),
                                    r_v.row(t).transpose(), eps)
                       .transpose();
  }

  // The positional code takes no share: a 1-in 1-out map with weight 1
  // whose input is the encoder output.
  MatrixXd r_enc(T, d);
  const MatrixXd& enc_out = tr.encoder_act.back();
  MatrixXd one(1, 1);
  one(0, 0) = 1.0;
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < d; ++c) {
      VectorXd x(1), up(1);
      x(0) = enc_out(t, c);
      up(0) = r_emb(t, c);
      r_enc(t, c) = lrp_linear_loops(x, one, up, eps)(0);
    }
  }

  MatrixXd r_cur = r_enc;
  for (int i = int(p.encoder.size()) - 1; i >= 0; --i) {
    const MatrixXd& x =
        (i == 0) ? tr.input : tr.encoder_act[std::size_t(i - 1)];
    MatrixXd r_next(T, x.cols());
    for (int t = 0; t < T; ++t) {
      r_next.row(t) = lrp_linear_loops(x.row(t).transpose(),
                                       p.encoder[std::size_t(i)].weight
                                           .transpose(),
                                       r_cur.row(t).transpose(), eps)
                          .transpose();
    }
    r_cur = r_next;
  }
  return r_cur.transpose();
}

}  // namespace oracle
