#include "croptime/lrp.hpp"

#include <cmath>

#include "croptime/errors.hpp"

namespace croptime {

namespace {

// sum_z + eps * sign(sum_z), with sign(0) = +1.
inline double stabilize(double z, double eps) {
  return z >= 0.0 ? z + eps : z - eps;
}

void count_unit(LrpDiagnostics* diag, double denom) {
  if (!diag) return;
  diag->propagated_units += 1;
  if (std::abs(denom) < LrpDiagnostics::near_zero_threshold) {
    diag->near_zero_denominators += 1;
  }
}

// Share factor per upper unit. Units carrying zero relevance distribute
// nothing, so their (possibly zero) denominators never enter the result.
inline double share(double relevance, double denom, double eps,
                    LrpDiagnostics* diag) {
  if (relevance == 0.0) return 0.0;
  count_unit(diag, denom);
  return relevance / stabilize(denom, eps);
}

// One step through y = W x (+ ignored bias); W is out x in, applied to
// every row of X independently. R sits on the rows of the output.
Eigen::MatrixXd step_linear_rows(const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& W,
                                 const Eigen::MatrixXd& R, double eps,
                                 LrpDiagnostics* diag) {
  const Eigen::MatrixXd denom = X * W.transpose();
  Eigen::MatrixXd S(R.rows(), R.cols());
  for (Eigen::Index r = 0; r < R.rows(); ++r) {
    for (Eigen::Index c = 0; c < R.cols(); ++c) {
      S(r, c) = share(R(r, c), denom(r, c), eps, diag);
    }
  }
  return (S * W).cwiseProduct(X);
}

Eigen::VectorXd step_linear_vec(const Eigen::VectorXd& x,
                                const Eigen::MatrixXd& W,
                                const Eigen::VectorXd& R, double eps,
                                LrpDiagnostics* diag) {
  const Eigen::VectorXd denom = W * x;
  Eigen::VectorXd s(R.size());
  for (Eigen::Index j = 0; j < R.size(); ++j) {
    s(j) = share(R(j), denom(j), eps, diag);
  }
  return (W.transpose() * s).cwiseProduct(x);
}

}  // namespace

Eigen::VectorXd lrp_linear(const Eigen::VectorXd& lower_activations,
                           const Eigen::MatrixXd& weights,
                           const Eigen::VectorXd& upper_relevance,
                           double epsilon, LrpDiagnostics* diag) {
  if (weights.rows() != lower_activations.size() ||
      weights.cols() != upper_relevance.size()) {
    throw ValidationError("lrp_linear shape mismatch");
  }
  if (epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
  // weights here is lower x upper; reuse the out x in kernel transposed.
  return step_linear_vec(lower_activations, weights.transpose(),
                         upper_relevance, epsilon, diag);
}

Eigen::MatrixXd lrp_attention(const ForwardTrace& trace, const Parameters& p,
                              const Eigen::MatrixXd& upper_relevance,
                              double epsilon, LrpDiagnostics* diag) {
  const int d = p.config.d_model;
  const int H = p.config.n_heads;
  const int dh = d / H;
  const int T = int(trace.attn_out.rows());
  if (upper_relevance.rows() != T || upper_relevance.cols() != d) {
    throw ValidationError("lrp_attention relevance shape mismatch");
  }

  // Output projection.
  Eigen::MatrixXd r_mix = step_linear_rows(trace.head_mix, p.wo.weight,
                                           upper_relevance, epsilon, diag);

  // Per-head mixing, with the attention matrix as a fixed linear map:
  // Z_h = A_h V_h, so relevance for V_h(s, c) collects A_h(t, s) shares.
  Eigen::MatrixXd r_values(T, d);
  for (int h = 0; h < H; ++h) {
    const Eigen::MatrixXd& a = trace.attention[std::size_t(h)];
    const auto vh = trace.v.middleCols(h * dh, dh);
    const auto zh = trace.head_mix.middleCols(h * dh, dh);
    const auto rh = r_mix.middleCols(h * dh, dh);
    Eigen::MatrixXd s(T, dh);
    for (int t = 0; t < T; ++t) {
      for (int c = 0; c < dh; ++c) {
        s(t, c) = share(rh(t, c), zh(t, c), epsilon, diag);
      }
    }
    r_values.middleCols(h * dh, dh) = (a.transpose() * s).cwiseProduct(vh);
  }

  // Value projection, back onto the embedded sequence.
  return step_linear_rows(trace.embedded, p.wv.weight, r_values, epsilon, diag);
}

RelevanceMap relevance_map_from_trace(const ForwardTrace& trace,
                                      const Parameters& p,
                                      const std::string& parcel_id,
                                      const LrpConfig& cfg,
                                      LrpDiagnostics* diag) {
  if (cfg.epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
  const int C = int(trace.logits.size());
  int target = cfg.target_class;
  if (target < 0) {
    target = 0;
    for (int c = 1; c < C; ++c) {
      if (trace.logits(c) > trace.logits(target)) target = c;
    }
  }
  if (target >= C) {
    throw ConfigError("target class " + std::to_string(target) +
                      " outside [0, " + std::to_string(C) + ")");
  }

  RelevanceMap map;
  map.parcel_id = parcel_id;
  map.target_class = target;
  map.origin_logit = trace.logits(target);

  // Seed the chosen logit with its own value.
  Eigen::VectorXd r_vec = Eigen::VectorXd::Zero(C);
  r_vec(target) = map.origin_logit;

  for (int i = int(p.decoder.size()) - 1; i >= 0; --i) {
    const Eigen::VectorXd& input =
        (i == 0) ? trace.pooled : trace.decoder_act[std::size_t(i - 1)];
    r_vec = step_linear_vec(input, p.decoder[std::size_t(i)].weight, r_vec,
                            cfg.epsilon, diag);
  }

  // Pooling: pooled_c = sum_t alpha_t attn_out(t, c); alpha is constant.
  const int T = int(trace.attn_out.rows());
  const int d = p.config.d_model;
  Eigen::MatrixXd r_pool(T, d);
  {
    Eigen::VectorXd s(d);
    for (int c = 0; c < d; ++c) {
      s(c) = share(r_vec(c), trace.pooled(c), cfg.epsilon, diag);
    }
    r_pool = (trace.pool_weights * s.transpose()).cwiseProduct(trace.attn_out);
  }

  Eigen::MatrixXd r_emb = lrp_attention(trace, p, r_pool, cfg.epsilon, diag);

  // The positional code is an additive constant: it takes no share, so
  // each embedded unit hands its relevance to the encoder output under
  // the same stabilized fraction (denominator = the encoder activation).
  const Eigen::MatrixXd& enc_out = trace.encoder_act.back();
  Eigen::MatrixXd r_mat(T, d);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < d; ++c) {
      r_mat(t, c) = share(r_emb(t, c), enc_out(t, c), cfg.epsilon, diag) *
                    enc_out(t, c);
    }
  }

  for (int i = int(p.encoder.size()) - 1; i >= 0; --i) {
    const Eigen::MatrixXd& input =
        (i == 0) ? trace.input : trace.encoder_act[std::size_t(i - 1)];
    r_mat = step_linear_rows(input, p.encoder[std::size_t(i)].weight, r_mat,
                             cfg.epsilon, diag);
  }

  map.values = r_mat.transpose();  // B x T
  return map;
}

RelevanceMap relevance_map(const Parameters& p, const TimeSeriesSample& sample,
                           const DateAxis& axis, const LrpConfig& cfg,
                           LrpDiagnostics* diag) {
  const ForwardTrace trace = forward(p, sample, axis);
  return relevance_map_from_trace(trace, p, sample.parcel_id, cfg, diag);
}

Eigen::VectorXd timestep_relevance(const RelevanceMap& map) {
  return map.values.colwise().sum().transpose();
}

double conservation_gap(const RelevanceMap& map) {
  const double total = map.values.sum();
  return std::abs(total - map.origin_logit) /
         std::max(std::abs(map.origin_logit), 1e-8);
}

std::string serialize_relevance_long(const std::vector<RelevanceMap>& maps,
                                     const DateAxis& axis,
                                     const std::vector<std::string>& band_names) {
  std::string out = "parcel_id,target_class,date,band,relevance\n";
  for (const RelevanceMap& m : maps) {
    for (int t = 0; t < m.values.cols(); ++t) {
      for (int b = 0; b < m.values.rows(); ++b) {
        out += m.parcel_id;
        out += ',';
        out += std::to_string(m.target_class);
        out += ',';
        out += format_iso_date(axis.date(t));
        out += ',';
        out += band_names[std::size_t(b)];
        out += ',';
        out += format_real(m.values(b, t), 9);
        out += '\n';
      }
    }
  }
  return out;
}

std::string serialize_relevance_timestep(const std::vector<RelevanceMap>& maps,
                                         const DateAxis& axis) {
  std::string out = "parcel_id,target_class,date,r_t\n";
  for (const RelevanceMap& m : maps) {
    const Eigen::VectorXd r_t = timestep_relevance(m);
    for (int t = 0; t < r_t.size(); ++t) {
      out += m.parcel_id;
      out += ',';
      out += std::to_string(m.target_class);
      out += ',';
      out += format_iso_date(axis.date(t));
      out += ',';
      out += format_real(r_t(t), 9);
      out += '\n';
    }
  }
  return out;
}

}  // namespace croptime
