#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "croptime/model.hpp"

namespace croptime {

// Relevance propagation settings. epsilon stabilizes each denominator as
// sum_z + epsilon * sign(sum_z), with sign(0) = +1. target_class = -1
// seeds the predicted class; otherwise the given class is seeded with its
// logit value.
struct LrpConfig {
  double epsilon = 1e-9;
  int target_class = -1;
};

struct LrpDiagnostics {
  long long propagated_units = 0;        // denominators evaluated
  long long near_zero_denominators = 0;  // |sum_z| < near_zero_threshold
  static constexpr double near_zero_threshold = 1e-6;
};

// One propagation step through a linear map, Eq. form
//   R_i = sum_j  x_i w_ij / (sum_i' x_i' w_i'j + eps*sign) * R_j
// weights is n_lower x n_upper; biases never enter z.
Eigen::VectorXd lrp_linear(const Eigen::VectorXd& lower_activations,
                           const Eigen::MatrixXd& weights,
                           const Eigen::VectorXd& upper_relevance,
                           double epsilon, LrpDiagnostics* diag = nullptr);

// Relevance for the self-attention block. Attention weights (and both
// softmaxes) are treated as constants, so relevance moves only through the
// output projection, the per-head mixing matrices and the value
// projection. upper_relevance sits on attn_out (T x d_model); the result
// sits on the embedded input (T x d_model).
Eigen::MatrixXd lrp_attention(const ForwardTrace& trace, const Parameters& p,
                              const Eigen::MatrixXd& upper_relevance,
                              double epsilon, LrpDiagnostics* diag = nullptr);

// Per-(band, timestep) input relevance for one sample.
struct RelevanceMap {
  Eigen::MatrixXd values;  // B x T
  int target_class = 0;
  double origin_logit = 0.0;  // the seeded logit value
  std::string parcel_id;
};

RelevanceMap relevance_map(const Parameters& p, const TimeSeriesSample& sample,
                           const DateAxis& axis, const LrpConfig& cfg = {},
                           LrpDiagnostics* diag = nullptr);

// Same, reusing an existing forward trace for the sample.
RelevanceMap relevance_map_from_trace(const ForwardTrace& trace,
                                      const Parameters& p,
                                      const std::string& parcel_id,
                                      const LrpConfig& cfg = {},
                                      LrpDiagnostics* diag = nullptr);

// R_t = sum over bands of R_{b,t}.
Eigen::VectorXd timestep_relevance(const RelevanceMap& map);

// |sum of map - origin logit| / max(|origin logit|, 1e-8).
double conservation_gap(const RelevanceMap& map);

// date,band,relevance long format plus the per-timestep variant.
std::string serialize_relevance_long(const std::vector<RelevanceMap>& maps,
                                     const DateAxis& axis,
                                     const std::vector<std::string>& band_names);
std::string serialize_relevance_timestep(const std::vector<RelevanceMap>& maps,
                                         const DateAxis& axis);

}  // namespace croptime
