#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "croptime/dataio.hpp"

namespace croptime {

struct ModelConfig {
  int bands = 13;
  int n_classes = 8;
  int t_max = 52;
  int d_model = 64;
  int n_heads = 4;
  // Encoder layer widths; the last one must equal d_model. Hidden layers
  // are ReLU, the final encoder layer is linear so the embedding that the
  // positional code is added to is rarely exactly zero.
  std::vector<int> encoder_dims = {32, 64};
  // Decoder hidden widths (ReLU); a final linear layer to n_classes is
  // always appended.
  std::vector<int> decoder_dims = {64, 32};
  std::string positional_encoding = "sinusoidal-day-of-year";
};

void validate_model_config(const ModelConfig& cfg);

struct LinearLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// Every learnable array of the model, in the canonical order used by the
// model file and by the optimizer: encoder layers, the four attention
// projections, the pooling query, decoder layers.
struct Parameters {
  ModelConfig config;
  std::vector<LinearLayer> encoder;
  LinearLayer wq, wk, wv, wo;
  Eigen::VectorXd pool_query;  // d_model
  std::vector<LinearLayer> decoder;

  long long parameter_count() const;
};

// Glorot-uniform weights (half-width sqrt(6/(fan_in+fan_out))), zero
// biases; deterministic for a fixed seed.
Parameters init_model(const ModelConfig& cfg, std::uint64_t seed);

// Zero-valued gradients (or optimizer state) with the same shape as p.
Parameters zeros_like(const Parameters& p);

// Visits every parameter array in canonical order. Used by the optimizer,
// the finite-difference checks and the serializer, so the order is the
// single source of truth.
template <class F>
void visit_params(Parameters& p, F&& f) {
  for (auto& l : p.encoder) {
    f(l.weight);
    f(l.bias);
  }
  for (LinearLayer* l : {&p.wq, &p.wk, &p.wv, &p.wo}) {
    f(l->weight);
    f(l->bias);
  }
  f(p.pool_query);
  for (auto& l : p.decoder) {
    f(l.weight);
    f(l.bias);
  }
}

template <class F>
void visit_params(const Parameters& p, F&& f) {
  visit_params(const_cast<Parameters&>(p), [&](auto& arr) {
    f(const_cast<const std::remove_reference_t<decltype(arr)>&>(arr));
  });
}

// Everything the forward pass computed, kept for the backward pass and for
// relevance propagation. Matrices are T x width; masked timesteps carry
// all-zero rows in embedded/attention/pooling quantities.
struct ForwardTrace {
  Eigen::MatrixXd input;                    // T x B
  std::vector<Eigen::MatrixXd> encoder_pre;  // T x width per layer
  std::vector<Eigen::MatrixXd> encoder_act;  // post-activation
  Eigen::MatrixXd pos_code;                 // T x d_model
  Eigen::MatrixXd embedded;                 // encoder output + pos_code
  Eigen::MatrixXd q, k, v;                  // T x d_model
  std::vector<Eigen::MatrixXd> attention;   // n_heads matrices, T x T
  Eigen::MatrixXd head_mix;                 // T x d_model (attention . V)
  Eigen::MatrixXd attn_out;                 // T x d_model (after W_o)
  Eigen::VectorXd pool_scores;              // T
  Eigen::VectorXd pool_weights;             // T, zero at masked steps
  Eigen::VectorXd pooled;                   // d_model
  std::vector<Eigen::VectorXd> decoder_pre;
  std::vector<Eigen::VectorXd> decoder_act;
  Eigen::VectorXd logits;                   // n_classes
  std::vector<std::uint8_t> mask;
  std::vector<double> days;                 // day-of-year per timestep
};

// Low-level entry: values is B x T, days holds the day-of-year for each
// timestep. Throws InferenceError when every timestep is masked and
// ValidationError on shape mismatches.
ForwardTrace forward_days(const Parameters& p, const Eigen::MatrixXd& values,
                          const std::vector<std::uint8_t>& mask,
                          const std::vector<double>& days);

ForwardTrace forward(const Parameters& p, const TimeSeriesSample& sample,
                     const DateAxis& axis);

struct Prediction {
  int label = 0;
  Eigen::VectorXd logits;
};

// Argmax over logits; ties resolve to the lowest class index.
Prediction predict(const Parameters& p, const TimeSeriesSample& sample,
                   const DateAxis& axis);

// Sinusoidal code keyed on day-of-year, so a timestep's code depends only
// on its own date.
Eigen::MatrixXd positional_code(const std::vector<double>& days, int d_model);

// JSON model file, reals with 17 significant digits; byte-identical for
// identical parameters and bit-exact across save/load.
void save_params(const Parameters& p, const std::string& path);
std::string serialize_params(const Parameters& p);
Parameters load_params(const std::string& path);
Parameters parse_params(const std::string& text);

}  // namespace croptime
