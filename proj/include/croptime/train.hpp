#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "croptime/model.hpp"

namespace croptime {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double validation_fraction = 0.2;  // in [0, 0.5]
  std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;      // NaN when there is no validation split
  double val_accuracy = 0.0;  // NaN when there is no validation split
};

struct TrainResult {
  Parameters params;
  std::vector<EpochStats> history;
  int best_epoch = 0;  // epoch whose parameters were returned
};

// Mean cross-entropy over the batch plus gradients for every parameter.
// Throws NumericError naming the offending parcel if a loss turns
// non-finite.
struct LossAndGrad {
  double loss = 0.0;
  Parameters grad;
  long long n_correct = 0;  // argmax agreement within the batch
};

LossAndGrad loss_and_grad(const Parameters& p,
                          const std::vector<const TimeSeriesSample*>& batch,
                          const DateAxis& axis);

double batch_loss(const Parameters& p,
                  const std::vector<const TimeSeriesSample*>& batch,
                  const DateAxis& axis);

// Central-difference check of the analytic gradient on one sample over a
// random subset of at least min_params parameters. Relative error is
// |fd - analytic| / max(|fd|, |analytic|, 1e-8). Draws whose difference is
// below the roundoff resolution of the loss, or whose step straddles a
// ReLU kink, are replaced from the shuffled pool; checked reports how many
// parameters actually entered the comparison.
struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  long long worst_flat_index = -1;
};

GradCheckResult grad_check(const Parameters& p, const TimeSeriesSample& sample,
                           const DateAxis& axis, double fd_epsilon = 1e-5,
                           int min_params = 200, std::uint64_t seed = 0);

// Adam with per-epoch seeded shuffling. Returns the parameters of the
// epoch with the best validation accuracy (earliest such epoch); with
// validation_fraction = 0 the final parameters are returned. Diverging
// training raises TrainingError naming the epoch.
TrainResult train(const ModelConfig& model_cfg, const Dataset& train_data,
                  const TrainConfig& cfg);

// Same, but starting from given parameters (used by tests and tools).
TrainResult train_from(Parameters params, const Dataset& train_data,
                       const TrainConfig& cfg);

struct Metrics {
  double overall_accuracy = 0.0;
  Eigen::MatrixXi confusion;           // rows = truth, cols = prediction
  Eigen::VectorXd producer_accuracy;   // recall per class, NaN if no truth
  Eigen::VectorXd user_accuracy;       // precision per class, NaN if never predicted
  long long n_samples = 0;
};

Metrics evaluate(const Parameters& p, const Dataset& ds);

// Metrics from raw label vectors; evaluate() delegates to this.
Metrics metrics_from_labels(const std::vector<int>& truth,
                            const std::vector<int>& predicted, int n_classes);

// epoch,train_loss,train_acc,val_loss,val_acc with 9 significant digits.
std::string serialize_history(const std::vector<EpochStats>& history);
void save_history(const std::vector<EpochStats>& history,
                  const std::string& path);

}  // namespace croptime
