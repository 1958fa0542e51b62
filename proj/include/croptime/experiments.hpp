#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "croptime/timeframe.hpp"
#include "croptime/train.hpp"

namespace croptime {

// Mean squared logit error after masking 0..T-1 timesteps. mse[0] is the
// untouched series and is exactly zero.
struct PruneCurve {
  std::vector<int> n_removed;
  std::vector<double> fraction_removed;
  std::vector<double> mse;
  std::string mode;  // "targeted" or "random"
  int trials = 1;
};

// Removal order per sample: ascending |R_t| over its present timesteps,
// computed once on the full series (ties to the earlier timestep).
PruneCurve prune_curve_targeted(const Parameters& p, const Dataset& ds,
                                const LrpConfig& lrp_cfg = {});

// Uniformly random removal order per sample and trial; deterministic for a
// fixed seed and independent of evaluation order.
PruneCurve prune_curve_random(const Parameters& p, const Dataset& ds,
                              int trials, std::uint64_t seed);

// Trapezoidal area under mse vs fraction_removed.
double curve_auc(const PruneCurve& curve);

struct EarlinessResult {
  std::optional<Timeframe> window;  // nullopt = full span
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  int window_length_days = 0;
  Date end_date{};
};

// Retrains from scratch (same seed) on the full span and on each window,
// pruning both sides to the window first. Results are ordered: full span,
// then the given windows.
std::vector<EarlinessResult> earliness_experiment(
    const ModelConfig& model_cfg, const Dataset& train_data,
    const Dataset& test_data, const std::vector<Timeframe>& windows,
    const TrainConfig& train_cfg);

// n_removed,fraction_removed,mse,mode rows for any number of curves.
std::string serialize_curves(const std::vector<PruneCurve>& curves);

// window_n,start,end,train_acc,test_acc,delta_vs_full rows; the full-span
// row uses window_n = 0 and the full axis bounds.
std::string serialize_earliness(const std::vector<EarlinessResult>& results,
                                const DateAxis& full_axis);

}  // namespace croptime
