#include "croptime/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "croptime/errors.hpp"
#include "croptime/rng.hpp"

namespace croptime {

namespace {

// Mean squared difference across logit components.
double logit_mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).squaredNorm() / double(a.size());
}

// Walks one sample through the removal order, recording the squared logit
// error after each removal. Index 0 is the untouched series. Originally
// masked timesteps must come first in the order: removing them is a no-op,
// and placing them up front keeps at least one present timestep alive
// through removal T-1.
void accumulate_curve(const Parameters& p, const TimeSeriesSample& sample,
                      const DateAxis& axis, const std::vector<int>& order,
                      std::vector<double>& sums) {
  const Eigen::VectorXd full_logits = forward(p, sample, axis).logits;
  TimeSeriesSample cut = sample;
  for (std::size_t k = 1; k < sums.size(); ++k) {
    cut.mask[std::size_t(order[k - 1])] = 0;
    const Eigen::VectorXd logits = forward(p, cut, axis).logits;
    sums[k] += logit_mse(logits, full_logits);
  }
}

std::vector<int> masked_indices(const TimeSeriesSample& s) {
  std::vector<int> out;
  for (std::size_t t = 0; t < s.mask.size(); ++t) {
    if (!s.mask[t]) out.push_back(int(t));
  }
  return out;
}

std::vector<int> present_indices(const TimeSeriesSample& s) {
  std::vector<int> out;
  for (std::size_t t = 0; t < s.mask.size(); ++t) {
    if (s.mask[t]) out.push_back(int(t));
  }
  return out;
}

void fill_axis(PruneCurve& curve, int T) {
  curve.n_removed.resize(std::size_t(T));
  std::iota(curve.n_removed.begin(), curve.n_removed.end(), 0);
  curve.fraction_removed.resize(std::size_t(T));
  for (int k = 0; k < T; ++k) {
    curve.fraction_removed[std::size_t(k)] =
        (T > 1) ? double(k) / double(T - 1) : 0.0;
  }
}

}  // namespace

PruneCurve prune_curve_targeted(const Parameters& p, const Dataset& ds,
                                const LrpConfig& lrp_cfg) {
  if (ds.samples.empty()) throw ValidationError("empty dataset");
  const int T = ds.timesteps();
  PruneCurve curve;
  curve.mode = "targeted";
  fill_axis(curve, T);
  std::vector<double> sums(std::size_t(T), 0.0);

  for (const TimeSeriesSample& sample : ds.samples) {
    const RelevanceMap map = relevance_map(p, sample, ds.axis, lrp_cfg);
    const Eigen::VectorXd score = timestep_relevance(map).cwiseAbs();

    std::vector<int> order = masked_indices(sample);
    std::vector<int> present = present_indices(sample);
    std::sort(present.begin(), present.end(), [&](int a, int b) {
      if (score(a) != score(b)) return score(a) < score(b);
      return a < b;
    });
    order.insert(order.end(), present.begin(), present.end());

    accumulate_curve(p, sample, ds.axis, order, sums);
  }

  curve.mse.resize(std::size_t(T));
  curve.mse[0] = 0.0;
  for (int k = 1; k < T; ++k) {
    curve.mse[std::size_t(k)] = sums[std::size_t(k)] / double(ds.size());
  }
  return curve;
}

PruneCurve prune_curve_random(const Parameters& p, const Dataset& ds,
                              int trials, std::uint64_t seed) {
  if (ds.samples.empty()) throw ValidationError("empty dataset");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  const int T = ds.timesteps();
  PruneCurve curve;
  curve.mode = "random";
  curve.trials = trials;
  fill_axis(curve, T);
  std::vector<double> sums(std::size_t(T), 0.0);

  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const TimeSeriesSample& sample = ds.samples[i];
    for (int trial = 0; trial < trials; ++trial) {
      // One stream per (sample, trial) so results do not depend on the
      // order samples are visited in.
      Rng rng(mix_seed(seed, std::uint64_t(i), std::uint64_t(trial)));
      std::vector<int> order = masked_indices(sample);
      std::vector<int> present = present_indices(sample);
      rng.shuffle(order);
      rng.shuffle(present);
      order.insert(order.end(), present.begin(), present.end());
      accumulate_curve(p, sample, ds.axis, order, sums);
    }
  }

  curve.mse.resize(std::size_t(T));
  curve.mse[0] = 0.0;
  const double denom = double(ds.size()) * double(trials);
  for (int k = 1; k < T; ++k) {
    curve.mse[std::size_t(k)] = sums[std::size_t(k)] / denom;
  }
  return curve;
}

double curve_auc(const PruneCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.mse.size(); ++i) {
    const double width =
        curve.fraction_removed[i] - curve.fraction_removed[i - 1];
    area += 0.5 * (curve.mse[i] + curve.mse[i - 1]) * width;
  }
  return area;
}

std::vector<EarlinessResult> earliness_experiment(
    const ModelConfig& model_cfg, const Dataset& train_data,
    const Dataset& test_data, const std::vector<Timeframe>& windows,
    const TrainConfig& train_cfg) {
  std::vector<EarlinessResult> results;
  results.reserve(windows.size() + 1);

  auto run = [&](const Dataset& tr, const Dataset& te,
                 const std::optional<Timeframe>& window) {
    TrainResult fit;
    try {
      fit = train(model_cfg, tr, train_cfg);
    } catch (const TrainingError& e) {
      const std::string where =
          window ? "window n=" + std::to_string(window->n) : "full span";
      throw TrainingError(where + ": " + e.what());
    }
    EarlinessResult r;
    r.window = window;
    r.train_accuracy = evaluate(fit.params, tr).overall_accuracy;
    r.test_accuracy = evaluate(fit.params, te).overall_accuracy;
    if (window) {
      r.window_length_days = window->length_days();
      r.end_date = window->end;
    } else {
      const Date first = tr.axis.date(0);
      const Date last = tr.axis.date(tr.axis.size() - 1);
      r.window_length_days = int((last - first).count()) + 1;
      r.end_date = last;
    }
    results.push_back(std::move(r));
  };

  run(train_data, test_data, std::nullopt);
  for (const Timeframe& tf : windows) {
    run(prune_to_window(train_data, tf), prune_to_window(test_data, tf), tf);
  }
  return results;
}

std::string serialize_curves(const std::vector<PruneCurve>& curves) {
  std::string out = "n_removed,fraction_removed,mse,mode\n";
  for (const PruneCurve& c : curves) {
    for (std::size_t i = 0; i < c.mse.size(); ++i) {
      out += std::to_string(c.n_removed[i]);
      out += ',';
      out += format_real(c.fraction_removed[i], 9);
      out += ',';
      out += format_real(c.mse[i], 9);
      out += ',';
      out += c.mode;
      out += '\n';
    }
  }
  return out;
}

std::string serialize_earliness(const std::vector<EarlinessResult>& results,
                                const DateAxis& full_axis) {
  std::string out = "window_n,start,end,train_acc,test_acc,delta_vs_full\n";
  const double full_acc = results.empty() ? 0.0 : results[0].test_accuracy;
  for (const EarlinessResult& r : results) {
    const int n = r.window ? r.window->n : 0;
    const Date start = r.window ? r.window->start : full_axis.date(0);
    const Date end = r.window ? r.window->end
                              : full_axis.date(full_axis.size() - 1);
    out += std::to_string(n);
    out += ',';
    out += format_iso_date(start);
    out += ',';
    out += format_iso_date(end);
    out += ',';
    out += format_real(r.train_accuracy, 9);
    out += ',';
    out += format_real(r.test_accuracy, 9);
    out += ',';
    out += format_real(r.test_accuracy - full_acc, 9);
    out += '\n';
  }
  return out;
}

}  // namespace croptime
