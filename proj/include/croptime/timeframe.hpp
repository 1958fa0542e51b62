#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "croptime/lrp.hpp"

namespace croptime {

enum class AggregateStatistic { mean, median };

struct AggregateOptions {
  AggregateStatistic statistic = AggregateStatistic::mean;
  // Keep only samples the model classifies correctly; the explanation of a
  // wrong prediction does not describe the class.
  bool restrict_correct = true;
  bool per_class = true;
};

// Dataset-level relevance profile. Each sample's |R_t| is normalized by
// its own maximum before aggregation so large parcels do not dominate.
struct RelevanceProfile {
  Eigen::VectorXd per_timestep;            // length T, in [0, 1]
  Eigen::MatrixXd per_class;               // C x T, rows of classes with no
                                           // usable samples are zero
  std::vector<long long> class_sample_count;
  long long samples_used = 0;
  long long samples_excluded_zero = 0;     // all-zero R_t, skipped
  long long samples_excluded_wrong = 0;    // misclassified, skipped
};

RelevanceProfile aggregate_relevance(const Parameters& p, const Dataset& ds,
                                     const LrpConfig& lrp_cfg = {},
                                     const AggregateOptions& opt = {});

// Indices of the n largest profile values; ties go to the earlier
// timestep. Result is sorted ascending.
std::vector<int> top_n_timesteps(const Eigen::VectorXd& profile, int n);

struct Timeframe {
  int n = 0;
  Date start{};
  Date end{};
  std::vector<int> member_indices;  // ascending

  int length_days() const;
};

Timeframe bounding_window(const std::vector<int>& indices, const DateAxis& axis,
                          int n);

// Local maxima of |profile| strictly above the threshold, as
// (index, value) pairs. A plateau reports its first index only; boundary
// entries compare against their single neighbour.
std::vector<std::pair<int, double>> dominant_peaks(
    const Eigen::VectorXd& profile, double threshold = 0.25);

// Restricts every sample (and the axis) to dates within the window.
// Masks are preserved; values are never altered, only sliced. Samples
// left without a single present timestep are dropped so the result is a
// valid dataset. Throws WindowError when no timestep falls inside the
// window.
Dataset prune_to_window(const Dataset& ds, const Timeframe& window);

// date,score,class long format; the dataset-level profile uses class "ALL".
std::string serialize_profile(const RelevanceProfile& profile,
                              const DateAxis& axis,
                              const std::vector<std::string>& class_names);
RelevanceProfile parse_profile(const std::string& text, const DateAxis& axis,
                               const std::vector<std::string>& class_names);

// n,start,end rows.
std::string serialize_timeframes(const std::vector<Timeframe>& frames);

}  // namespace croptime
