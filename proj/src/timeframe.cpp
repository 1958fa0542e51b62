#include "croptime/timeframe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "croptime/errors.hpp"

namespace croptime {

namespace {

// Per-timestep aggregate over a bag of equally long vectors.
Eigen::VectorXd aggregate_rows(const std::vector<Eigen::VectorXd>& rows,
                               AggregateStatistic stat, int T) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(T);
  if (rows.empty()) return out;
  if (stat == AggregateStatistic::mean) {
    for (const Eigen::VectorXd& r : rows) out += r;
    out /= double(rows.size());
    return out;
  }
  std::vector<double> column(rows.size());
  for (int t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i](t);
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    out(t) = (n % 2 == 1) ? column[n / 2]
                          : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return out;
}

}  // namespace

RelevanceProfile aggregate_relevance(const Parameters& p, const Dataset& ds,
                                     const LrpConfig& lrp_cfg,
                                     const AggregateOptions& opt) {
  if (ds.samples.empty()) throw ValidationError("empty dataset");
  const int T = ds.timesteps();
  const int C = ds.n_classes();

  std::vector<std::vector<Eigen::VectorXd>> by_class(static_cast<std::size_t>(C));
  RelevanceProfile profile;
  profile.class_sample_count.assign(std::size_t(C), 0);

  for (const TimeSeriesSample& sample : ds.samples) {
    const ForwardTrace trace = forward(p, sample, ds.axis);
    if (opt.restrict_correct) {
      int pred = 0;
      for (int c = 1; c < C; ++c) {
        if (trace.logits(c) > trace.logits(pred)) pred = c;
      }
      if (pred != sample.label) {
        profile.samples_excluded_wrong += 1;
        continue;
      }
    }
    const RelevanceMap map =
        relevance_map_from_trace(trace, p, sample.parcel_id, lrp_cfg);
    Eigen::VectorXd a = timestep_relevance(map).cwiseAbs();
    const double peak = a.maxCoeff();
    if (peak == 0.0) {
      profile.samples_excluded_zero += 1;
      continue;
    }
    a /= peak;
    by_class[std::size_t(sample.label)].push_back(std::move(a));
    profile.class_sample_count[std::size_t(sample.label)] += 1;
    profile.samples_used += 1;
  }

  std::vector<Eigen::VectorXd> all;
  all.reserve(std::size_t(profile.samples_used));
  for (const auto& rows : by_class) {
    all.insert(all.end(), rows.begin(), rows.end());
  }
  profile.per_timestep = aggregate_rows(all, opt.statistic, T);
  if (opt.per_class) {
    profile.per_class = Eigen::MatrixXd::Zero(C, T);
    for (int c = 0; c < C; ++c) {
      profile.per_class.row(c) =
          aggregate_rows(by_class[std::size_t(c)], opt.statistic, T)
              .transpose();
    }
  } else {
    profile.per_class.resize(0, 0);
  }
  return profile;
}

std::vector<int> top_n_timesteps(const Eigen::VectorXd& profile, int n) {
  const int T = int(profile.size());
  if (n < 1 || n > T) {
    throw ConfigError("n must lie in [1, " + std::to_string(T) + "], got " +
                      std::to_string(n));
  }
  std::vector<int> order(static_cast<std::size_t>(T));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (profile(a) != profile(b)) return profile(a) > profile(b);
    return a < b;
  });
  std::vector<int> picked(order.begin(), order.begin() + n);
  std::sort(picked.begin(), picked.end());
  return picked;
}

int Timeframe::length_days() const {
  // Calendar days from start to end, both inclusive.
  return int((end - start).count()) + 1;
}

Timeframe bounding_window(const std::vector<int>& indices, const DateAxis& axis,
                          int n) {
  if (indices.empty()) throw ValidationError("empty index set");
  Timeframe tf;
  tf.n = n;
  tf.member_indices = indices;
  std::sort(tf.member_indices.begin(), tf.member_indices.end());
  if (tf.member_indices.front() < 0 || tf.member_indices.back() >= axis.size()) {
    throw ValidationError("timestep index outside the date axis");
  }
  tf.start = axis.date(tf.member_indices.front());
  tf.end = axis.date(tf.member_indices.back());
  return tf;
}

std::vector<std::pair<int, double>> dominant_peaks(
    const Eigen::VectorXd& profile, double threshold) {
  if (threshold <= 0.0) throw ConfigError("peak threshold must be positive");
  const int T = int(profile.size());
  std::vector<std::pair<int, double>> peaks;
  for (int t = 0; t < T; ++t) {
    const double v = std::abs(profile(t));
    if (v <= threshold) continue;
    // Strictly greater than the left keeps one entry per plateau.
    const bool left_ok = (t == 0) || v > std::abs(profile(t - 1));
    const bool right_ok = (t == T - 1) || v >= std::abs(profile(t + 1));
    if (left_ok && right_ok) peaks.emplace_back(t, v);
  }
  return peaks;
}

Dataset prune_to_window(const Dataset& ds, const Timeframe& window) {
  std::vector<int> keep;
  for (int t = 0; t < ds.axis.size(); ++t) {
    const Date d = ds.axis.date(t);
    if (d >= window.start && d <= window.end) keep.push_back(t);
  }
  if (keep.empty()) {
    throw WindowError("window " + format_iso_date(window.start) + " .. " +
                      format_iso_date(window.end) +
                      " contains no acquisition date");
  }

  Dataset out;
  std::vector<Date> dates;
  dates.reserve(keep.size());
  for (int t : keep) dates.push_back(ds.axis.date(t));
  out.axis = DateAxis(std::move(dates));
  out.class_names = ds.class_names;
  out.band_names = ds.band_names;
  out.samples.reserve(ds.samples.size());

  for (const TimeSeriesSample& s : ds.samples) {
    TimeSeriesSample cut;
    cut.parcel_id = s.parcel_id;
    cut.label = s.label;
    cut.block_id = s.block_id;
    cut.values.resize(s.values.rows(), Eigen::Index(keep.size()));
    cut.mask.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      cut.values.col(Eigen::Index(i)) = s.values.col(keep[std::size_t(i)]);
      cut.mask[i] = s.mask[std::size_t(keep[i])];
    }
    if (cut.present_count() == 0) continue;
    out.samples.push_back(std::move(cut));
  }
  return out;
}

std::string serialize_profile(const RelevanceProfile& profile,
                              const DateAxis& axis,
                              const std::vector<std::string>& class_names) {
  std::string out = "date,score,class\n";
  auto emit = [&](const Eigen::VectorXd& row, const std::string& name) {
    for (int t = 0; t < row.size(); ++t) {
      out += format_iso_date(axis.date(t));
      out += ',';
      out += format_real(row(t), 9);
      out += ',';
      out += name;
      out += '\n';
    }
  };
  emit(profile.per_timestep, "ALL");
  for (int c = 0; c < profile.per_class.rows(); ++c) {
    emit(profile.per_class.row(c).transpose(), class_names[std::size_t(c)]);
  }
  return out;
}

RelevanceProfile parse_profile(const std::string& text, const DateAxis& axis,
                               const std::vector<std::string>& class_names) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "date,score,class") {
    throw SchemaError("profile header must be date,score,class");
  }
  RelevanceProfile profile;
  profile.per_timestep = Eigen::VectorXd::Zero(axis.size());
  profile.per_class =
      Eigen::MatrixXd::Zero(Eigen::Index(class_names.size()), axis.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected date,score,class");
    }
    const Date d = parse_iso_date(line.substr(0, c1));
    const auto idx = axis.index_of(d);
    if (!idx) {
      throw SchemaError("line " + std::to_string(line_no) + ": date " +
                        line.substr(0, c1) + " not on the axis");
    }
    const std::string score_text = line.substr(c1 + 1, c2 - c1 - 1);
    char* end = nullptr;
    const double score = std::strtod(score_text.c_str(), &end);
    if (end != score_text.c_str() + score_text.size() || score_text.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": bad score '" +
                       score_text + "'");
    }
    const std::string cls = line.substr(c2 + 1);
    if (cls == "ALL") {
      profile.per_timestep(*idx) = score;
      continue;
    }
    const auto it = std::find(class_names.begin(), class_names.end(), cls);
    if (it == class_names.end()) {
      throw SchemaError("line " + std::to_string(line_no) +
                        ": unknown class '" + cls + "'");
    }
    profile.per_class(it - class_names.begin(), *idx) = score;
  }
  return profile;
}

std::string serialize_timeframes(const std::vector<Timeframe>& frames) {
  std::string out = "n,start,end\n";
  for (const Timeframe& tf : frames) {
    out += std::to_string(tf.n);
    out += ',';
    out += format_iso_date(tf.start);
    out += ',';
    out += format_iso_date(tf.end);
    out += '\n';
  }
  return out;
}

}  // namespace croptime
