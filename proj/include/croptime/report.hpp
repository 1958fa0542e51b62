#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "croptime/dataio.hpp"

namespace croptime {

// Minimal deterministic SVG plotting: fixed palette, fixed float
// formatting, no timestamps, so identical inputs give identical bytes.

struct SeriesQuartiles {
  Eigen::VectorXd q25;
  Eigen::VectorXd median;
  Eigen::VectorXd q75;
};

SeriesQuartiles column_quartiles(const std::vector<Eigen::VectorXd>& rows);

// Two stacked panels for one class: per-band median input reflectance and
// the per-timestep relevance median with its interquartile band.
std::string svg_class_panel(const std::string& class_name,
                            const DateAxis& axis,
                            const std::vector<Eigen::VectorXd>& band_medians,
                            const std::vector<std::string>& band_names,
                            const SeriesQuartiles& relevance);

// One parcel: per-band input lines, per-timestep relevance line, and the
// band-by-timestep relevance heatmap.
std::string svg_parcel_panel(const std::string& parcel_id,
                             const DateAxis& axis,
                             const Eigen::MatrixXd& values,
                             const std::vector<std::string>& band_names,
                             const Eigen::VectorXd& r_t,
                             const Eigen::MatrixXd& r_bt);

// Simple table figure, one row per entry.
std::string svg_table(const std::string& title,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);

}  // namespace croptime
