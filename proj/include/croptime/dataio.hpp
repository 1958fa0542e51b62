#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "croptime/dates.hpp"

namespace croptime {

// One labelled parcel. values is B x T (bands by timesteps); mask marks the
// timesteps that were actually observed. Reflectances are finite and >= 0.
struct TimeSeriesSample {
  std::string parcel_id;
  int label = 0;
  int block_id = 0;
  Eigen::MatrixXd values;          // B x T
  std::vector<std::uint8_t> mask;  // length T, 1 = present

  int bands() const { return static_cast<int>(values.rows()); }
  int timesteps() const { return static_cast<int>(values.cols()); }
  int present_count() const;
};

struct Dataset {
  DateAxis axis;
  std::vector<std::string> class_names;
  std::vector<std::string> band_names;
  std::vector<TimeSeriesSample> samples;

  int n_classes() const { return static_cast<int>(class_names.size()); }
  int n_bands() const { return static_cast<int>(band_names.size()); }
  int timesteps() const { return axis.size(); }
  int size() const { return static_cast<int>(samples.size()); }
};

// Throws on any violated invariant (duplicate parcel ids, label out of
// range, shape mismatch, negative or non-finite values, empty masks).
void validate_dataset(const Dataset& ds);

struct SynthConfig {
  int n_classes = 8;
  int n_samples = 2000;
  int timesteps = 52;
  int n_bands = 13;
  int year = 2019;
  double cloud_probability = 0.1;
  double imbalance_exponent = 1.0;
  int n_blocks = 25;
  std::uint64_t seed = 0;

  // Phenology shape. Class green-up dates are spread across
  // [greenup_day_min, greenup_day_max]; each class gets a signature band
  // whose weight is pinned to 1 so no two class profiles coincide.
  double greenup_day_min = 95.0;
  double greenup_day_max = 175.0;
  double season_length_days = 70.0;
  double season_length_spread = 30.0;
  double ramp_days = 9.0;
  double base_level = 0.06;
  double amplitude = 0.34;
  double band_weight_min = 0.25;
  double band_weight_max = 0.70;
  double date_jitter_days = 3.0;
  double amp_jitter = 0.08;
  double jitter_std = 0.012;  // additive per-cell noise

  // Optional class with no stable seasonal signal. Each sample grows a
  // crop-shaped bump at its own random date with its own band mix, so
  // nothing about the class repeats from sample to sample. Used to study
  // what the explanation method does with a class the generator gives no
  // shared feature to key on.
  int flat_class = -1;
  double flat_amplitude = 0.30;

  double cloud_level_min = 0.62;
  double cloud_level_max = 0.88;
};

void validate_synth_config(const SynthConfig& cfg);

// Deterministic for a fixed config (byte-identical values across runs).
// Cloud-affected timesteps have every band raised above the vegetation
// range; they stay mask=1 because the acquisition did happen.
Dataset generate_synthetic(const SynthConfig& cfg);

// Long-format CSV: header then one row per (parcel, present timestep).
// Reals are written with 9 significant digits; saving twice yields
// byte-identical files.
void save_dataset(const Dataset& ds, const std::string& path);
std::string serialize_dataset(const Dataset& ds);

// Inverse of save_dataset. Missing (parcel, date) cells become mask=0.
// Malformed rows raise ParseError naming the 1-based line number.
Dataset load_dataset(const std::string& path);
Dataset parse_dataset(const std::string& text);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<int> train_blocks;
  std::vector<int> test_blocks;
};

// Block-disjoint split. Blocks are scanned in a seeded random order and a
// block joins the test side whenever that moves the cumulative test share
// closer to test_fraction. Needs at least two distinct blocks.
SplitResult split_spatial(const Dataset& ds, double test_fraction,
                          std::uint64_t seed);

struct ClassDistribution {
  std::vector<long long> counts;
  std::vector<double> shares;
};

ClassDistribution class_distribution(const Dataset& ds);

// "class_0" ... / "B01" ... naming used by the generator and the loader.
std::vector<std::string> default_class_names(int n_classes);
std::vector<std::string> default_band_names(int n_bands);

// Formats a real with the given number of significant digits ("%.*g").
std::string format_real(double v, int significant_digits);

}  // namespace croptime
