#include "croptime/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "croptime/errors.hpp"
#include "croptime/rng.hpp"

namespace croptime {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

long long parse_int_field(const std::string& s, long long line_no,
                          const char* what) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno != 0 || end == s.c_str() || *end != '\0') {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what +
                     " '" + s + "'");
  }
  return v;
}

double parse_real_field(const std::string& s, long long line_no,
                        const char* what) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what +
                     " '" + s + "'");
  }
  return v;
}

// Largest-remainder apportionment of n into shares; every class gets the
// floor first, leftovers go to the largest fractional parts.
std::vector<long long> apportion(const std::vector<double>& shares,
                                 long long n) {
  const std::size_t k = shares.size();
  std::vector<long long> counts(k, 0);
  std::vector<std::pair<double, std::size_t>> remainder(k);
  long long assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = shares[i] * double(n);
    counts[i] = static_cast<long long>(std::floor(exact));
    assigned += counts[i];
    remainder[i] = {exact - std::floor(exact), i};
  }
  std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (long long r = n - assigned; r > 0; --r) {
    counts[remainder[std::size_t(n - assigned - r)].second] += 1;
  }
  return counts;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  out.write(content.data(), std::streamsize(content.size()));
  if (!out) throw ValidationError("short write to '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int TimeSeriesSample::present_count() const {
  int n = 0;
  for (std::uint8_t m : mask) n += (m != 0);
  return n;
}

std::string format_real(double v, int significant_digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", significant_digits, v);
  return buf;
}

std::vector<std::string> default_class_names(int n_classes) {
  std::vector<std::string> names;
  names.reserve(std::size_t(n_classes));
  for (int c = 0; c < n_classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

std::vector<std::string> default_band_names(int n_bands) {
  // The 13-band case mirrors the usual optical band naming; other widths
  // fall back to a plain numbered scheme.
  if (n_bands == 13) {
    return {"B01", "B02", "B03", "B04", "B05", "B06", "B07",
            "B08", "B8A", "B09", "B10", "B11", "B12"};
  }
  std::vector<std::string> names;
  names.reserve(std::size_t(n_bands));
  for (int b = 1; b <= n_bands; ++b) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "B%02d", b);
    names.push_back(buf);
  }
  return names;
}

void validate_dataset(const Dataset& ds) {
  const int t = ds.timesteps();
  const int b = ds.n_bands();
  const int c = ds.n_classes();
  if (!ds.samples.empty() && b == 0) {
    throw SchemaError("dataset holds samples but no band names");
  }
  std::unordered_set<std::string> seen;
  seen.reserve(ds.samples.size());
  for (const TimeSeriesSample& s : ds.samples) {
    if (!seen.insert(s.parcel_id).second) {
      throw SchemaError("duplicate parcel id '" + s.parcel_id + "'");
    }
    if (s.label < 0 || s.label >= c) {
      throw SchemaError("parcel '" + s.parcel_id + "' has label " +
                        std::to_string(s.label) + " outside [0, " +
                        std::to_string(c) + ")");
    }
    if (s.bands() != b || s.timesteps() != t ||
        int(s.mask.size()) != t) {
      throw SchemaError("parcel '" + s.parcel_id + "' has mismatched shape");
    }
    if (s.present_count() == 0) {
      throw SchemaError("parcel '" + s.parcel_id + "' has no present timestep");
    }
    for (int i = 0; i < s.values.rows(); ++i) {
      for (int j = 0; j < s.values.cols(); ++j) {
        const double v = s.values(i, j);
        if (!std::isfinite(v) || v < 0.0) {
          throw SchemaError("parcel '" + s.parcel_id +
                            "' has invalid reflectance at band " +
                            std::to_string(i) + ", timestep " +
                            std::to_string(j));
        }
      }
    }
  }
}

void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (cfg.n_samples < cfg.n_classes) {
    throw ConfigError("n_samples must be >= n_classes");
  }
  if (cfg.timesteps < 8) throw ConfigError("timesteps must be >= 8");
  if (cfg.n_bands < 1) throw ConfigError("n_bands must be >= 1");
  if (cfg.year < 1900 || cfg.year > 2100) throw ConfigError("year out of range");
  if (!(cfg.cloud_probability >= 0.0 && cfg.cloud_probability < 1.0)) {
    throw ConfigError("cloud_probability must be in [0, 1)");
  }
  if (cfg.imbalance_exponent < 0.0) {
    throw ConfigError("imbalance_exponent must be >= 0");
  }
  if (cfg.n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
  if (cfg.flat_class >= cfg.n_classes) {
    throw ConfigError("flat_class outside the class range");
  }
  if (!(cfg.band_weight_min > 0.0 && cfg.band_weight_min < cfg.band_weight_max &&
        cfg.band_weight_max <= 1.0)) {
    throw ConfigError("band weight range must satisfy 0 < min < max <= 1");
  }
  if (cfg.amplitude <= 0.0 || cfg.base_level < 0.0 || cfg.ramp_days <= 0.0) {
    throw ConfigError("amplitude, base_level and ramp_days must be positive");
  }
  if (cfg.greenup_day_min < 1.0 || cfg.greenup_day_max > 330.0 ||
      cfg.greenup_day_min > cfg.greenup_day_max) {
    throw ConfigError("green-up day range must lie within [1, 330]");
  }
  if (cfg.cloud_level_min <= 0.0 || cfg.cloud_level_min >= cfg.cloud_level_max) {
    throw ConfigError("cloud level range is invalid");
  }
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  Rng rng(cfg.seed);

  Dataset ds;
  ds.axis = DateAxis::even_grid(cfg.year, cfg.timesteps);
  ds.class_names = default_class_names(cfg.n_classes);
  ds.band_names = default_band_names(cfg.n_bands);
  const std::vector<double> days = ds.axis.days_of_year();
  const int B = cfg.n_bands;
  const int T = cfg.timesteps;
  const int C = cfg.n_classes;

  // Per-band floor reflectance, shared by every class so the off-season
  // carries no class signal.
  std::vector<double> base(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) base[std::size_t(b)] = cfg.base_level * (0.75 + 0.5 * rng.uniform());

  struct ClassShape {
    double greenup = 0.0;
    double senescence = 0.0;
    std::vector<double> band_weight;
    bool flat = false;
  };
  std::vector<ClassShape> shape(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    ClassShape& cs = shape[std::size_t(c)];
    const double frac = C > 1 ? double(c) / double(C - 1) : 0.5;
    cs.greenup = cfg.greenup_day_min +
                 (cfg.greenup_day_max - cfg.greenup_day_min) * frac +
                 rng.uniform(-4.0, 4.0);
    const double season = cfg.season_length_days +
                          rng.uniform(-0.5, 0.5) * cfg.season_length_spread;
    cs.senescence = cs.greenup + std::max(season, 14.0);
    cs.band_weight.resize(std::size_t(B));
    for (int b = 0; b < B; ++b) {
      cs.band_weight[std::size_t(b)] =
          rng.uniform(cfg.band_weight_min, cfg.band_weight_max);
    }
    // Signature band: guarantees every pair of class profiles differs.
    cs.band_weight[std::size_t(c % B)] = 1.0;
    cs.flat = (c == cfg.flat_class);
  }

  // Bands no crop class pins as its signature. When the band count allows
  // it, flat samples prefer these for their own pin, giving that class a
  // loose spectral identity that is still well inside the crop weight
  // range.
  std::vector<int> free_bands;
  if (cfg.flat_class >= 0) {
    std::vector<char> pin_used(static_cast<std::size_t>(B), 0);
    for (int c = 0; c < C; ++c) {
      if (c != cfg.flat_class) pin_used[std::size_t(c % B)] = 1;
    }
    for (int b = 0; b < B; ++b) {
      if (!pin_used[std::size_t(b)]) free_bands.push_back(b);
    }
  }

  // Class sizes follow a power law over the class index.
  std::vector<double> shares(static_cast<std::size_t>(C));
  double total = 0.0;
  for (int c = 0; c < C; ++c) {
    shares[std::size_t(c)] = std::pow(double(c + 1), -cfg.imbalance_exponent);
    total += shares[std::size_t(c)];
  }
  for (double& s : shares) s /= total;
  std::vector<long long> counts = apportion(shares, cfg.n_samples);
  // Strong imbalance can starve the tail classes; every class keeps at
  // least one sample (n_samples >= n_classes is validated above).
  for (std::size_t c = 0; c < counts.size(); ++c) {
    while (counts[c] == 0) {
      const auto big = std::max_element(counts.begin(), counts.end());
      *big -= 1;
      counts[c] += 1;
    }
  }

  std::vector<int> labels;
  labels.reserve(std::size_t(cfg.n_samples));
  for (int c = 0; c < C; ++c) {
    labels.insert(labels.end(), std::size_t(counts[std::size_t(c)]), c);
  }
  rng.shuffle(labels);

  ds.samples.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int label = labels[i];
    const ClassShape& cs = shape[std::size_t(label)];
    TimeSeriesSample s;
    char pid[24];
    std::snprintf(pid, sizeof(pid), "p%06zu", i);
    s.parcel_id = pid;
    s.label = label;
    s.block_id = int(rng.uniform_index(std::uint64_t(cfg.n_blocks)));
    s.values.resize(B, T);
    s.mask.assign(std::size_t(T), 1);

    const double date_shift = rng.normal() * cfg.date_jitter_days;
    const double amp_mult =
        std::clamp(1.0 + rng.normal() * cfg.amp_jitter, 0.6, 1.25);

    // The flat class has no shared phenology. Every sample grows a
    // crop-shaped bump at its own random green-up date with its own band
    // mix (sometimes a second, weaker bump), so within-class samples share
    // nothing a classifier could key on.
    double flat_g1 = 0.0, flat_g2 = 0.0, flat_len = 0.0, flat_scale = 0.0;
    double flat_second = 0.0;
    std::vector<double> flat_w;
    if (cs.flat) {
      flat_g1 = rng.uniform(20.0, 320.0);
      // Growth periods run anywhere from crop-like to more than twice as
      // long, so bump width alone never settles the class.
      flat_len = std::max(
          cfg.season_length_days * rng.uniform(1.0, 2.4) +
              rng.uniform(-0.5, 0.5) * cfg.season_length_spread,
          14.0);
      flat_scale = cfg.flat_amplitude * rng.uniform(0.8, 1.0);
      flat_w.resize(std::size_t(B));
      for (int b = 0; b < B; ++b) {
        flat_w[std::size_t(b)] =
            rng.uniform(cfg.band_weight_min, cfg.band_weight_max);
      }
      if (!free_bands.empty() && rng.uniform() < 0.85) {
        flat_w[std::size_t(
            free_bands[rng.uniform_index(free_bands.size())])] = 1.0;
      } else {
        flat_w[rng.uniform_index(std::uint64_t(B))] = 1.0;
      }
      if (rng.uniform() < 0.5) {
        flat_g2 = rng.uniform(20.0, 320.0);
        flat_second = rng.uniform(0.45, 0.85);
      }
    }

    const auto bump = [&](double day, double greenup, double length) {
      return sigmoid((day - greenup) / cfg.ramp_days) *
             sigmoid((greenup + length - day) / cfg.ramp_days);
    };

    for (int t = 0; t < T; ++t) {
      const double day = days[std::size_t(t)] + date_shift;
      double season = 0.0;
      if (!cs.flat) {
        season = sigmoid((day - cs.greenup) / cfg.ramp_days) *
                 sigmoid((cs.senescence - day) / cfg.ramp_days);
      } else {
        season = bump(day, flat_g1, flat_len) +
                 flat_second * bump(day, flat_g2, flat_len);
        // Overlapping bumps must not push values past the crop range,
        // which would also break the cloud brightness ordering.
        season = std::min(season, 1.0);
      }
      for (int b = 0; b < B; ++b) {
        double v;
        if (!cs.flat) {
          v = base[std::size_t(b)] +
              cfg.amplitude * amp_mult * cs.band_weight[std::size_t(b)] * season;
        } else {
          v = base[std::size_t(b)] +
              flat_scale * amp_mult * flat_w[std::size_t(b)] * season;
        }
        v += rng.normal() * cfg.jitter_std;
        s.values(b, t) = std::max(v, 0.0);
      }
    }

    // Cloud events overwrite every band with a uniformly high level; the
    // acquisition still exists, so the mask stays set.
    for (int t = 0; t < T; ++t) {
      if (rng.uniform() < cfg.cloud_probability) {
        const double level = rng.uniform(cfg.cloud_level_min, cfg.cloud_level_max);
        for (int b = 0; b < B; ++b) {
          s.values(b, t) = level * (0.96 + 0.08 * rng.uniform());
        }
      }
    }

    ds.samples.push_back(std::move(s));
  }

  validate_dataset(ds);
  return ds;
}

std::string serialize_dataset(const Dataset& ds) {
  std::string out;
  out.reserve(64 + std::size_t(ds.size()) * std::size_t(ds.timesteps()) * 32);
  out += "parcel_id,label,block_id,date";
  for (const std::string& b : ds.band_names) {
    out += ',';
    out += b;
  }
  out += '\n';
  for (const TimeSeriesSample& s : ds.samples) {
    for (int t = 0; t < s.timesteps(); ++t) {
      if (!s.mask[std::size_t(t)]) continue;
      out += s.parcel_id;
      out += ',';
      out += std::to_string(s.label);
      out += ',';
      out += std::to_string(s.block_id);
      out += ',';
      out += format_iso_date(ds.axis.date(t));
      for (int b = 0; b < s.bands(); ++b) {
        out += ',';
        out += format_real(s.values(b, t), 9);
      }
      out += '\n';
    }
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  validate_dataset(ds);
  write_file(path, serialize_dataset(ds));
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  long long line_no = 0;

  if (!std::getline(in, line)) throw ParseError("empty file, header expected");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> fixed = {"parcel_id", "label", "block_id",
                                          "date"};
  if (header.size() < 5) {
    throw SchemaError("header needs parcel_id,label,block_id,date plus bands");
  }
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (header[i] != fixed[i]) {
      throw SchemaError("header column " + std::to_string(i + 1) +
                        " must be '" + fixed[i] + "', got '" + header[i] + "'");
    }
  }
  const int B = int(header.size()) - 4;
  std::vector<std::string> band_names(header.begin() + 4, header.end());

  struct Accum {
    std::string parcel_id;
    int label = 0;
    int block = 0;
    std::vector<std::pair<Date, Eigen::VectorXd>> cells;
  };
  std::vector<Accum> parcels;
  std::unordered_map<std::string, std::size_t> index;
  std::set<Date> all_dates;
  int max_label = -1;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (int(f.size()) != 4 + B) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(4 + B) + " fields, got " +
                       std::to_string(f.size()));
    }
    const std::string& pid = f[0];
    if (pid.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty parcel_id");
    }
    const long long label = parse_int_field(f[1], line_no, "label");
    const long long block = parse_int_field(f[2], line_no, "block_id");
    if (label < 0) {
      throw ParseError("line " + std::to_string(line_no) + ": negative label");
    }
    Date date;
    try {
      date = parse_iso_date(f[3]);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    Eigen::VectorXd vals(B);
    for (int b = 0; b < B; ++b) {
      const double v = parse_real_field(f[std::size_t(4 + b)], line_no,
                                        band_names[std::size_t(b)].c_str());
      if (!std::isfinite(v) || v < 0.0) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": reflectance must be finite and >= 0");
      }
      vals(b) = v;
    }

    auto [it, inserted] = index.try_emplace(pid, parcels.size());
    if (inserted) {
      parcels.push_back({pid, int(label), int(block), {}});
    } else {
      const Accum& a = parcels[it->second];
      if (a.label != int(label) || a.block != int(block)) {
        throw SchemaError("line " + std::to_string(line_no) + ": parcel '" +
                          pid + "' changes label or block");
      }
    }
    Accum& a = parcels[it->second];
    for (const auto& cell : a.cells) {
      if (cell.first == date) {
        throw SchemaError("line " + std::to_string(line_no) + ": parcel '" +
                          pid + "' repeats date " + f[3]);
      }
    }
    a.cells.emplace_back(date, std::move(vals));
    all_dates.insert(date);
    max_label = std::max(max_label, int(label));
  }

  Dataset ds;
  ds.band_names = std::move(band_names);
  std::vector<Date> axis_dates(all_dates.begin(), all_dates.end());
  ds.axis = DateAxis(std::move(axis_dates));
  ds.class_names = default_class_names(max_label + 1);
  const int T = ds.axis.size();
  ds.samples.reserve(parcels.size());
  for (Accum& a : parcels) {
    TimeSeriesSample s;
    s.parcel_id = std::move(a.parcel_id);
    s.label = a.label;
    s.block_id = a.block;
    s.values = Eigen::MatrixXd::Zero(B, T);
    s.mask.assign(std::size_t(T), 0);
    for (auto& cell : a.cells) {
      const int t = *ds.axis.index_of(cell.first);
      s.values.col(t) = cell.second;
      s.mask[std::size_t(t)] = 1;
    }
    ds.samples.push_back(std::move(s));
  }
  validate_dataset(ds);
  return ds;
}

Dataset load_dataset(const std::string& path) {
  return parse_dataset(read_file(path));
}

SplitResult split_spatial(const Dataset& ds, double test_fraction,
                          std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must be in (0, 1)");
  }
  std::unordered_map<int, long long> block_sizes;
  for (const TimeSeriesSample& s : ds.samples) block_sizes[s.block_id] += 1;
  if (block_sizes.size() < 2) {
    throw SplitError("spatial split needs at least two distinct blocks, got " +
                     std::to_string(block_sizes.size()));
  }

  std::vector<int> blocks;
  blocks.reserve(block_sizes.size());
  for (const auto& [id, n] : block_sizes) blocks.push_back(id);
  std::sort(blocks.begin(), blocks.end());
  Rng rng(mix_seed(seed, 0x737) /* independent of other seed uses */);
  rng.shuffle(blocks);

  // Greedy scan: a block joins the test side when that moves the
  // cumulative share closer to the target.
  const double target = test_fraction * double(ds.size());
  double cum = 0.0;
  std::unordered_set<int> test_set;
  for (int b : blocks) {
    const double size = double(block_sizes[b]);
    if (std::abs(cum + size - target) < std::abs(cum - target)) {
      test_set.insert(b);
      cum += size;
    }
  }
  if (test_set.empty()) {
    // Every block overshoots; take the single closest one.
    int best = blocks.front();
    double best_gap = std::abs(double(block_sizes[best]) - target);
    for (int b : blocks) {
      const double gap = std::abs(double(block_sizes[b]) - target);
      if (gap < best_gap) {
        best = b;
        best_gap = gap;
      }
    }
    test_set.insert(best);
  }
  if (test_set.size() == block_sizes.size()) {
    // Keep at least one block on the train side.
    test_set.erase(blocks.back());
  }

  SplitResult res;
  res.train.axis = ds.axis;
  res.train.class_names = ds.class_names;
  res.train.band_names = ds.band_names;
  res.test = res.train;
  for (const TimeSeriesSample& s : ds.samples) {
    (test_set.count(s.block_id) ? res.test : res.train).samples.push_back(s);
  }
  for (int b : blocks) {
    (test_set.count(b) ? res.test_blocks : res.train_blocks).push_back(b);
  }
  std::sort(res.train_blocks.begin(), res.train_blocks.end());
  std::sort(res.test_blocks.begin(), res.test_blocks.end());
  return res;
}

ClassDistribution class_distribution(const Dataset& ds) {
  ClassDistribution dist;
  dist.counts.assign(std::size_t(ds.n_classes()), 0);
  for (const TimeSeriesSample& s : ds.samples) {
    dist.counts[std::size_t(s.label)] += 1;
  }
  dist.shares.assign(dist.counts.size(), 0.0);
  if (!ds.samples.empty()) {
    for (std::size_t i = 0; i < dist.counts.size(); ++i) {
      dist.shares[i] = double(dist.counts[i]) / double(ds.size());
    }
  }
  return dist;
}

}  // namespace croptime
