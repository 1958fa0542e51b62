#include "croptime/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "croptime/dataio.hpp"
#include "croptime/errors.hpp"
#include "croptime/experiments.hpp"
#include "croptime/lrp.hpp"
#include "croptime/model.hpp"
#include "croptime/report.hpp"
#include "croptime/timeframe.hpp"
#include "croptime/train.hpp"

namespace croptime {

namespace {

using nlohmann::json;

struct TimeframeOptions {
  AggregateOptions agg;
  double peak_threshold = 0.25;
};

struct ExperimentOptions {
  int trials = 3;
  std::uint64_t seed = 202;
  int max_samples = 0;  // 0 keeps every sample
};

struct SplitOptions {
  double test_fraction = 0.2;
  std::uint64_t seed = 7;
};

// Everything a run needs, one JSON object per section.
struct AppConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  LrpConfig lrp;
  TimeframeOptions timeframe;
  ExperimentOptions experiments;
  SplitOptions split;
};

// Reads known keys from one config section and rejects everything else,
// so typos fail loudly instead of silently using a default.
class Section {
 public:
  Section(const json* obj, std::string name)
      : obj_(obj), name_(std::move(name)) {}

  template <typename T>
  void field(const char* key, T& out) {
    if (!obj_) return;
    const auto it = obj_->find(key);
    if (it == obj_->end()) return;
    try {
      it->get_to(out);
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
    seen_.insert(key);
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& item : obj_->items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError("unknown config key " + name_ + "." + item.key());
      }
    }
  }

 private:
  const json* obj_;
  std::string name_;
  std::set<std::string> seen_;
};

AppConfig load_app_config(const CliOptions& opt) {
  AppConfig cfg;
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + opt.config_path);
    json root;
    try {
      root = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config " + opt.config_path + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be an object");

    static const std::set<std::string> known = {
        "synth", "model", "train", "lrp", "timeframe", "experiments", "split"};
    for (const auto& item : root.items()) {
      if (!known.count(item.key())) {
        throw ConfigError("unknown config section '" + item.key() + "'");
      }
      if (!item.value().is_object()) {
        throw ConfigError("config section '" + item.key() +
                          "' must be an object");
      }
    }
    auto section = [&](const char* name) -> const json* {
      const auto it = root.find(name);
      return it == root.end() ? nullptr : &*it;
    };

    {
      Section s(section("synth"), "synth");
      s.field("n_classes", cfg.synth.n_classes);
      s.field("n_samples", cfg.synth.n_samples);
      s.field("timesteps", cfg.synth.timesteps);
      s.field("n_bands", cfg.synth.n_bands);
      s.field("year", cfg.synth.year);
      s.field("cloud_probability", cfg.synth.cloud_probability);
      s.field("imbalance_exponent", cfg.synth.imbalance_exponent);
      s.field("n_blocks", cfg.synth.n_blocks);
      s.field("seed", cfg.synth.seed);
      s.field("greenup_day_min", cfg.synth.greenup_day_min);
      s.field("greenup_day_max", cfg.synth.greenup_day_max);
      s.field("season_length_days", cfg.synth.season_length_days);
      s.field("season_length_spread", cfg.synth.season_length_spread);
      s.field("ramp_days", cfg.synth.ramp_days);
      s.field("base_level", cfg.synth.base_level);
      s.field("amplitude", cfg.synth.amplitude);
      s.field("band_weight_min", cfg.synth.band_weight_min);
      s.field("band_weight_max", cfg.synth.band_weight_max);
      s.field("date_jitter_days", cfg.synth.date_jitter_days);
      s.field("amp_jitter", cfg.synth.amp_jitter);
      s.field("jitter_std", cfg.synth.jitter_std);
      s.field("flat_class", cfg.synth.flat_class);
      s.field("flat_amplitude", cfg.synth.flat_amplitude);
      s.field("cloud_level_min", cfg.synth.cloud_level_min);
      s.field("cloud_level_max", cfg.synth.cloud_level_max);
      s.finish();
    }
    {
      Section s(section("model"), "model");
      s.field("d_model", cfg.model.d_model);
      s.field("n_heads", cfg.model.n_heads);
      s.field("encoder_dims", cfg.model.encoder_dims);
      s.field("decoder_dims", cfg.model.decoder_dims);
      s.finish();
    }
    {
      Section s(section("train"), "train");
      s.field("epochs", cfg.train.epochs);
      s.field("batch_size", cfg.train.batch_size);
      s.field("learning_rate", cfg.train.learning_rate);
      s.field("adam_beta1", cfg.train.adam_beta1);
      s.field("adam_beta2", cfg.train.adam_beta2);
      s.field("adam_eps", cfg.train.adam_eps);
      s.field("validation_fraction", cfg.train.validation_fraction);
      s.field("seed", cfg.train.seed);
      s.finish();
    }
    {
      Section s(section("lrp"), "lrp");
      s.field("epsilon", cfg.lrp.epsilon);
      s.field("target_class", cfg.lrp.target_class);
      s.finish();
    }
    {
      Section s(section("timeframe"), "timeframe");
      std::string stat = "mean";
      bool restrict_correct = cfg.timeframe.agg.restrict_correct;
      bool per_class = cfg.timeframe.agg.per_class;
      s.field("statistic", stat);
      s.field("restrict_correct", restrict_correct);
      s.field("per_class", per_class);
      s.field("peak_threshold", cfg.timeframe.peak_threshold);
      s.finish();
      if (stat == "mean") {
        cfg.timeframe.agg.statistic = AggregateStatistic::mean;
      } else if (stat == "median") {
        cfg.timeframe.agg.statistic = AggregateStatistic::median;
      } else {
        throw ConfigError("timeframe.statistic must be mean or median");
      }
      cfg.timeframe.agg.restrict_correct = restrict_correct;
      cfg.timeframe.agg.per_class = per_class;
    }
    {
      Section s(section("experiments"), "experiments");
      s.field("trials", cfg.experiments.trials);
      s.field("seed", cfg.experiments.seed);
      s.field("max_samples", cfg.experiments.max_samples);
      s.finish();
    }
    {
      Section s(section("split"), "split");
      s.field("test_fraction", cfg.split.test_fraction);
      s.field("seed", cfg.split.seed);
      s.finish();
    }
  }
  if (opt.seed) {
    cfg.synth.seed = *opt.seed;
    cfg.train.seed = *opt.seed;
    cfg.split.seed = *opt.seed;
    cfg.experiments.seed = *opt.seed;
  }
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory " + dir);
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ComputeError("cannot write " + path);
  out << content;
  if (!out) throw ComputeError("write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int guard(const CliOptions& opt, const std::function<std::string()>& body) {
  try {
    const std::string summary = body();
    if (!opt.quiet && !summary.empty()) std::cout << summary << "\n";
    return exit_ok;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_runtime;
  }
}

std::string acc4(double v) { return format_real(v, 4); }

ModelConfig model_for_dataset(const AppConfig& cfg, const Dataset& ds) {
  ModelConfig mc = cfg.model;
  mc.bands = ds.n_bands();
  mc.n_classes = ds.n_classes();
  mc.t_max = std::max(mc.t_max, ds.timesteps());
  return mc;
}

std::string serialize_metrics(const Metrics& m,
                              const std::vector<std::string>& class_names) {
  std::string out = "metric,class,value\n";
  out += "overall_accuracy,ALL," + format_real(m.overall_accuracy, 9) + "\n";
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    out += "producer_accuracy," + class_names[c] + "," +
           format_real(m.producer_accuracy(Eigen::Index(c)), 9) + "\n";
  }
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    out += "user_accuracy," + class_names[c] + "," +
           format_real(m.user_accuracy(Eigen::Index(c)), 9) + "\n";
  }
  return out;
}

std::string serialize_confusion(const Metrics& m,
                                const std::vector<std::string>& class_names) {
  std::string out = "truth,predicted,count\n";
  for (Eigen::Index i = 0; i < m.confusion.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.confusion.cols(); ++j) {
      out += class_names[std::size_t(i)] + "," + class_names[std::size_t(j)] +
             "," + std::to_string(m.confusion(i, j)) + "\n";
    }
  }
  return out;
}

// Profile CSV reduced to its dataset-level rows; the axis is rebuilt from
// the dates in file order.
void load_profile_all_rows(const std::string& path, std::vector<Date>& dates,
                           std::vector<double>& scores) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "date,score,class") {
    throw SchemaError("profile header must be date,score,class");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.rfind(',');
    if (c1 == std::string::npos || c2 == c1) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected date,score,class");
    }
    if (line.substr(c2 + 1) != "ALL") continue;
    dates.push_back(parse_iso_date(line.substr(0, c1)));
    const std::string score_text = line.substr(c1 + 1, c2 - c1 - 1);
    char* end = nullptr;
    const double v = std::strtod(score_text.c_str(), &end);
    if (score_text.empty() || end != score_text.c_str() + score_text.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": bad score '" +
                       score_text + "'");
    }
    scores.push_back(v);
  }
  if (dates.empty()) throw SchemaError("profile has no ALL rows");
}

struct TimestepRelevanceFile {
  // Per parcel, in file order: seeded class and the r_t series.
  std::vector<std::string> parcel_order;
  std::map<std::string, int> target_class;
  std::map<std::string, std::vector<double>> r_t;
};

TimestepRelevanceFile load_timestep_relevance(const std::string& path) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "parcel_id,target_class,date,r_t") {
    throw SchemaError("relevance header must be parcel_id,target_class,date,r_t");
  }
  TimestepRelevanceFile file;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) f.push_back(cell);
    if (f.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected 4 fields");
    }
    if (!file.r_t.count(f[0])) {
      file.parcel_order.push_back(f[0]);
      file.target_class[f[0]] = std::stoi(f[1]);
    }
    file.r_t[f[0]].push_back(std::strtod(f[3].c_str(), nullptr));
  }
  if (file.parcel_order.empty()) throw SchemaError("relevance file is empty");
  return file;
}

}  // namespace

int cmd_gen_data(const CliOptions& opt) {
  return guard(opt, [&] {
    const AppConfig cfg = load_app_config(opt);
    const Dataset ds = generate_synthetic(cfg.synth);
    ensure_dir(opt.out_dir);
    const std::string path = opt.out_dir + "/dataset.csv";
    save_dataset(ds, path);
    return "gen-data: " + std::to_string(ds.size()) + " samples, " +
           std::to_string(ds.n_classes()) + " classes, " +
           std::to_string(ds.timesteps()) + " timesteps -> " + path;
  });
}

int cmd_train(const CliOptions& opt, const std::string& data_path) {
  return guard(opt, [&] {
    const AppConfig cfg = load_app_config(opt);
    const Dataset ds = load_dataset(data_path);
    const SplitResult split =
        split_spatial(ds, cfg.split.test_fraction, cfg.split.seed);
    const ModelConfig mc = model_for_dataset(cfg, ds);
    const TrainResult fit = train(mc, split.train, cfg.train);

    ensure_dir(opt.out_dir);
    save_params(fit.params, opt.out_dir + "/model.json");
    save_history(fit.history, opt.out_dir + "/history.csv");
    save_dataset(split.train, opt.out_dir + "/train.csv");
    save_dataset(split.test, opt.out_dir + "/test.csv");
    {
      std::string blocks = "block_id,role\n";
      for (int b : split.train_blocks) {
        blocks += std::to_string(b) + ",train\n";
      }
      for (int b : split.test_blocks) blocks += std::to_string(b) + ",test\n";
      write_text(opt.out_dir + "/split.csv", blocks);
    }
    const Metrics m = evaluate(fit.params, split.test);
    write_text(opt.out_dir + "/metrics.csv",
               serialize_metrics(m, ds.class_names));
    write_text(opt.out_dir + "/confusion.csv",
               serialize_confusion(m, ds.class_names));
    return "train: " + std::to_string(fit.history.size()) + " epochs, best " +
           std::to_string(fit.best_epoch) + ", test accuracy " +
           acc4(m.overall_accuracy) + " -> " + opt.out_dir + "/model.json";
  });
}

int cmd_eval(const CliOptions& opt, const std::string& model_path,
             const std::string& data_path) {
  return guard(opt, [&] {
    const Parameters p = load_params(model_path);
    const Dataset ds = load_dataset(data_path);
    const Metrics m = evaluate(p, ds);
    ensure_dir(opt.out_dir);
    write_text(opt.out_dir + "/metrics.csv",
               serialize_metrics(m, ds.class_names));
    write_text(opt.out_dir + "/confusion.csv",
               serialize_confusion(m, ds.class_names));
    return "eval: overall accuracy " + acc4(m.overall_accuracy) + " on " +
           std::to_string(m.n_samples) + " samples -> " + opt.out_dir +
           "/metrics.csv";
  });
}

int cmd_explain(const CliOptions& opt, const std::string& model_path,
                const std::string& data_path, long long limit_long) {
  return guard(opt, [&] {
    const AppConfig cfg = load_app_config(opt);
    const Parameters p = load_params(model_path);
    const Dataset ds = load_dataset(data_path);

    LrpDiagnostics diag;
    std::vector<RelevanceMap> maps;
    maps.reserve(ds.samples.size());
    for (const TimeSeriesSample& s : ds.samples) {
      maps.push_back(relevance_map(p, s, ds.axis, cfg.lrp, &diag));
    }

    ensure_dir(opt.out_dir);
    write_text(opt.out_dir + "/relevance_timestep.csv",
               serialize_relevance_timestep(maps, ds.axis));
    const std::size_t n_long =
        (limit_long <= 0) ? maps.size()
                          : std::min<std::size_t>(maps.size(),
                                                  std::size_t(limit_long));
    const std::vector<RelevanceMap> head(maps.begin(),
                                         maps.begin() + long(n_long));
    write_text(opt.out_dir + "/relevance_long.csv",
               serialize_relevance_long(head, ds.axis, ds.band_names));

    const RelevanceProfile profile =
        aggregate_relevance(p, ds, cfg.lrp, cfg.timeframe.agg);
    write_text(opt.out_dir + "/profile.csv",
               serialize_profile(profile, ds.axis, ds.class_names));

    return "explain: " + std::to_string(maps.size()) + " maps, profile from " +
           std::to_string(profile.samples_used) + " samples (skipped " +
           std::to_string(profile.samples_excluded_wrong) + " wrong, " +
           std::to_string(profile.samples_excluded_zero) + " zero), " +
           std::to_string(diag.near_zero_denominators) +
           " near-zero denominators -> " + opt.out_dir;
  });
}

int cmd_timeframe(const CliOptions& opt, const std::string& profile_path,
                  const std::vector<int>& n_list) {
  return guard(opt, [&] {
    if (n_list.empty()) throw ConfigError("need at least one n");
    const AppConfig cfg = load_app_config(opt);
    std::vector<Date> dates;
    std::vector<double> scores;
    load_profile_all_rows(profile_path, dates, scores);
    const DateAxis axis((std::vector<Date>(dates)));
    const Eigen::VectorXd profile =
        Eigen::Map<const Eigen::VectorXd>(scores.data(), long(scores.size()));

    std::vector<Timeframe> frames;
    std::string summary;
    for (int n : n_list) {
      const Timeframe tf =
          bounding_window(top_n_timesteps(profile, n), axis, n);
      frames.push_back(tf);
      summary += "dt_" + std::to_string(n) + ": " + format_iso_date(tf.start) +
                 " .. " + format_iso_date(tf.end) + " (" +
                 std::to_string(tf.length_days()) + " days)\n";
    }
    const auto peaks = dominant_peaks(profile, cfg.timeframe.peak_threshold);
    summary += "peaks: " + std::to_string(peaks.size()) + " above " +
               format_real(cfg.timeframe.peak_threshold, 9);

    ensure_dir(opt.out_dir);
    write_text(opt.out_dir + "/timeframes.csv", serialize_timeframes(frames));
    return summary;
  });
}

int cmd_prune_exp(const CliOptions& opt, const std::string& model_path,
                  const std::string& data_path) {
  return guard(opt, [&] {
    const AppConfig cfg = load_app_config(opt);
    const Parameters p = load_params(model_path);
    Dataset ds = load_dataset(data_path);
    if (cfg.experiments.max_samples > 0 &&
        ds.size() > cfg.experiments.max_samples) {
      ds.samples.resize(std::size_t(cfg.experiments.max_samples));
    }

    const PruneCurve targeted = prune_curve_targeted(p, ds, cfg.lrp);
    const PruneCurve random = prune_curve_random(
        p, ds, cfg.experiments.trials, cfg.experiments.seed);
    ensure_dir(opt.out_dir);
    write_text(opt.out_dir + "/curves.csv",
               serialize_curves({targeted, random}));

    const double auc_t = curve_auc(targeted);
    const double auc_r = curve_auc(random);
    const double ratio = auc_t / std::max(auc_r, 1e-300);
    return "prune-exp: " + std::to_string(ds.size()) + " samples, AUC targeted " +
           format_real(auc_t, 6) + ", random " + format_real(auc_r, 6) +
           " (" + std::to_string(cfg.experiments.trials) +
           " trials), ratio " + format_real(ratio, 4) + " -> " + opt.out_dir +
           "/curves.csv";
  });
}

int cmd_earliness(const CliOptions& opt, const std::string& data_path,
                  const std::vector<int>& n_list) {
  return guard(opt, [&] {
    if (n_list.empty()) throw ConfigError("need at least one n");
    const AppConfig cfg = load_app_config(opt);
    const Dataset ds = load_dataset(data_path);
    const SplitResult split =
        split_spatial(ds, cfg.split.test_fraction, cfg.split.seed);
    const ModelConfig mc = model_for_dataset(cfg, ds);

    // One full training to derive the relevance profile; the experiment
    // then retrains the full span from the same seed.
    const TrainResult probe = train(mc, split.train, cfg.train);
    const RelevanceProfile profile =
        aggregate_relevance(probe.params, split.train, cfg.lrp,
                            cfg.timeframe.agg);

    std::vector<Timeframe> windows;
    for (int n : n_list) {
      windows.push_back(
          bounding_window(top_n_timesteps(profile.per_timestep, n), ds.axis,
                          n));
    }
    const std::vector<EarlinessResult> results = earliness_experiment(
        mc, split.train, split.test, windows, cfg.train);

    ensure_dir(opt.out_dir);
    write_text(opt.out_dir + "/profile.csv",
               serialize_profile(profile, ds.axis, ds.class_names));
    write_text(opt.out_dir + "/timeframes.csv", serialize_timeframes(windows));
    write_text(opt.out_dir + "/earliness.csv",
               serialize_earliness(results, ds.axis));

    std::string summary = "earliness: full " + acc4(results[0].test_accuracy);
    for (std::size_t i = 1; i < results.size(); ++i) {
      summary += ", dt_" + std::to_string(results[i].window->n) + " " +
                 acc4(results[i].test_accuracy);
    }
    summary += " -> " + opt.out_dir + "/earliness.csv";
    return summary;
  });
}

int cmd_report(const CliOptions& opt, const std::string& run_dir) {
  return guard(opt, [&] {
    namespace fs = std::filesystem;
    const std::string data_path =
        fs::exists(run_dir + "/test.csv") ? run_dir + "/test.csv"
                                          : run_dir + "/dataset.csv";
    if (!fs::exists(data_path)) {
      throw ConfigError("no test.csv or dataset.csv under " + run_dir);
    }
    const Dataset ds = load_dataset(data_path);
    int figures = 0;

    if (fs::exists(run_dir + "/relevance_timestep.csv")) {
      const TimestepRelevanceFile rel =
          load_timestep_relevance(run_dir + "/relevance_timestep.csv");

      // Group normalized r_t by the seeded class.
      std::map<int, std::vector<Eigen::VectorXd>> by_class;
      for (const std::string& pid : rel.parcel_order) {
        const std::vector<double>& raw = rel.r_t.at(pid);
        Eigen::VectorXd v =
            Eigen::Map<const Eigen::VectorXd>(raw.data(), long(raw.size()));
        const double peak = v.cwiseAbs().maxCoeff();
        if (peak == 0.0) continue;
        by_class[rel.target_class.at(pid)].push_back(v / peak);
      }
      for (const auto& [cls, rows] : by_class) {
        if (cls < 0 || cls >= ds.n_classes()) continue;
        // Median input reflectance per band over samples of this class.
        std::vector<Eigen::VectorXd> medians;
        for (int b = 0; b < ds.n_bands(); ++b) {
          std::vector<Eigen::VectorXd> band_rows;
          for (const TimeSeriesSample& s : ds.samples) {
            if (s.label == cls) {
              band_rows.push_back(s.values.row(b).transpose());
            }
          }
          if (band_rows.empty()) break;
          medians.push_back(column_quartiles(band_rows).median);
        }
        if (medians.empty()) continue;
        const SeriesQuartiles rq = column_quartiles(rows);
        write_text(run_dir + "/fig_class_" + ds.class_names[std::size_t(cls)] +
                       ".svg",
                   svg_class_panel(ds.class_names[std::size_t(cls)], ds.axis,
                                   medians, ds.band_names, rq));
        ++figures;
      }

      if (fs::exists(run_dir + "/relevance_long.csv")) {
        const std::string text = read_text(run_dir + "/relevance_long.csv");
        std::istringstream in(text);
        std::string line;
        std::getline(in, line);
        if (line != "parcel_id,target_class,date,band,relevance") {
          throw SchemaError("unexpected relevance_long.csv header");
        }
        std::string first_parcel;
        Eigen::MatrixXd r_bt;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          std::vector<std::string> f;
          std::istringstream row(line);
          std::string cell;
          while (std::getline(row, cell, ',')) f.push_back(cell);
          if (f.size() != 5) throw ParseError("bad relevance_long.csv row");
          if (first_parcel.empty()) {
            first_parcel = f[0];
            r_bt = Eigen::MatrixXd::Zero(ds.n_bands(), ds.timesteps());
          }
          if (f[0] != first_parcel) break;
          const auto t = ds.axis.index_of(parse_iso_date(f[2]));
          const auto b = std::find(ds.band_names.begin(), ds.band_names.end(),
                                   f[3]);
          if (!t || b == ds.band_names.end()) {
            throw SchemaError("relevance_long.csv row off the dataset grid");
          }
          r_bt(b - ds.band_names.begin(), *t) = std::strtod(f[4].c_str(),
                                                            nullptr);
        }
        const auto sample_it = std::find_if(
            ds.samples.begin(), ds.samples.end(),
            [&](const TimeSeriesSample& s) {
              return s.parcel_id == first_parcel;
            });
        if (!first_parcel.empty() && sample_it != ds.samples.end() &&
            rel.r_t.count(first_parcel)) {
          const std::vector<double>& raw = rel.r_t.at(first_parcel);
          const Eigen::VectorXd r_t =
              Eigen::Map<const Eigen::VectorXd>(raw.data(), long(raw.size()));
          write_text(run_dir + "/fig_parcel.svg",
                     svg_parcel_panel(first_parcel, ds.axis, sample_it->values,
                                      ds.band_names, r_t, r_bt));
          ++figures;
        }
      }
    }

    if (fs::exists(run_dir + "/earliness.csv")) {
      const std::string text = read_text(run_dir + "/earliness.csv");
      std::istringstream in(text);
      std::string line;
      std::getline(in, line);
      std::vector<std::string> header;
      {
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) header.push_back(cell);
      }
      std::vector<std::vector<std::string>> rows;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) f.push_back(cell);
        rows.push_back(std::move(f));
      }
      write_text(run_dir + "/fig_earliness.svg",
                 svg_table("Shortened-window accuracy", header, rows));
      ++figures;
    }

    if (figures == 0) {
      throw ConfigError("nothing to report under " + run_dir +
                        "; run explain or earliness first");
    }
    return "report: " + std::to_string(figures) + " figures -> " + run_dir;
  });
}

}  // namespace croptime
