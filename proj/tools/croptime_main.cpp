#include <cstdint>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "croptime/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"crop timeseries classification, relevance and timeframes"};
  app.require_subcommand(1);

  croptime::CliOptions opt;
  std::uint64_t seed_value = 0;
  auto* seed_opt =
      app.add_option("--seed", seed_value, "override every sub-config seed");
  app.add_option("--config", opt.config_path, "JSON run config");
  app.add_option("--out", opt.out_dir, "output directory");
  app.add_flag("--quiet", opt.quiet, "suppress the summary line");

  std::string data_path;
  std::string model_path;
  std::string profile_path;
  std::string run_dir;
  long long limit_long = 64;
  std::vector<int> n_list = {3, 5, 10};

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");

  auto* train = app.add_subcommand("train", "train a classifier");
  train->add_option("data", data_path, "dataset CSV")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a model on a dataset");
  eval->add_option("model", model_path, "model JSON")->required();
  eval->add_option("data", data_path, "dataset CSV")->required();

  auto* explain =
      app.add_subcommand("explain", "relevance maps and dataset profile");
  explain->add_option("model", model_path, "model JSON")->required();
  explain->add_option("data", data_path, "dataset CSV")->required();
  explain->add_option("--limit", limit_long,
                      "samples kept in the per-band export (0 = all)");

  auto* timeframe =
      app.add_subcommand("timeframe", "windows from a relevance profile");
  timeframe->add_option("profile", profile_path, "profile CSV")->required();
  timeframe->add_option("--n", n_list, "window sizes")->delimiter(',');

  auto* prune =
      app.add_subcommand("prune-exp", "targeted vs random pruning curves");
  prune->add_option("model", model_path, "model JSON")->required();
  prune->add_option("data", data_path, "dataset CSV")->required();

  auto* earliness =
      app.add_subcommand("earliness", "retrain on shortened windows");
  earliness->add_option("data", data_path, "dataset CSV")->required();
  earliness->add_option("--n", n_list, "window sizes")->delimiter(',');

  auto* report = app.add_subcommand("report", "SVG figures from a run");
  report->add_option("run_dir", run_dir, "directory with prior outputs")
      ->required();

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return croptime::exit_validation;
  }
  if (seed_opt->count() > 0) opt.seed = seed_value;

  if (app.got_subcommand(gen)) return croptime::cmd_gen_data(opt);
  if (app.got_subcommand(train)) return croptime::cmd_train(opt, data_path);
  if (app.got_subcommand(eval)) {
    return croptime::cmd_eval(opt, model_path, data_path);
  }
  if (app.got_subcommand(explain)) {
    return croptime::cmd_explain(opt, model_path, data_path, limit_long);
  }
  if (app.got_subcommand(timeframe)) {
    return croptime::cmd_timeframe(opt, profile_path, n_list);
  }
  if (app.got_subcommand(prune)) {
    return croptime::cmd_prune_exp(opt, model_path, data_path);
  }
  if (app.got_subcommand(earliness)) {
    return croptime::cmd_earliness(opt, data_path, n_list);
  }
  if (app.got_subcommand(report)) return croptime::cmd_report(opt, run_dir);
  return croptime::exit_validation;
}
