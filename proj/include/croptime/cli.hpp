#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace croptime {

// Exit codes shared by every subcommand.
inline constexpr int exit_ok = 0;
inline constexpr int exit_validation = 1;
inline constexpr int exit_runtime = 2;

// Common flags. config_path points at a single JSON document holding one
// object per sub-config ("synth", "model", "train", "lrp", "timeframe",
// "experiments", "split"); seed overrides the config seed.
struct CliOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  bool quiet = false;
};

int cmd_gen_data(const CliOptions& opt);
int cmd_train(const CliOptions& opt, const std::string& data_path);
int cmd_eval(const CliOptions& opt, const std::string& model_path,
             const std::string& data_path);
// limit_long caps the number of samples in the per-band long export;
// 0 keeps every sample.
int cmd_explain(const CliOptions& opt, const std::string& model_path,
                const std::string& data_path, long long limit_long);
int cmd_timeframe(const CliOptions& opt, const std::string& profile_path,
                  const std::vector<int>& n_list);
int cmd_prune_exp(const CliOptions& opt, const std::string& model_path,
                  const std::string& data_path);
int cmd_earliness(const CliOptions& opt, const std::string& data_path,
                  const std::vector<int>& n_list);
int cmd_report(const CliOptions& opt, const std::string& run_dir);

}  // namespace croptime
