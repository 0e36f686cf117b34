#ifndef SNUTS_TOOLS_EXPERIMENT_HPP
#define SNUTS_TOOLS_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "snuts/models.hpp"

namespace snuts::cli {

struct ExperimentConfig {
  std::string command;
  std::string model;
  ModelParams params;
  std::vector<std::string> modes;
  int replicates = 3;
  std::uint64_t seed = 1;
  std::string out = "snuts_out";

  // NUTS overrides; unset warmup takes the mode default.
  std::optional<int> warmup;
  int iterations = 1000;
  int chains = 4;
  int jobs = 1;
  int max_depth = 10;
  double delta = 0.8;
  /// "dense" or "sparse": skip the selector's gradient timing. Run
  /// directories record the timed choice here so replays match.
  std::string correlated_choice;

  // scale and gradbench
  std::string size_param;
  std::vector<double> sizes;
  int timing_reps = 50;

  // approx
  int reference_draws = 10000;
  int approx_draws = 1000;

  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing fields keep their defaults; unknown fields are rejected.
ExperimentConfig from_json(const nlohmann::json& j);

/// Reads an experiment config, or the "invocation" block of a run's
/// meta.json.
ExperimentConfig load_config(const std::string& path);

int cmd_sample(const ExperimentConfig& c);
int cmd_compare(const ExperimentConfig& c);
int cmd_scale(const ExperimentConfig& c);
int cmd_gradbench(const ExperimentConfig& c);
int cmd_approx(const ExperimentConfig& c);
/// Re-summarizes draws.csv in c.out (or the file c.out itself).
int cmd_diagnose(const ExperimentConfig& c);

}  // namespace snuts::cli

#endif  // SNUTS_TOOLS_EXPERIMENT_HPP
