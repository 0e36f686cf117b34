#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "experiment.hpp"
#include "snuts/error.hpp"
#include "snuts/run_io.hpp"

namespace {

using snuts::cli::ExperimentConfig;

struct Flags {
  std::string config;
  std::string model;
  std::vector<std::string> modes;
  std::vector<std::string> params;
  std::vector<double> sizes;
  std::string size_param;
  std::uint64_t seed = 0;
  int chains = 0, warmup = 0, iter = 0, jobs = 0, replicates = 0, reps = 0;
  int reference_draws = 0, approx_draws = 0;
  std::string out;
};

struct Options {
  CLI::Option *model, *mode, *seed, *chains, *warmup, *iter, *jobs, *out, *replicates, *param,
      *sizes, *size_param, *reps, *reference_draws, *approx_draws;
};

Options add_options(CLI::App* app, Flags& f) {
  Options o{};
  app->add_option("--config", f.config, "JSON experiment config or a run's meta.json");
  o.model = app->add_option("--model", f.model, "model name");
  o.mode = app->add_option("--mode", f.modes, "sampling mode(s)")->delimiter(',');
  o.seed = app->add_option("--seed", f.seed, "base seed");
  o.chains = app->add_option("--chains", f.chains, "chains per run");
  o.warmup = app->add_option("--warmup", f.warmup, "warmup iterations (default per mode)");
  o.iter = app->add_option("--iter", f.iter, "post-warmup iterations per chain");
  o.jobs = app->add_option("--jobs", f.jobs, "worker threads for chains");
  o.out = app->add_option("--out", f.out, "output directory");
  o.replicates = app->add_option("--replicates", f.replicates, "independent replicates");
  o.param = app->add_option("--param", f.params, "model parameter key=value");
  o.sizes = app->add_option("--sizes", f.sizes, "size grid")->delimiter(',');
  o.size_param = app->add_option("--size-param", f.size_param, "model parameter the grid varies");
  o.reps = app->add_option("--timing-reps", f.reps, "timing repetitions");
  o.reference_draws = app->add_option("--reference-draws", f.reference_draws, "reference draws");
  o.approx_draws = app->add_option("--approx-draws", f.approx_draws, "approximate draws");
  return o;
}

ExperimentConfig resolve(const std::string& command, const Flags& f, const Options& o) {
  ExperimentConfig c;
  if (command == "sample") c.replicates = 1;
  if (!f.config.empty()) c = snuts::cli::load_config(f.config);
  if (!c.command.empty() && c.command != command && !(c.command == "sample" && command != "diagnose"))
    throw snuts::ConfigError("config was written by '" + c.command + "', not '" + command + "'");
  c.command = command;
  if (o.model->count()) c.model = f.model;
  if (o.mode->count()) c.modes = f.modes;
  if (o.seed->count()) c.seed = f.seed;
  if (o.chains->count()) c.chains = f.chains;
  if (o.warmup->count()) c.warmup = f.warmup;
  if (o.iter->count()) c.iterations = f.iter;
  if (o.jobs->count()) c.jobs = f.jobs;
  if (o.out->count()) c.out = f.out;
  if (o.replicates->count()) c.replicates = f.replicates;
  if (o.sizes->count()) c.sizes = f.sizes;
  if (o.size_param->count()) c.size_param = f.size_param;
  if (o.reps->count()) c.timing_reps = f.reps;
  if (o.reference_draws->count()) c.reference_draws = f.reference_draws;
  if (o.approx_draws->count()) c.approx_draws = f.approx_draws;
  for (const auto& kv : f.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw snuts::ConfigError("--param expects key=value, got '" + kv + "'");
    try {
      c.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw snuts::ConfigError("--param " + kv + ": value is not a number");
    }
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-preconditioned NUTS sampler and experiment runner"};
  app.set_version_flag("--version", snuts::library_version());
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const ExperimentConfig&);
  };
  const std::vector<Sub> subs = {
      {"sample", "run one or more modes and write draws", snuts::cli::cmd_sample},
      {"compare", "efficiency table across modes and replicates", snuts::cli::cmd_compare},
      {"scale", "efficiency over a model size grid", snuts::cli::cmd_scale},
      {"gradbench", "transformed gradient cost ratios", snuts::cli::cmd_gradbench},
      {"approx", "precision-sampling accuracy against a long NUTS reference", snuts::cli::cmd_approx},
      {"diagnose", "re-summarize an existing draws.csv", snuts::cli::cmd_diagnose},
  };
  std::vector<Flags> flags(subs.size());
  std::vector<Options> options;
  std::vector<CLI::App*> apps;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    apps.push_back(app.add_subcommand(subs[i].name, subs[i].help));
    options.push_back(add_options(apps.back(), flags[i]));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!apps[i]->parsed()) continue;
    try {
      ExperimentConfig c = resolve(subs[i].name, flags[i], options[i]);
      if (c.command == "diagnose" && !options[i].out->count() && flags[i].config.empty())
        throw snuts::ConfigError("diagnose needs --out pointing at a run directory or draws.csv");
      return subs[i].run(c);
    } catch (const snuts::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const snuts::SamplingError& e) {
      std::cerr << "sampling failed: " << e.what() << "\n";
      return 4;
    } catch (const snuts::Error& e) {
      std::cerr << "model failure: " << e.what() << "\n";
      return 3;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 4;
    }
  }
  return 2;
}
