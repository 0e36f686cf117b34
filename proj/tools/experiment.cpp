#include "experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "snuts/diagnostics.hpp"
#include "snuts/error.hpp"
#include "snuts/laplace.hpp"
#include "snuts/pipeline.hpp"
#include "snuts/precondition.hpp"
#include "snuts/run_io.hpp"

namespace snuts::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  if (model.empty()) throw ConfigError("no model given");
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (chains < 1) throw ConfigError("chains must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (warmup && *warmup < 0) throw ConfigError("warmup must be >= 0");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (timing_reps < 5) throw ConfigError("timing_reps must be >= 5");
  if (reference_draws < 100 || approx_draws < 10) throw ConfigError("too few approx/reference draws");
  for (const auto& m : modes) parse_mode(m);
  if (!correlated_choice.empty() && correlated_choice != "dense" && correlated_choice != "sparse")
    throw ConfigError("correlated_choice must be \"dense\" or \"sparse\"");
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["command"] = c.command;
  j["model"] = c.model;
  j["params"] = c.params;
  j["modes"] = c.modes;
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["warmup"] = c.warmup ? json(*c.warmup) : json(nullptr);
  j["iterations"] = c.iterations;
  j["chains"] = c.chains;
  j["jobs"] = c.jobs;
  j["max_depth"] = c.max_depth;
  j["delta"] = c.delta;
  if (!c.correlated_choice.empty()) j["correlated_choice"] = c.correlated_choice;
  j["size_param"] = c.size_param;
  j["sizes"] = c.sizes;
  j["timing_reps"] = c.timing_reps;
  j["reference_draws"] = c.reference_draws;
  j["approx_draws"] = c.approx_draws;
  return j;
}

ExperimentConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "command", "model",   "params",     "modes",      "replicates",  "seed",
      "out",     "warmup",  "iterations", "chains",     "jobs",        "max_depth",
      "delta",   "size_param", "sizes",   "timing_reps", "reference_draws", "approx_draws",
      "correlated_choice"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown config field '" + k + "'");
  ExperimentConfig c;
  try {
    c.command = j.value("command", c.command);
    c.model = j.value("model", c.model);
    if (j.contains("params")) c.params = j.at("params").get<ModelParams>();
    if (j.contains("modes")) {
      const auto& m = j.at("modes");
      c.modes = m.is_string() ? std::vector<std::string>{m.get<std::string>()}
                              : m.get<std::vector<std::string>>();
    }
    c.replicates = j.value("replicates", c.replicates);
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
    if (j.contains("warmup") && !j.at("warmup").is_null()) c.warmup = j.at("warmup").get<int>();
    c.iterations = j.value("iterations", c.iterations);
    c.chains = j.value("chains", c.chains);
    c.jobs = j.value("jobs", c.jobs);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.delta = j.value("delta", c.delta);
    c.correlated_choice = j.value("correlated_choice", c.correlated_choice);
    c.size_param = j.value("size_param", c.size_param);
    if (j.contains("sizes")) c.sizes = j.at("sizes").get<std::vector<double>>();
    c.timing_reps = j.value("timing_reps", c.timing_reps);
    c.reference_draws = j.value("reference_draws", c.reference_draws);
    c.approx_draws = j.value("approx_draws", c.approx_draws);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (j.is_object() && j.contains("invocation")) j = j.at("invocation");
  return from_json(j);
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(double x) { return format_double(x); }

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::ofstream open_csv(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + p.string());
  return os;
}

void write_json(const fs::path& p, const json& j) {
  auto os = open_csv(p);
  os << j.dump(2) << "\n";
}

NutsConfig nuts_config(const ExperimentConfig& c, std::uint64_t seed) {
  NutsConfig n;
  n.warmup = c.warmup;
  n.iterations = c.iterations;
  n.chains = c.chains;
  n.jobs = c.jobs;
  n.max_depth = c.max_depth;
  n.delta = c.delta;
  n.seed = seed;
  return n;
}

PipelineOptions pipeline_options(const ExperimentConfig& c) {
  PipelineOptions o;
  if (c.correlated_choice == "dense") o.selector.correlated_choice = PreconditionerKind::Dense;
  if (c.correlated_choice == "sparse") o.selector.correlated_choice = PreconditionerKind::Sparse;
  return o;
}

std::string size_label(double s) {
  std::ostringstream os;
  os << s;
  return os.str();
}

ModelParams with_size(const ExperimentConfig& c, double size) {
  ModelParams p = c.params;
  p[c.size_param] = size;
  return p;
}

// Exit codes: 2 config, 3 model or Laplace, 4 sampling.
int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const SamplingError*>(&e)) return 4;
  if (dynamic_cast<const Error*>(&e)) return 3;
  return 4;
}

struct RunRow {
  std::string mode;
  int replicate = 0;
  double size = 0.0;
  int dim = 0;
  std::string preconditioner;
  bool fallback = false;
  double total = NAN;
  double overhead = NAN;
  double min_ess = NAN;
  double efficiency = NAN;
  double mean_leapfrog = NAN;
  int divergences = 0;
  std::string status = "ok";
  int code = 0;
};

// One mode x replicate run; the run directory carries a narrowed config that
// replays exactly this run.
RunRow run_one(const ExperimentConfig& c, const ModelParams& params, const std::string& mode,
               int replicate, const fs::path& dir, std::optional<double> size) {
  RunRow row;
  row.mode = mode;
  row.replicate = replicate;
  row.size = size.value_or(NAN);
  const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(replicate);
  ExperimentConfig narrowed = c;
  narrowed.command = "sample";
  narrowed.params = params;
  narrowed.modes = {mode};
  narrowed.replicates = 1;
  narrowed.seed = seed;
  narrowed.out = dir.parent_path().parent_path().string();
  narrowed.size_param.clear();
  narrowed.sizes.clear();
  try {
    const ModelPtr m = make_model(c.model, params);
    row.dim = m->dim();
    const RunResult r = sample_snuts(m, parse_mode(mode), nuts_config(c, seed), pipeline_options(c));
    if (r.preconditioner == "dense" || r.preconditioner == "sparse")
      narrowed.correlated_choice = r.preconditioner;
    const SummaryTable s = write_run(dir, r, to_json(narrowed).dump());
    row.preconditioner = r.preconditioner;
    row.fallback = r.fallback;
    row.total = r.timings.total();
    row.overhead = r.timings.overhead();
    row.min_ess = s.min_ess;
    row.efficiency = s.efficiency;
    row.mean_leapfrog = s.mean_leapfrog;
    row.divergences = s.divergences;
    for (const auto& line : r.trace)
      if (line.rfind("FALLBACK", 0) == 0) std::cerr << mode << ": " << line << "\n";
  } catch (const std::exception& e) {
    row.status = e.what();
    row.code = exit_code(e);
    std::cerr << mode << " replicate " << replicate << ": " << e.what() << "\n";
  }
  return row;
}

fs::path run_dir(const fs::path& base, const std::string& mode, int replicate) {
  return base / mode / ("rep" + std::to_string(replicate + 1));
}

std::vector<std::string> modes_or(const ExperimentConfig& c, std::vector<std::string> fallback) {
  return c.modes.empty() ? fallback : c.modes;
}

void print_rows(const std::vector<RunRow>& rows, bool with_size) {
  std::cout << std::left;
  if (with_size) std::cout << std::setw(8) << "size";
  std::cout << std::setw(14) << "mode" << std::setw(5) << "rep" << std::setw(10) << "precond"
            << std::setw(11) << "time(s)" << std::setw(10) << "min_ess" << std::setw(12)
            << "ess/s" << std::setw(10) << "leapfrog" << "div\n";
  for (const auto& r : rows) {
    if (with_size) std::cout << std::setw(8) << r.size;
    std::cout << std::setw(14) << r.mode << std::setw(5) << r.replicate + 1 << std::setw(10)
              << (r.code ? "FAILED" : r.preconditioner) << std::setw(11) << std::setprecision(4)
              << r.total << std::setw(10) << std::setprecision(5) << r.min_ess << std::setw(12)
              << r.efficiency << std::setw(10) << r.mean_leapfrog << r.divergences << "\n";
  }
}

// Efficiency relative to stan_default in the same replicate (and size).
double relative_to_baseline(const std::vector<RunRow>& rows, const RunRow& r) {
  for (const auto& b : rows) {
    if (b.mode == "stan_default" && b.replicate == r.replicate &&
        (b.size == r.size || (std::isnan(b.size) && std::isnan(r.size))))
      return b.code == 0 && r.code == 0 ? r.efficiency / b.efficiency : NAN;
  }
  return NAN;
}

void write_meta(const fs::path& p, const ExperimentConfig& c, double seconds) {
  json m;
  m["library"] = "snuts";
  m["version"] = library_version();
  m["invocation"] = to_json(c);
  m["seconds"] = seconds;
  write_json(p, m);
}

}  // namespace

int cmd_sample(const ExperimentConfig& c) {
  c.validate();
  const auto modes = modes_or(c, {"snuts-auto"});
  int code = 0;
  std::vector<RunRow> rows;
  for (int rep = 0; rep < c.replicates; ++rep) {
    for (const auto& mode : modes) {
      rows.push_back(run_one(c, c.params, mode, rep, run_dir(c.out, mode, rep), std::nullopt));
      if (rows.back().code && !code) code = rows.back().code;
    }
  }
  print_rows(rows, false);
  return code;
}

int cmd_compare(const ExperimentConfig& c) {
  c.validate();
  const auto modes = modes_or(c, {"stan_default", "snuts-auto"});
  if (modes.size() < 2) throw ConfigError("compare needs at least two modes");
  const auto t0 = clock_type::now();
  std::vector<RunRow> rows;
  for (int rep = 0; rep < c.replicates; ++rep)
    for (const auto& mode : modes)
      rows.push_back(run_one(c, c.params, mode, rep, run_dir(c.out, mode, rep), std::nullopt));

  auto os = open_csv(fs::path(c.out) / "compare.csv");
  os << "mode,replicate,preconditioner,fallback,total_time,overhead_time,min_ess,efficiency,"
        "mean_leapfrog,divergences,relative_efficiency,status\n";
  for (const auto& r : rows) {
    os << r.mode << ',' << r.replicate + 1 << ',' << r.preconditioner << ',' << int(r.fallback)
       << ',' << fmt(r.total) << ',' << fmt(r.overhead) << ',' << fmt(r.min_ess) << ','
       << fmt(r.efficiency) << ',' << fmt(r.mean_leapfrog) << ',' << r.divergences << ','
       << fmt(relative_to_baseline(rows, r)) << ',' << csv_field(r.status) << '\n';
  }
  write_meta(fs::path(c.out) / "meta.json", c, seconds_since(t0));
  print_rows(rows, false);
  return 0;
}

int cmd_scale(const ExperimentConfig& c) {
  c.validate();
  if (c.sizes.empty()) throw ConfigError("scale needs a nonempty size grid");
  if (c.size_param.empty()) throw ConfigError("scale needs size_param");
  const auto modes = modes_or(c, {"stan_default", "snuts-sparse"});
  const auto t0 = clock_type::now();
  std::vector<RunRow> rows;
  for (const double size : c.sizes) {
    const fs::path base = fs::path(c.out) / (c.size_param + "_" + size_label(size));
    for (int rep = 0; rep < c.replicates; ++rep)
      for (const auto& mode : modes)
        rows.push_back(run_one(c, with_size(c, size), mode, rep, run_dir(base, mode, rep), size));
  }
  auto os = open_csv(fs::path(c.out) / "scale.csv");
  os << c.size_param << ",dim,mode,replicate,preconditioner,total_time,overhead_time,min_ess,"
        "efficiency,mean_leapfrog,divergences,relative_efficiency,status\n";
  for (const auto& r : rows) {
    os << size_label(r.size) << ',' << r.dim << ',' << r.mode << ',' << r.replicate + 1 << ','
       << r.preconditioner << ',' << fmt(r.total) << ',' << fmt(r.overhead) << ','
       << fmt(r.min_ess) << ',' << fmt(r.efficiency) << ',' << fmt(r.mean_leapfrog) << ','
       << r.divergences << ',' << fmt(relative_to_baseline(rows, r)) << ','
       << csv_field(r.status) << '\n';
  }
  write_meta(fs::path(c.out) / "meta.json", c, seconds_since(t0));
  print_rows(rows, true);
  return 0;
}

int cmd_gradbench(const ExperimentConfig& c) {
  c.validate();
  std::vector<std::optional<double>> sizes;
  if (c.sizes.empty()) sizes.push_back(std::nullopt);
  for (const double s : c.sizes) sizes.emplace_back(s);
  if (!c.sizes.empty() && c.size_param.empty()) throw ConfigError("gradbench sizes need size_param");
  const auto t0 = clock_type::now();

  auto os = open_csv(fs::path(c.out) / "gradbench.csv");
  os << "size,dim,preconditioner,gradient_ratio,transform_seconds\n";
  std::cout << std::left << std::setw(8) << "size" << std::setw(7) << "dim" << std::setw(10)
            << "precond" << std::setw(12) << "grad ratio" << "transform(s)\n";
  int code = 0;
  for (const auto& size : sizes) {
    const ModelParams params = size ? with_size(c, *size) : c.params;
    try {
      const ModelPtr m = make_model(c.model, params);
      const PosteriorApprox a = laplace_approximate(m);
      std::vector<Preconditioner> ps{Preconditioner::identity(m->dim()), build_diagonal(a)};
      if (m->dim() <= kDefaultDenseCap) ps.push_back(build_dense(a));
      ps.push_back(build_sparse(a));
      for (const auto& p : ps) {
        const double ratio = gradient_cost_ratio(p, *m, a.q_hat, c.timing_reps);
        const double tc = transform_cost(p, a.q_hat, c.timing_reps);
        const std::string label = size ? size_label(*size) : "-";
        os << label << ',' << m->dim() << ',' << p.name() << ',' << fmt(ratio) << ',' << fmt(tc)
           << '\n';
        std::cout << std::setw(8) << label << std::setw(7) << m->dim() << std::setw(10) << p.name()
                  << std::setw(12) << std::setprecision(4) << ratio << tc << "\n";
      }
    } catch (const std::exception& e) {
      std::cerr << "gradbench: " << e.what() << "\n";
      if (!code) code = exit_code(e);
    }
  }
  write_meta(fs::path(c.out) / "meta.json", c, seconds_since(t0));
  return code;
}

int cmd_approx(const ExperimentConfig& c) {
  c.validate();
  const auto t_start = clock_type::now();
  const fs::path out(c.out);
  const ModelPtr m = make_model(c.model, c.params);
  const auto& names = m->parameter_names();

  auto summary = open_csv(out / "approx_summary.csv");
  summary << "model,dim,w_precision_mean,w_precision_max,w_nuts_mean,w_nuts_max,approx_seconds,"
             "reference_seconds,time_fraction,status\n";

  const auto t0 = clock_type::now();
  PosteriorApprox a;
  Matrix approx_draws;
  try {
    a = laplace_approximate(m);
    approx_draws = precision_sample(a, c.approx_draws, c.seed);
  } catch (const Error& e) {
    std::cerr << "approx: Laplace failed: " << e.what() << "\n";
    summary << m->name() << ',' << m->dim() << ",,,,,,,," << csv_field(std::string("laplace_failed: ") + e.what())
            << '\n';
    write_meta(out / "meta.json", c, seconds_since(t_start));
    return 0;
  }
  const double approx_seconds = seconds_since(t0);
  write_approx(out / "laplace", a, names);

  // Reference and fresh batch: stan_default, independent of Q.
  auto nuts_draws = [&](int total, std::uint64_t seed, const fs::path& dir, double& seconds) {
    NutsConfig n = nuts_config(c, seed);
    n.iterations = (total + c.chains - 1) / c.chains;
    const RunResult r = sample_snuts(m, Mode::StanDefault, n);
    ExperimentConfig narrowed = c;
    narrowed.command = "sample";
    narrowed.modes = {"stan_default"};
    narrowed.replicates = 1;
    narrowed.iterations = n.iterations;
    narrowed.seed = seed;
    narrowed.out = dir.parent_path().parent_path().string();
    write_run(dir, r, to_json(narrowed).dump());
    seconds = r.timings.total();
    Matrix all(n.iterations * c.chains, m->dim());
    for (int k = 0; k < c.chains; ++k) all.middleRows(k * n.iterations, n.iterations) = r.chains[k].draws;
    return all;
  };
  double ref_seconds = 0.0, batch_seconds = 0.0;
  Matrix ref, batch;
  try {
    ref = nuts_draws(c.reference_draws, c.seed, out / "reference" / "stan_default" / "rep1", ref_seconds);
    batch = nuts_draws(c.approx_draws, c.seed + 1, out / "batch" / "stan_default" / "rep1", batch_seconds);
  } catch (const std::exception& e) {
    std::cerr << "approx: reference run failed: " << e.what() << "\n";
    return exit_code(e);
  }
  const auto wp = wasserstein_columns(approx_draws, ref);
  const auto wn = wasserstein_columns(batch, ref);

  {
    auto os = open_csv(out / "approx.csv");
    os << "parameter,w_precision,w_nuts,ratio\n";
    for (std::size_t j = 0; j < wp.per_dim.size(); ++j)
      os << names[j] << ',' << fmt(wp.per_dim[j]) << ',' << fmt(wn.per_dim[j]) << ','
         << fmt(wp.per_dim[j] / wn.per_dim[j]) << '\n';
  }
  {
    auto os = open_csv(out / "precision_draws.csv");
    os << "draw";
    for (const auto& n : names) os << ',' << n;
    os << '\n';
    for (Eigen::Index i = 0; i < approx_draws.rows(); ++i) {
      os << i;
      for (Eigen::Index j = 0; j < approx_draws.cols(); ++j) os << ',' << fmt(approx_draws(i, j));
      os << '\n';
    }
  }
  summary << m->name() << ',' << m->dim() << ',' << fmt(wp.mean) << ',' << fmt(wp.max) << ','
          << fmt(wn.mean) << ',' << fmt(wn.max) << ',' << fmt(approx_seconds) << ','
          << fmt(ref_seconds) << ',' << fmt(approx_seconds / ref_seconds) << ",ok\n";
  write_meta(out / "meta.json", c, seconds_since(t_start));

  std::cout << "precision-sample W1 mean " << wp.mean << " max " << wp.max << "\n"
            << "fresh NUTS batch W1 mean " << wn.mean << " max " << wn.max << "\n"
            << "approximation " << approx_seconds << " s, reference " << ref_seconds << " s\n";
  return 0;
}

int cmd_diagnose(const ExperimentConfig& c) {
  fs::path path(c.out);
  if (fs::is_directory(path)) path /= "draws.csv";
  const DrawsFile f = read_draws_csv(path);

  double total = NAN, leapfrog = NAN;
  int divergences = 0;
  const fs::path meta = path.parent_path() / "meta.json";
  if (fs::exists(meta)) {
    std::ifstream is(meta);
    try {
      const json j = json::parse(is);
      if (j.contains("timings")) total = j["timings"].value("total", NAN);
      if (j.contains("summary")) {
        const auto& s = j["summary"];
        if (s.contains("mean_leapfrog") && s["mean_leapfrog"].is_number())
          leapfrog = s["mean_leapfrog"].get<double>();
        divergences = s.value("divergences", 0);
      }
    } catch (const json::exception& e) {
      throw ConfigError(meta.string() + ": " + e.what());
    }
  }
  const SummaryTable t = summarize(f.names, f.columns, total, leapfrog, divergences);
  auto os = open_csv(path.parent_path() / "summary.csv");
  write_summary_csv(os, t);
  write_summary_csv(std::cout, t);
  std::cout << "min ESS " << t.min_ess << " (" << t.min_ess_name << ")";
  if (std::isfinite(t.efficiency)) std::cout << ", efficiency " << t.efficiency << " ESS/s";
  std::cout << "\n";
  return 0;
}

}  // namespace snuts::cli
