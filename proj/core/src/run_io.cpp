#include "snuts/run_io.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "snuts/error.hpp"

#ifndef SNUTS_VERSION_STRING
#define SNUTS_VERSION_STRING "0.0.0"
#endif

namespace snuts {

using nlohmann::json;

std::string library_version() { return SNUTS_VERSION_STRING; }

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + p.string());
  return os;
}

// NaN and infinities are not representable in JSON.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json vec(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("draws: bad number '" + s + "'");
  return v;
}

}  // namespace

void write_draws_csv(std::ostream& os, const RunResult& run) {
  os << "chain,iteration";
  for (const auto& n : run.parameter_names) os << ',' << n;
  os << ",lp__\n";
  for (const auto& c : run.chains) {
    for (Eigen::Index i = 0; i < c.draws.rows(); ++i) {
      os << c.chain << ',' << i;
      for (Eigen::Index j = 0; j < c.draws.cols(); ++j) os << ',' << format_double(c.draws(i, j));
      os << ',' << format_double(c.lp[i]) << '\n';
    }
  }
}

void write_stats_csv(std::ostream& os, const RunResult& run) {
  os << "chain,iteration,leapfrog,depth,divergent,energy,accept\n";
  for (const auto& c : run.chains) {
    for (std::size_t i = 0; i < c.leapfrog.size(); ++i) {
      os << c.chain << ',' << i << ',' << c.leapfrog[i] << ',' << c.depth[i] << ','
         << int(c.divergent[i]) << ',' << format_double(c.energy[i]) << ','
         << format_double(c.accept[i]) << '\n';
    }
  }
}

std::string run_meta_json(const RunResult& run, const SummaryTable& summary,
                          const std::string& invocation_json) {
  json m;
  m["library"] = "snuts";
  m["version"] = library_version();
  m["model"] = run.model_name;
  m["mode"] = to_string(run.mode);
  m["preconditioner"] = run.preconditioner;
  m["fallback"] = run.fallback ? json("stan_default") : json(nullptr);
  m["warmup"] = run.warmup;
  m["adapt_mass"] = run.adapt_mass == MassAdaptation::Diagonal ? "diagonal" : "off";

  const NutsConfig& c = run.config;
  m["config"] = {{"iterations", c.iterations},
                 {"chains", c.chains},
                 {"warmup", c.warmup ? json(*c.warmup) : json(nullptr)},
                 {"max_depth", c.max_depth},
                 {"delta", c.delta},
                 {"adapt_stepsize", c.adapt_stepsize},
                 {"max_energy_error", c.max_energy_error},
                 {"stepsize", c.stepsize},
                 {"seed", c.seed},
                 {"jobs", c.jobs}};

  json chains = json::array();
  for (const auto& ch : run.chains) {
    chains.push_back({{"chain", ch.chain},
                      {"seed", ch.seed},
                      {"stepsize", num(ch.stepsize)},
                      {"divergences", ch.divergences()},
                      {"warmup_divergences", ch.warmup_divergences},
                      {"max_depth_hits", ch.max_depth_hits},
                      {"mean_leapfrog", num(ch.mean_leapfrog())},
                      {"mean_accept", num(ch.mean_accept())},
                      {"warmup_seconds", ch.warmup_seconds},
                      {"sampling_seconds", ch.sampling_seconds}});
  }
  m["chains"] = chains;
  json inits = json::array();
  for (const auto& v : run.inits) inits.push_back(vec(v));
  m["inits"] = inits;
  m["trace"] = run.trace;

  const Timings& t = run.timings;
  m["timings"] = {{"optimize", t.optimize}, {"q_assembly", t.q_assembly},
                  {"factorize", t.factorize}, {"select", t.select},
                  {"warmup", t.warmup},     {"sampling", t.sampling},
                  {"overhead", t.overhead()}, {"total", t.total()}};
  if (run.condition) {
    const auto& r = *run.condition;
    m["condition"] = {{"dim", r.dim},
                      {"max_abs_corr", num(r.max_abs_corr)},
                      {"sd_ratio", num(r.sd_ratio)},
                      {"kappa", num(r.kappa)},
                      {"sparsity_percent", num(r.sparsity_percent)}};
  }
  if (run.approx) {
    const auto& a = *run.approx;
    m["laplace"] = {{"converged", a.converged},
                    {"outer_iterations", a.outer_iterations},
                    {"inner_iterations", a.inner_iterations},
                    {"jittered", a.jittered},
                    {"jitter", a.jitter},
                    {"neg_log_marginal", num(a.neg_log_marginal_at_mode)},
                    {"q_nnz", a.Q.nnz()},
                    {"factor_nnz", a.factor.nnz()}};
  }
  m["summary"] = {{"min_ess", num(summary.min_ess)},
                  {"min_ess_name", summary.min_ess_name},
                  {"total_seconds", summary.total_seconds},
                  {"efficiency", num(summary.efficiency)},
                  {"mean_leapfrog", num(summary.mean_leapfrog)},
                  {"divergences", summary.divergences}};
  try {
    m["invocation"] = json::parse(invocation_json);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invocation is not valid JSON: ") + e.what());
  }
  return m.dump(2) + "\n";
}

SummaryTable write_run(const std::filesystem::path& dir, const RunResult& run,
                       const std::string& invocation_json) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
  const SummaryTable s = summarize(run);
  {
    auto os = open_out(dir / "draws.csv");
    write_draws_csv(os, run);
  }
  {
    auto os = open_out(dir / "stats.csv");
    write_stats_csv(os, run);
  }
  {
    auto os = open_out(dir / "summary.csv");
    write_summary_csv(os, s);
  }
  auto os = open_out(dir / "meta.json");
  os << run_meta_json(run, s, invocation_json);
  if (!os) throw ConfigError("write failed in " + dir.string());
  return s;
}

DrawsFile read_draws_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ConfigError(path.string() + ": empty file");
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "chain" || header[1] != "iteration")
    throw ConfigError(path.string() + ": not a draws file");
  DrawsFile f;
  f.names.assign(header.begin() + 2, header.end());
  f.columns.resize(f.names.size());
  std::vector<int> chain_ids;
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw ConfigError(path.string() + ": wrong field count on line " + std::to_string(row));
    const int chain = static_cast<int>(parse_double(cells[0]));
    if (chain_ids.empty() || chain_ids.back() != chain) {
      chain_ids.push_back(chain);
      for (auto& col : f.columns) col.emplace_back();
    }
    for (std::size_t k = 0; k < f.names.size(); ++k)
      f.columns[k].back().push_back(parse_double(cells[k + 2]));
  }
  if (chain_ids.empty()) throw ConfigError(path.string() + ": no draws");
  return f;
}

void write_approx(const std::filesystem::path& dir, const PosteriorApprox& a,
                  const std::vector<std::string>& names) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
  {
    auto os = open_out(dir / "q_hat.csv");
    os << "name,value\n";
    for (Eigen::Index i = 0; i < a.q_hat.size(); ++i)
      os << (static_cast<std::size_t>(i) < names.size() ? names[i] : "q" + std::to_string(i)) << ','
         << format_double(a.q_hat[i]) << '\n';
  }
  {
    auto os = open_out(dir / "Q.txt");
    write_sparse_text(os, a.Q);
  }
  json j = {{"model", a.model_name},
            {"converged", a.converged},
            {"outer_iterations", a.outer_iterations},
            {"inner_iterations", a.inner_iterations},
            {"jittered", a.jittered},
            {"jitter", a.jitter},
            {"neg_log_marginal", num(a.neg_log_marginal_at_mode)},
            {"theta_hat", vec(a.theta_hat)},
            {"q_nnz", a.Q.nnz()},
            {"factor_nnz", a.factor.nnz()},
            {"sparsity_percent", sparsity_percent(a.Q)},
            {"optimize_seconds", a.optimize_seconds},
            {"q_seconds", a.q_seconds},
            {"factorize_seconds", a.factorize_seconds}};
  auto os = open_out(dir / "approx.json");
  os << j.dump(2) << "\n";
}

}  // namespace snuts
