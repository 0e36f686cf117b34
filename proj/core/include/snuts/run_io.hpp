#ifndef SNUTS_RUN_IO_HPP
#define SNUTS_RUN_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "snuts/diagnostics.hpp"
#include "snuts/pipeline.hpp"

namespace snuts {

std::string library_version();

/// Shortest text that parses back to the same double.
std::string format_double(double x);

/// chain, iteration, parameter names..., lp__
void write_draws_csv(std::ostream& os, const RunResult& run);
/// chain, iteration, leapfrog, depth, divergent, energy, accept
void write_stats_csv(std::ostream& os, const RunResult& run);

/// Run metadata as a JSON document. `invocation_json` must be a JSON value;
/// it is stored under "invocation" so a run can be replayed from meta.json.
std::string run_meta_json(const RunResult& run, const SummaryTable& summary,
                          const std::string& invocation_json = "{}");

/// Writes draws.csv, stats.csv, summary.csv and meta.json into `dir`,
/// creating it if needed. Throws ConfigError when the directory is unwritable.
SummaryTable write_run(const std::filesystem::path& dir, const RunResult& run,
                       const std::string& invocation_json = "{}");

struct DrawsFile {
  std::vector<std::string> names;   // parameters then lp__
  std::vector<ChainDraws> columns;  // one per name
};
/// Parses a draws.csv written by write_draws_csv. Throws ConfigError on
/// malformed input.
DrawsFile read_draws_csv(const std::filesystem::path& path);

/// q_hat.csv, Q.txt (sparse text format) and approx.json.
void write_approx(const std::filesystem::path& dir, const PosteriorApprox& a,
                  const std::vector<std::string>& names);

}  // namespace snuts

#endif  // SNUTS_RUN_IO_HPP
