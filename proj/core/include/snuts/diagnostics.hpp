#ifndef SNUTS_DIAGNOSTICS_HPP
#define SNUTS_DIAGNOSTICS_HPP

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "snuts/pipeline.hpp"

namespace snuts {

using ChainDraws = std::vector<std::vector<double>>;

/// ESS of the chains as given (no splitting or ranking), with Geyer's
/// initial monotone sequence truncation. NaN for constant input.
double ess_basic(const ChainDraws& chains);

/// Rank-normalized split-chain bulk ESS. NaN for constant input.
double bulk_ess(const ChainDraws& chains);

/// Classic split-chain potential scale reduction. NaN for constant input.
double split_rhat(const ChainDraws& chains);

/// Exact 1-Wasserstein distance between two empirical distributions
/// (integral of |F_a - F_b|). Sizes may differ. Throws on empty input.
double wasserstein1d(std::span<const double> a, std::span<const double> b);

struct WassersteinSummary {
  std::vector<double> per_dim;
  double mean = 0.0;
  double max = 0.0;
};
/// Per-column distances between two draw matrices (rows are draws).
WassersteinSummary wasserstein_columns(const Matrix& a, const Matrix& b);

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double ess_bulk = 0.0;
  double rhat = 0.0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;  // parameters then lp__
  double min_ess = 0.0;
  std::string min_ess_name;
  double total_seconds = 0.0;
  double efficiency = 0.0;  // min_ess / total_seconds
  double mean_leapfrog = 0.0;
  int divergences = 0;
  bool has_nan_ess = false;
};

/// Column j of every chain (j == dim gives lp__).
ChainDraws column(const std::vector<ChainResult>& chains, int j);

SummaryTable summarize(const RunResult& run);
/// Same from raw pieces (used when re-summarizing draws from disk).
SummaryTable summarize(const std::vector<std::string>& names, const std::vector<ChainDraws>& columns,
                       double total_seconds, double mean_leapfrog, int divergences);

/// CSV with columns name, mean, sd, ess_bulk, rhat.
void write_summary_csv(std::ostream& os, const SummaryTable& t);

}  // namespace snuts

#endif  // SNUTS_DIAGNOSTICS_HPP
