#include "snuts/diagnostics.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "snuts/error.hpp"

namespace snuts {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

bool is_constant(const ChainDraws& chains) {
  bool first = true;
  double v0 = 0.0;
  for (const auto& c : chains) {
    for (const double v : c) {
      if (!std::isfinite(v)) return true;
      if (first) {
        v0 = v;
        first = false;
      } else if (v != v0) {
        return false;
      }
    }
  }
  return true;
}

ChainDraws split(const ChainDraws& chains) {
  ChainDraws out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    out.emplace_back(c.end() - static_cast<long>(half), c.end());
  }
  return out;
}

// Normal scores of the pooled average ranks, (r - 3/8) / (S + 1/4).
ChainDraws rank_normalize(const ChainDraws& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (const auto& c : chains)
    for (const double v : c) all.emplace_back(v, all.size());
  const std::size_t s = all.size();
  std::sort(all.begin(), all.end());
  std::vector<double> rank(s);
  for (std::size_t i = 0; i < s;) {
    std::size_t j = i;
    while (j + 1 < s && all[j + 1].first == all[i].first) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[all[k].second] = r;
    i = j + 1;
  }
  const boost::math::normal_distribution<double> norm;
  ChainDraws out;
  std::size_t idx = 0;
  for (const auto& c : chains) {
    std::vector<double> z(c.size());
    for (auto& v : z) v = boost::math::quantile(norm, (rank[idx++] - 0.375) / (static_cast<double>(s) + 0.25));
    out.push_back(std::move(z));
  }
  return out;
}

}  // namespace

double ess_basic(const ChainDraws& chains) {
  if (chains.empty()) throw std::invalid_argument("ess: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("ess: chains must have equal length");
  if (n < 4 || is_constant(chains)) return kNaN;
  const std::size_t m = chains.size();

  std::vector<double> chain_mean(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    chain_mean[c] = mean_of(chains[c]);
    double ss = 0.0;
    for (const double v : chains[c]) ss += (v - chain_mean[c]) * (v - chain_mean[c]);
    chain_var[c] = ss / static_cast<double>(n - 1);
  }
  // Mean over chains of the biased lag-t autocovariance, computed on demand.
  auto mean_acov = [&](std::size_t t) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = chains[c];
      const double mu = chain_mean[c];
      double s = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) s += (x[i] - mu) * (x[i + t] - mu);
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };

  const double dn = static_cast<double>(n);
  const double mean_var = mean_acov(0) * dn / (dn - 1.0);
  double var_plus = mean_var * (dn - 1.0) / dn;
  if (m > 1) {
    const double mm = mean_of(chain_mean);
    double b = 0.0;
    for (const double v : chain_mean) b += (v - mm) * (v - mm);
    var_plus += b / static_cast<double>(m - 1);
  }

  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;
  std::size_t t = 1;
  while (t < n - 5 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho[max_t + 1] = rho_even;

  // Initial monotone sequence.
  for (t = 1; t + 2 <= max_t; t += 2) {
    if (rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]) {
      rho[t + 1] = 0.5 * (rho[t - 1] + rho[t]);
      rho[t + 2] = rho[t + 1];
    }
  }
  const double total = static_cast<double>(m) * dn;
  double tau = -1.0;
  for (std::size_t k = 0; k <= max_t; ++k) tau += 2.0 * rho[k];
  tau += rho[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double bulk_ess(const ChainDraws& chains) {
  if (is_constant(chains)) return kNaN;
  return ess_basic(rank_normalize(split(chains)));
}

double split_rhat(const ChainDraws& chains) {
  if (chains.empty()) throw std::invalid_argument("split_rhat: no chains");
  if (is_constant(chains)) return kNaN;
  const ChainDraws s = split(chains);
  const std::size_t m = s.size();
  const double n = static_cast<double>(s.front().size());
  if (n < 2) return kNaN;
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(s[c]);
    double ss = 0.0;
    for (const double v : s[c]) ss += (v - means[c]) * (v - means[c]);
    vars[c] = ss / (n - 1.0);
  }
  const double grand = mean_of(means);
  double b = 0.0;
  for (const double v : means) b += (v - grand) * (v - grand);
  b *= n / static_cast<double>(m - 1);
  const double w = mean_of(vars);
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double wasserstein1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1d: empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double na = static_cast<double>(x.size());
  const double nb = static_cast<double>(y.size());
  // Sweep the merged support; between consecutive points both CDFs are flat.
  std::size_t i = 0, j = 0;
  double total = 0.0;
  double prev = std::min(x.front(), y.front());
  while (i < x.size() || j < y.size()) {
    double next;
    if (j == y.size() || (i < x.size() && x[i] <= y[j]))
      next = x[i];
    else
      next = y[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    while (i < x.size() && x[i] == next) ++i;
    while (j < y.size() && y[j] == next) ++j;
    prev = next;
  }
  return total;
}

WassersteinSummary wasserstein_columns(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionMismatch("wasserstein_columns: column mismatch");
  WassersteinSummary s;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const Vector ca = a.col(j), cb = b.col(j);
    s.per_dim.push_back(wasserstein1d(std::span<const double>(ca.data(), ca.size()),
                                      std::span<const double>(cb.data(), cb.size())));
  }
  if (!s.per_dim.empty()) {
    s.mean = mean_of(s.per_dim);
    s.max = *std::max_element(s.per_dim.begin(), s.per_dim.end());
  }
  return s;
}

ChainDraws column(const std::vector<ChainResult>& chains, int j) {
  ChainDraws out;
  for (const auto& c : chains) {
    std::vector<double> v(static_cast<std::size_t>(c.draws.rows()));
    for (Eigen::Index i = 0; i < c.draws.rows(); ++i)
      v[static_cast<std::size_t>(i)] = j == c.draws.cols() ? c.lp[i] : c.draws(i, j);
    out.push_back(std::move(v));
  }
  return out;
}

SummaryTable summarize(const std::vector<std::string>& names, const std::vector<ChainDraws>& columns,
                       double total_seconds, double mean_leapfrog, int divergences) {
  if (names.size() != columns.size()) throw DimensionMismatch("summarize: name count mismatch");
  SummaryTable t;
  t.min_ess = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < names.size(); ++k) {
    SummaryRow r;
    r.name = names[k];
    std::vector<double> all;
    for (const auto& c : columns[k]) all.insert(all.end(), c.begin(), c.end());
    r.mean = mean_of(all);
    double ss = 0.0;
    for (const double v : all) ss += (v - r.mean) * (v - r.mean);
    r.sd = all.size() > 1 ? std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
    r.ess_bulk = bulk_ess(columns[k]);
    r.rhat = split_rhat(columns[k]);
    if (std::isnan(r.ess_bulk)) {
      t.has_nan_ess = true;
    } else if (r.ess_bulk < t.min_ess) {
      t.min_ess = r.ess_bulk;
      t.min_ess_name = r.name;
    }
    t.rows.push_back(std::move(r));
  }
  if (!std::isfinite(t.min_ess)) t.min_ess = kNaN;
  t.total_seconds = total_seconds;
  t.efficiency = total_seconds > 0.0 ? t.min_ess / total_seconds : kNaN;
  t.mean_leapfrog = mean_leapfrog;
  t.divergences = divergences;
  return t;
}

SummaryTable summarize(const RunResult& run) {
  std::vector<std::string> names = run.parameter_names;
  names.emplace_back("lp__");
  std::vector<ChainDraws> cols;
  for (int j = 0; j <= run.dim(); ++j) cols.push_back(column(run.chains, j));
  return summarize(names, cols, run.timings.total(), run.mean_leapfrog(), run.total_divergences());
}

void write_summary_csv(std::ostream& os, const SummaryTable& t) {
  const auto old = os.precision(10);
  os << "name,mean,sd,ess_bulk,rhat\n";
  for (const auto& r : t.rows)
    os << r.name << ',' << r.mean << ',' << r.sd << ',' << r.ess_bulk << ',' << r.rhat << '\n';
  os.precision(old);
}

}  // namespace snuts
