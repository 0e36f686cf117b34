#ifndef SNUTS_PIPELINE_HPP
#define SNUTS_PIPELINE_HPP

#include <optional>
#include <string>
#include <vector>

#include "snuts/laplace.hpp"
#include "snuts/models.hpp"
#include "snuts/nuts.hpp"
#include "snuts/precondition.hpp"

namespace snuts {

enum class Mode { StanDefault, Auto, Diag, Dense, Sparse, ElaNuts, ElaSnuts };

/// Canonical names: stan_default, snuts-auto, snuts-diag, snuts-dense,
/// snuts-sparse, ela-nuts, ela-snuts.
std::string to_string(Mode m);
/// Accepts the canonical names and the short forms auto, diag, dense, sparse.
Mode parse_mode(const std::string& s);
std::vector<Mode> all_modes();

inline constexpr int kSnutsWarmup = 150;
inline constexpr int kStanWarmup = 1000;

struct PipelineOptions {
  LaplaceOptions laplace;
  SelectorOptions selector;
};

struct Timings {
  double optimize = 0.0;
  double q_assembly = 0.0;
  double factorize = 0.0;
  double select = 0.0;  // condition report, preconditioner build, timing probes
  double warmup = 0.0;  // summed over chains
  double sampling = 0.0;
  double overhead() const { return optimize + q_assembly + factorize; }
  double total() const { return overhead() + select + warmup + sampling; }
};

struct RunResult {
  std::string model_name;
  Mode mode = Mode::StanDefault;
  std::string preconditioner = "identity";
  bool fallback = false;
  int warmup = 0;
  MassAdaptation adapt_mass = MassAdaptation::Off;
  NutsConfig config;
  std::vector<std::string> parameter_names;
  std::vector<ChainResult> chains;
  std::vector<Vector> inits;
  std::optional<ConditionReport> condition;
  std::optional<PosteriorApprox> approx;
  std::vector<std::string> trace;
  Timings timings;

  int dim() const { return static_cast<int>(parameter_names.size()); }
  int total_divergences() const;
  double mean_leapfrog() const;
};

/// Optimize, build Q, select a preconditioner, run NUTS in q' and report
/// draws in q. In auto mode a Laplace failure falls back to stan_default;
/// in diag/dense/sparse modes it propagates.
RunResult sample_snuts(ModelPtr model, Mode mode, const NutsConfig& cfg,
                       const PipelineOptions& opts = {});

/// Chain starting points: uniform(-2, 2) per coordinate.
std::vector<Vector> uniform_inits(int dim, int chains, std::uint64_t seed);

}  // namespace snuts

#endif  // SNUTS_PIPELINE_HPP
