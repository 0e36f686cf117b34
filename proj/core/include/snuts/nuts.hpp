#ifndef SNUTS_NUTS_HPP
#define SNUTS_NUTS_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "snuts/precondition.hpp"
#include "snuts/sparse_linalg.hpp"

namespace snuts {

enum class MassAdaptation { Off, Diagonal };

std::string to_string(MassAdaptation m);

struct NutsConfig {
  /// Unset fields take the sampling mode's default (150 warmup and no mass
  /// adaptation for preconditioned runs, 1000 and diagonal otherwise).
  std::optional<int> warmup;
  int iterations = 1000;
  int chains = 4;
  int max_depth = 10;
  double delta = 0.8;
  std::optional<MassAdaptation> adapt_mass;
  bool adapt_stepsize = true;
  double max_energy_error = 1000.0;
  /// Initial step size; 0 runs the bracketing heuristic.
  double stepsize = 0.0;
  std::uint64_t seed = 1;
  int jobs = 1;
  /// Keep the q' draws next to the back-transformed ones.
  bool keep_transformed = false;

  int warmup_or(int fallback) const { return warmup.value_or(fallback); }
  /// Throws ConfigError on invalid settings.
  void validate() const;
};

/// Engine used everywhere a chain draws random numbers.
using Rng = std::mt19937_64;

/// Deterministic per-chain stream from (seed, chain).
Rng chain_rng(std::uint64_t seed, int chain);

struct PhaseState {
  Vector q;     // position (q' space)
  Vector p;     // momentum
  Vector grad;  // gradient of the log density at q
  double lp = 0.0;
};

/// Function computing log density and gradient in the sampled space.
class GradientTarget {
 public:
  virtual ~GradientTarget() = default;
  virtual int dim() const = 0;
  virtual double log_density_gradient(const Vector& q, Vector& grad) = 0;
};

/// Adapter for a TransformedTarget.
class PreconditionedTarget final : public GradientTarget {
 public:
  explicit PreconditionedTarget(TransformedTarget t) : t_(std::move(t)) {}
  int dim() const override { return t_.dim(); }
  double log_density_gradient(const Vector& q, Vector& grad) override {
    return t_.log_density_gradient(q, grad);
  }

 private:
  TransformedTarget t_;
};

/// One leapfrog step: half kick, drift with inv_mass, half kick. Updates
/// state.grad and state.lp at the new position.
void leapfrog(GradientTarget& target, PhaseState& z, double eps, const Vector& inv_mass);

struct TransitionStats {
  int leapfrog = 0;
  int depth = 0;
  bool divergent = false;
  double energy = 0.0;
  double accept = 0.0;
};

struct NutsSettings {
  int max_depth = 10;
  double max_energy_error = 1000.0;
};

/// One multinomial NUTS transition with the generalized U-turn criterion.
/// `z` is replaced by the selected state (momentum irrelevant afterwards).
TransitionStats nuts_transition(GradientTarget& target, PhaseState& z, double eps,
                                const Vector& inv_mass, const NutsSettings& s, Rng& rng);

/// Doubles or halves eps from eps0 until the one-step acceptance crosses 0.5.
double initial_stepsize(GradientTarget& target, const PhaseState& z, const Vector& inv_mass,
                        Rng& rng, double eps0 = 1.0);

/// Dual averaging of log step size toward a target acceptance statistic.
class DualAveraging {
 public:
  DualAveraging(double delta = 0.8, double gamma = 0.05, double t0 = 10.0, double kappa = 0.75)
      : delta_(delta), gamma_(gamma), t0_(t0), kappa_(kappa) {}
  void restart(double eps0);
  /// Returns the next step size to use.
  double learn(double accept_stat);
  /// Final step size exp(x_bar).
  double final_stepsize() const;
  double mu() const noexcept { return mu_; }

 private:
  double delta_, gamma_, t0_, kappa_;
  double mu_ = 0.0;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

/// Expanding-window schedule for diagonal mass adaptation (buffers 75/50,
/// first window 25, doubling; rescaled 15%/75%/10% when warmup is short).
class WindowSchedule {
 public:
  explicit WindowSchedule(int num_warmup, int init_buffer = 75, int term_buffer = 50,
                          int base_window = 25);
  /// Feed iteration `counter` (0-based); true when a window just closed.
  bool in_window() const;
  bool end_of_window() const;
  void advance();
  int counter() const noexcept { return counter_; }
  bool active() const noexcept { return active_; }
  bool shortened() const noexcept { return shortened_; }
  std::vector<int> window_ends() const;

 private:
  void compute_next_window();
  int num_warmup_;
  int init_buffer_, term_buffer_, base_window_;
  int counter_ = 0;
  int window_size_;
  int next_window_;
  bool active_ = true;
  bool shortened_ = false;
};

/// Welford accumulator regularized as in Stan: (n / (n + 5)) var + 1e-3 * 5 / (n + 5).
class VarianceEstimator {
 public:
  explicit VarianceEstimator(int dim) : mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}
  void add(const Vector& x);
  int count() const noexcept { return n_; }
  Vector regularized_variance() const;
  void restart();

 private:
  int n_ = 0;
  Vector mean_;
  Vector m2_;
};

struct ChainResult {
  int chain = 0;
  std::uint64_t seed = 0;
  Matrix draws;              // iterations x dim, q space
  Matrix transformed_draws;  // iterations x dim, q' space, when kept
  Vector lp;
  std::vector<int> leapfrog;
  std::vector<int> depth;
  std::vector<char> divergent;
  std::vector<double> energy;
  std::vector<double> accept;
  double stepsize = 0.0;
  Vector inv_mass;
  int warmup_divergences = 0;
  int max_depth_hits = 0;
  double warmup_seconds = 0.0;
  double sampling_seconds = 0.0;
  std::vector<std::string> notes;

  int divergences() const;
  double mean_leapfrog() const;
  double mean_accept() const;
};

/// Runs one chain of NUTS on the preconditioned model starting from q0 (q
/// space). `warmup` and `adapt` are already resolved by the caller.
ChainResult run_chain(ModelPtr model, PreconditionerPtr precond, const Vector& q0,
                      const NutsConfig& cfg, int warmup, MassAdaptation adapt, int chain);

/// Runs `cfg.chains` chains on up to cfg.jobs threads; inits[c] is chain
/// c's starting point in q space.
std::vector<ChainResult> run_chains(ModelPtr model, PreconditionerPtr precond,
                                    const std::vector<Vector>& inits, const NutsConfig& cfg,
                                    int warmup, MassAdaptation adapt);

}  // namespace snuts

#endif  // SNUTS_NUTS_HPP
