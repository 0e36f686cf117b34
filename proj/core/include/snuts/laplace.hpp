#ifndef SNUTS_LAPLACE_HPP
#define SNUTS_LAPLACE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "snuts/models.hpp"
#include "snuts/optimize.hpp"
#include "snuts/sparse_linalg.hpp"

namespace snuts {

struct LaplaceOptions {
  double inner_tol = 1e-8;
  int inner_max_iterations = 100;
  int outer_max_iterations = 200;
  double outer_grad_tol = 1e-6;
  double outer_rel_f_tol = 1e-10;
  /// Outer iterates beyond this box mean there is no interior mode.
  double theta_bound = 20.0;
  /// Relative step of the central-difference outer gradient.
  double gradient_step = 1e-4;
  /// Relative step of the second differences giving the marginal Hessian.
  double hessian_step = 1e-3;
  /// Newton refinements of theta_hat with the marginal Hessian after BFGS.
  int polish_steps = 2;
};

/**
 * Negative log Laplace marginal f(theta) = F(u_hat, theta)
 * + 1/2 log det H_uu - (n/2) log(2 pi), with F = -log_density and
 * u_hat = argmin_u F(u, theta).
 *
 * Evaluation is const: callers pass the inner warm start explicitly, so one
 * instance can be shared by concurrent chains.
 */
class MarginalObjective {
 public:
  MarginalObjective(ModelPtr model, LaplaceOptions opts = {});

  const Model& model() const noexcept { return *model_; }
  const ModelPtr& model_ptr() const noexcept { return model_; }
  const LaplaceOptions& options() const noexcept { return opts_; }
  int num_theta() const noexcept { return model_->num_fixed(); }

  /// Full parameter vector from its random and fixed parts.
  Vector join(const Vector& u, const Vector& theta) const;
  Vector theta_of(const Vector& q) const;
  Vector u_of(const Vector& q) const;

  /// Minimizes F over u at fixed theta starting from u0. Returns u_hat and
  /// adds the Newton step count to *iterations when given.
  Vector inner_newton(const Vector& theta, const Vector& u0, int* iterations = nullptr) const;

  /// f(theta); `u_warm` is the inner start and receives u_hat.
  double value(const Vector& theta, Vector& u_warm, int* iterations = nullptr) const;

  /// f(theta) and its gradient (analytic without random effects, central
  /// differences otherwise).
  double value_gradient(const Vector& theta, Vector& grad, Vector& u_warm,
                        int* iterations = nullptr) const;

  /// Hessian of f at theta by second differences of values (or of the
  /// analytic gradient when there are no random effects), symmetrized.
  Matrix hessian(const Vector& theta, Vector& u_warm) const;

  const SymbolicFactor& symbolic_uu() const noexcept { return symbolic_; }

 private:
  ModelPtr model_;
  LaplaceOptions opts_;
  SymbolicFactor symbolic_;
};

struct PosteriorApprox {
  std::string model_name;
  Vector q_hat;
  Vector theta_hat;
  SparseSymMatrix Q;
  CholeskyFactor factor;  // of Q under an AMD ordering
  Matrix marginal_hessian;  // H of f at theta_hat
  double neg_log_marginal_at_mode = 0.0;
  int inner_iterations = 0;
  int outer_iterations = 0;
  bool converged = false;
  bool jittered = false;
  double jitter = 0.0;
  std::vector<double> outer_path;  // f after each outer step
  double optimize_seconds = 0.0;
  double q_seconds = 0.0;
  double factorize_seconds = 0.0;
};

/// theta_hat by BFGS on f followed by Newton polishing.
BfgsResult outer_optimize(const MarginalObjective& mo, const Vector& theta0, Vector& u_warm,
                          int* inner_iterations = nullptr);

/// Joint precision at q_hat: H_uu, the cross block and
/// H_theta_u H_uu^{-1} H_u_theta + marginal_hessian.
SparseSymMatrix assemble_Q(const MarginalObjective& mo, const Vector& q_hat,
                           const Matrix& marginal_hessian);

/// Full pipeline: optimize, assemble Q and factorize it (with recorded
/// jitter). Throws NoInteriorMode, MaxIterations, NonFiniteObjective or
/// NotPositiveDefinite.
PosteriorApprox laplace_approximate(ModelPtr model, const LaplaceOptions& opts = {});

/// n draws (rows) of q_hat + P^T L^{-T} z.
Matrix precision_sample(const PosteriorApprox& a, int n, std::uint64_t seed);

/// sqrt(j^T Q^{-1} j).
double delta_method(const PosteriorApprox& a, const Vector& j);

/// Theta-only model with log density -f(theta) and a central-difference
/// gradient. Inner solves start from u_hat(theta_hat) on every call.
/// Throws ConfigError when the model has no random effects.
ModelPtr marginal_model(ModelPtr model, const PosteriorApprox& a, const LaplaceOptions& opts = {});

/// Approximation of the marginal model built from the full one: mode
/// theta_hat and precision marginal_hessian.
PosteriorApprox marginal_approx(const PosteriorApprox& full);

}  // namespace snuts

#endif  // SNUTS_LAPLACE_HPP
