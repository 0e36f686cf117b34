#ifndef SNUTS_PRECONDITION_HPP
#define SNUTS_PRECONDITION_HPP

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "snuts/laplace.hpp"
#include "snuts/models.hpp"
#include "snuts/sparse_linalg.hpp"

namespace snuts {

enum class PreconditionerKind { Identity, Diagonal, Dense, Sparse };

std::string to_string(PreconditionerKind k);

/**
 * A fixed linear map q = B q'. Identity: B = I. Diagonal: B = diag(s).
 * Dense: B = L with L L^T = Sigma. Sparse: B = P^T L^{-T} with
 * L L^T = P Q P^T.
 */
class Preconditioner {
 public:
  static Preconditioner identity(int dim);
  static Preconditioner diagonal(Vector scales);
  /// From the lower Cholesky factor of a covariance.
  static Preconditioner dense(Matrix lower);
  static Preconditioner dense_from_covariance(const Matrix& sigma);
  /// From a factor of the precision.
  static Preconditioner sparse(CholeskyFactor factor);

  PreconditionerKind kind() const noexcept { return kind_; }
  std::string name() const { return to_string(kind_); }
  int dim() const noexcept { return dim_; }

  const Vector& scales() const noexcept { return scales_; }
  const Matrix& dense_lower() const noexcept { return lower_; }
  const CholeskyFactor& factor() const noexcept { return factor_; }

  Vector forward(const Vector& q) const;
  Vector backward(const Vector& qp) const;
  /// Gradient with respect to q' given the gradient with respect to q.
  Vector pullback(const Vector& g) const;

 private:
  PreconditionerKind kind_ = PreconditionerKind::Identity;
  int dim_ = 0;
  Vector scales_;
  Matrix lower_;
  CholeskyFactor factor_;
};

using PreconditionerPtr = std::shared_ptr<const Preconditioner>;

/// Log density and gradient of the model in q' coordinates. Holds its own
/// scratch, so give each thread its own copy.
class TransformedTarget {
 public:
  TransformedTarget(ModelPtr model, PreconditionerPtr precond);

  int dim() const noexcept { return model_->dim(); }
  const Model& model() const noexcept { return *model_; }
  const Preconditioner& preconditioner() const noexcept { return *precond_; }

  double log_density(const Vector& qp);
  double log_density_gradient(const Vector& qp, Vector& gp);

 private:
  ModelPtr model_;
  PreconditionerPtr precond_;
  Vector q_;
  Vector g_;
};

struct ConditionReport {
  int dim = 0;
  double max_abs_corr = 0.0;
  double sd_ratio = 1.0;
  double kappa = 1.0;
  double sparsity_percent = 0.0;
};

/// kappa = (sum_d (lambda_max / lambda_d)^4)^(1/4) over eigenvalues of S.
double condition_factor(const Matrix& s);

struct CorrelationStats {
  double max_abs_corr = 0.0;
  double sd_ratio = 1.0;
};
CorrelationStats correlation_stats(const Matrix& s);

/// Report for a Laplace approximation. Above `dense_cap` the correlation is
/// not computed (reported as NaN), sds come from selective solves and kappa
/// from tr(Q^4)^(1/4) / lambda_min(Q).
ConditionReport condition_report(const PosteriorApprox& a, int dense_cap = kDefaultDenseCap);

/// Timing probe: returns a per-evaluation cost in seconds for the
/// transformed gradient of the candidate.
using GradientTimer = std::function<double(const Model&, const Preconditioner&, const Vector& q_hat)>;

/// Median of `reps` wall-clock timings of the transformed gradient at
/// points near q_hat.
double time_transformed_gradient(const Model& m, const Preconditioner& p, const Vector& q_hat,
                                 int reps = 20);

struct SelectorOptions {
  double corr_threshold = 0.3;  // max|corr| <= threshold selects Diagonal
  int dense_cap = kDefaultDenseCap;
  GradientTimer timer;  // defaults to time_transformed_gradient
  /// Dense or Sparse to use above the threshold without timing; replays a
  /// recorded choice so that a rerun is byte-identical.
  std::optional<PreconditionerKind> correlated_choice;
};

struct Selection {
  PreconditionerPtr preconditioner;
  bool stan_default = false;  // no approximation: identity plus mass adaptation
  std::optional<ConditionReport> report;
  std::vector<std::string> trace;
};

/// Automatic choice: identity/fallback without an approximation, Diagonal
/// for low correlations, otherwise the faster of Dense and Sparse.
Selection build_auto(const PosteriorApprox* a, const Model& m, const SelectorOptions& opts = {});

/// Explicit variants built from an approximation.
Preconditioner build_diagonal(const PosteriorApprox& a);
Preconditioner build_dense(const PosteriorApprox& a, int dense_cap = kDefaultDenseCap);
Preconditioner build_sparse(const PosteriorApprox& a);

/// Median transformed-gradient time over median raw-gradient time.
double gradient_cost_ratio(const Preconditioner& p, const Model& m, const Vector& q, int reps = 50);

/// Median time of backward + pullback alone, in seconds.
double transform_cost(const Preconditioner& p, const Vector& q, int reps = 50);

}  // namespace snuts

#endif  // SNUTS_PRECONDITION_HPP
