#include "snuts/precondition.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "snuts/error.hpp"

namespace snuts {

std::string to_string(PreconditionerKind k) {
  switch (k) {
    case PreconditionerKind::Identity: return "identity";
    case PreconditionerKind::Diagonal: return "diag";
    case PreconditionerKind::Dense: return "dense";
    case PreconditionerKind::Sparse: return "sparse";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Preconditioner

Preconditioner Preconditioner::identity(int dim) {
  Preconditioner p;
  p.kind_ = PreconditionerKind::Identity;
  p.dim_ = dim;
  return p;
}

Preconditioner Preconditioner::diagonal(Vector scales) {
  if (!(scales.array() > 0.0).all() || !scales.allFinite())
    throw std::invalid_argument("Preconditioner::diagonal: scales must be positive and finite");
  Preconditioner p;
  p.kind_ = PreconditionerKind::Diagonal;
  p.dim_ = static_cast<int>(scales.size());
  p.scales_ = std::move(scales);
  return p;
}

Preconditioner Preconditioner::dense(Matrix lower) {
  if (lower.rows() != lower.cols()) throw DimensionMismatch("Preconditioner::dense: not square");
  if (!(lower.diagonal().array() > 0.0).all())
    throw NotPositiveDefinite("Preconditioner::dense: factor diagonal must be positive");
  Preconditioner p;
  p.kind_ = PreconditionerKind::Dense;
  p.dim_ = static_cast<int>(lower.rows());
  p.lower_ = lower.triangularView<Eigen::Lower>();
  return p;
}

Preconditioner Preconditioner::dense_from_covariance(const Matrix& sigma) {
  return dense(dense_cholesky(sigma));
}

Preconditioner Preconditioner::sparse(CholeskyFactor factor) {
  Preconditioner p;
  p.kind_ = PreconditionerKind::Sparse;
  p.dim_ = factor.dim();
  p.factor_ = std::move(factor);
  return p;
}

Vector Preconditioner::forward(const Vector& q) const {
  if (q.size() != dim_) throw DimensionMismatch("Preconditioner::forward: size mismatch");
  switch (kind_) {
    case PreconditionerKind::Identity: return q;
    case PreconditionerKind::Diagonal: return q.cwiseQuotient(scales_);
    case PreconditionerKind::Dense: return lower_.triangularView<Eigen::Lower>().solve(q);
    case PreconditionerKind::Sparse: return factor_.multiply_upper(factor_.perm().apply(q));
  }
  return q;
}

Vector Preconditioner::backward(const Vector& qp) const {
  if (qp.size() != dim_) throw DimensionMismatch("Preconditioner::backward: size mismatch");
  switch (kind_) {
    case PreconditionerKind::Identity: return qp;
    case PreconditionerKind::Diagonal: return qp.cwiseProduct(scales_);
    case PreconditionerKind::Dense: return lower_.triangularView<Eigen::Lower>() * qp;
    case PreconditionerKind::Sparse: return factor_.perm().apply_transpose(factor_.solve_upper(qp));
  }
  return qp;
}

Vector Preconditioner::pullback(const Vector& g) const {
  if (g.size() != dim_) throw DimensionMismatch("Preconditioner::pullback: size mismatch");
  switch (kind_) {
    case PreconditionerKind::Identity: return g;
    case PreconditionerKind::Diagonal: return g.cwiseProduct(scales_);
    case PreconditionerKind::Dense: return lower_.triangularView<Eigen::Lower>().transpose() * g;
    case PreconditionerKind::Sparse: return factor_.solve_lower(factor_.perm().apply(g));
  }
  return g;
}

// ---------------------------------------------------------------------------

TransformedTarget::TransformedTarget(ModelPtr model, PreconditionerPtr precond)
    : model_(std::move(model)), precond_(std::move(precond)) {
  if (!model_ || !precond_) throw std::invalid_argument("TransformedTarget: null argument");
  if (precond_->dim() != model_->dim())
    throw DimensionMismatch("TransformedTarget: preconditioner does not match the model");
  g_.resize(model_->dim());
}

double TransformedTarget::log_density(const Vector& qp) {
  return model_->log_density(precond_->backward(qp));
}

double TransformedTarget::log_density_gradient(const Vector& qp, Vector& gp) {
  q_ = precond_->backward(qp);
  const double lp = model_->log_density_gradient(q_, g_);
  gp = precond_->pullback(g_);
  return lp;
}

// ---------------------------------------------------------------------------
// Condition statistics

double condition_factor(const Matrix& s) {
  if (s.rows() != s.cols() || s.rows() == 0)
    throw DimensionMismatch("condition_factor: matrix must be square and nonempty");
  const Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  const Vector lambda = es.eigenvalues();
  if (!(lambda.minCoeff() > 0.0))
    throw NotPositiveDefinite("condition_factor: matrix is not positive definite");
  const double lmax = lambda.maxCoeff();
  double sum = 0.0;
  for (const double l : lambda) sum += std::pow(lmax / l, 4);
  return std::pow(sum, 0.25);
}

CorrelationStats correlation_stats(const Matrix& s) {
  const Vector sd = s.diagonal().cwiseSqrt();
  CorrelationStats c;
  for (Eigen::Index j = 0; j < s.cols(); ++j)
    for (Eigen::Index i = j + 1; i < s.rows(); ++i)
      c.max_abs_corr = std::max(c.max_abs_corr, std::abs(s(i, j)) / (sd[i] * sd[j]));
  c.sd_ratio = sd.maxCoeff() / sd.minCoeff();
  return c;
}

namespace {

Eigen::SparseMatrix<double> to_eigen_sparse(const SparseSymMatrix& a) {
  std::vector<Eigen::Triplet<double>> t;
  for (const auto& e : a.triplets()) {
    t.emplace_back(e.row, e.col, e.value);
    if (e.row != e.col) t.emplace_back(e.col, e.row, e.value);
  }
  Eigen::SparseMatrix<double> m(a.dim(), a.dim());
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

// Smallest eigenvalue of the factored matrix by inverse iteration.
double smallest_eigenvalue(const CholeskyFactor& f) {
  Vector x = Vector::Ones(f.dim()).normalized();
  double mu = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vector y = f.solve(x);
    const double norm = y.norm();
    const double next = 1.0 / norm;
    x = y / norm;
    if (it > 0 && std::abs(next - mu) <= 1e-12 * next) return next;
    mu = next;
  }
  return mu;
}

}  // namespace

ConditionReport condition_report(const PosteriorApprox& a, int dense_cap) {
  ConditionReport r;
  r.dim = a.Q.dim();
  r.sparsity_percent = sparsity_percent(a.Q);
  if (r.dim <= dense_cap) {
    const Matrix sigma = precision_to_cov(a.factor, dense_cap);
    const CorrelationStats c = correlation_stats(sigma);
    r.max_abs_corr = c.max_abs_corr;
    r.sd_ratio = c.sd_ratio;
    if (r.dim <= 500) {
      r.kappa = condition_factor(sigma);
      return r;
    }
  } else {
    const Vector sd = inverse_diagonal(a.factor).cwiseSqrt();
    r.max_abs_corr = std::numeric_limits<double>::quiet_NaN();
    r.sd_ratio = sd.maxCoeff() / sd.minCoeff();
  }
  // Eigenvalues of Sigma are reciprocals of those of Q.
  const Eigen::SparseMatrix<double> q = to_eigen_sparse(a.Q);
  const Eigen::SparseMatrix<double> q2 = q * q;
  r.kappa = std::pow(q2.squaredNorm(), 0.25) / smallest_eigenvalue(a.factor);
  return r;
}

// ---------------------------------------------------------------------------
// Timing

namespace {

using clock_type = std::chrono::steady_clock;

// Per-call seconds of fn, as the median of `reps` batches each long enough
// to be well above timer resolution.
template <class Fn>
double median_time(Fn&& fn, int reps) {
  int batch = 1;
  for (;;) {
    const auto t0 = clock_type::now();
    for (int k = 0; k < batch; ++k) fn();
    const double s = std::chrono::duration<double>(clock_type::now() - t0).count();
    if (s > 2e-5 || batch >= (1 << 20)) break;
    batch *= 2;
  }
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock_type::now();
    for (int k = 0; k < batch; ++k) fn();
    times.push_back(std::chrono::duration<double>(clock_type::now() - t0).count() / batch);
  }
  std::nth_element(times.begin(), times.begin() + reps / 2, times.end());
  return times[static_cast<std::size_t>(reps / 2)];
}

ModelPtr borrow(const Model& m) { return ModelPtr(ModelPtr(), &m); }

}  // namespace

double time_transformed_gradient(const Model& m, const Preconditioner& p, const Vector& q_hat,
                                 int reps) {
  TransformedTarget target(borrow(m), PreconditionerPtr(PreconditionerPtr(), &p));
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> norm;
  const Vector qp0 = p.forward(q_hat);
  Vector qp = qp0;
  for (Eigen::Index i = 0; i < qp.size(); ++i) qp[i] += 0.01 * norm(rng);
  Vector gp(m.dim());
  volatile double sink = 0.0;
  const double t = median_time([&] { sink = sink + target.log_density_gradient(qp, gp); }, reps);
  return t;
}

double gradient_cost_ratio(const Preconditioner& p, const Model& m, const Vector& q, int reps) {
  if (reps < 5) throw ConfigError("gradient_cost_ratio: reps must be >= 5");
  TransformedTarget target(borrow(m), PreconditionerPtr(PreconditionerPtr(), &p));
  const Vector qp = p.forward(q);
  Vector g(m.dim());
  Vector gp(m.dim());
  volatile double sink = 0.0;
  // Interleave to share any drift in machine state.
  std::vector<double> raw, transformed;
  for (int r = 0; r < reps; ++r) {
    raw.push_back(median_time([&] { sink = sink + m.log_density_gradient(q, g); }, 3));
    transformed.push_back(
        median_time([&] { sink = sink + target.log_density_gradient(qp, gp); }, 3));
  }
  auto median = [](std::vector<double>& v) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
  };
  return median(transformed) / median(raw);
}

double transform_cost(const Preconditioner& p, const Vector& q, int reps) {
  const Vector qp = p.forward(q);
  volatile double sink = 0.0;
  return median_time(
      [&] {
        const Vector x = p.backward(qp);
        const Vector g = p.pullback(x);
        sink = sink + g[0];
      },
      reps);
}

// ---------------------------------------------------------------------------
// Builders and selection

Preconditioner build_diagonal(const PosteriorApprox& a) {
  return Preconditioner::diagonal(inverse_diagonal(a.factor).cwiseSqrt());
}

Preconditioner build_dense(const PosteriorApprox& a, int dense_cap) {
  return Preconditioner::dense_from_covariance(precision_to_cov(a.factor, dense_cap));
}

Preconditioner build_sparse(const PosteriorApprox& a) { return Preconditioner::sparse(a.factor); }

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

}  // namespace

Selection build_auto(const PosteriorApprox* a, const Model& m, const SelectorOptions& opts) {
  Selection s;
  if (a == nullptr) {
    s.preconditioner = std::make_shared<Preconditioner>(Preconditioner::identity(m.dim()));
    s.stan_default = true;
    s.trace.push_back("no Q available: stan default (identity metric with diagonal adaptation)");
    return s;
  }
  if (a->Q.dim() > opts.dense_cap) {
    s.preconditioner = std::make_shared<Preconditioner>(build_sparse(*a));
    s.trace.push_back("dim " + std::to_string(a->Q.dim()) + " above dense cap " +
                      std::to_string(opts.dense_cap) + ": sparse");
    return s;
  }
  s.report = condition_report(*a, opts.dense_cap);
  s.trace.push_back("max|corr| = " + fmt(s.report->max_abs_corr) +
                    ", sd ratio = " + fmt(s.report->sd_ratio) + ", kappa = " + fmt(s.report->kappa));
  if (s.report->max_abs_corr <= opts.corr_threshold) {
    s.preconditioner = std::make_shared<Preconditioner>(build_diagonal(*a));
    s.trace.push_back("max|corr| <= " + fmt(opts.corr_threshold) + ": diag");
    return s;
  }
  if (opts.correlated_choice) {
    const PreconditionerKind k = *opts.correlated_choice;
    if (k != PreconditionerKind::Dense && k != PreconditionerKind::Sparse)
      throw ConfigError("build_auto: recorded choice must be dense or sparse");
    s.preconditioner = std::make_shared<Preconditioner>(
        k == PreconditionerKind::Dense ? build_dense(*a, opts.dense_cap) : build_sparse(*a));
    s.trace.push_back("max|corr| > " + fmt(opts.corr_threshold) + ": " + to_string(k) +
                      " (recorded choice, not timed)");
    return s;
  }
  const GradientTimer timer = opts.timer ? opts.timer
                                         : GradientTimer([](const Model& mm, const Preconditioner& p,
                                                            const Vector& q) {
                                             return time_transformed_gradient(mm, p, q, 20);
                                           });
  auto dense = std::make_shared<Preconditioner>(build_dense(*a, opts.dense_cap));
  auto sparse = std::make_shared<Preconditioner>(build_sparse(*a));
  const double t_dense = timer(m, *dense, a->q_hat);
  const double t_sparse = timer(m, *sparse, a->q_hat);
  s.trace.push_back("gradient time dense = " + fmt(t_dense) + " s, sparse = " + fmt(t_sparse) + " s");
  if (t_sparse < t_dense) {
    s.preconditioner = sparse;
    s.trace.push_back("max|corr| > " + fmt(opts.corr_threshold) + ": sparse (faster gradient)");
  } else {
    s.preconditioner = dense;
    s.trace.push_back("max|corr| > " + fmt(opts.corr_threshold) + ": dense (faster gradient)");
  }
  return s;
}

}  // namespace snuts
