#include "snuts/laplace.hpp"

#include <boost/random/normal_distribution.hpp>

#include <chrono>
#include <cmath>
#include <random>

#include "snuts/error.hpp"

namespace snuts {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double relative_step(double base, double x) { return base * std::max(1.0, std::abs(x)); }

}  // namespace

// ---------------------------------------------------------------------------
// MarginalObjective

MarginalObjective::MarginalObjective(ModelPtr model, LaplaceOptions opts)
    : model_(std::move(model)), opts_(opts) {
  if (!model_) throw ConfigError("MarginalObjective: null model");
  if (model_->num_random() > 0) {
    const SparseSymMatrix h = model_->hessian_uu(model_->initial_point());
    symbolic_ = analyze(h, amd_order(h));
  }
}

Vector MarginalObjective::join(const Vector& u, const Vector& theta) const {
  Vector q(model_->dim());
  const auto& ri = model_->random_idx();
  const auto& fi = model_->fixed_idx();
  for (std::size_t k = 0; k < ri.size(); ++k) q[ri[k]] = u[static_cast<Eigen::Index>(k)];
  for (std::size_t k = 0; k < fi.size(); ++k) q[fi[k]] = theta[static_cast<Eigen::Index>(k)];
  return q;
}

Vector MarginalObjective::theta_of(const Vector& q) const {
  const auto& fi = model_->fixed_idx();
  Vector t(static_cast<Eigen::Index>(fi.size()));
  for (std::size_t k = 0; k < fi.size(); ++k) t[static_cast<Eigen::Index>(k)] = q[fi[k]];
  return t;
}

Vector MarginalObjective::u_of(const Vector& q) const {
  const auto& ri = model_->random_idx();
  Vector u(static_cast<Eigen::Index>(ri.size()));
  for (std::size_t k = 0; k < ri.size(); ++k) u[static_cast<Eigen::Index>(k)] = q[ri[k]];
  return u;
}

Vector MarginalObjective::inner_newton(const Vector& theta, const Vector& u0,
                                       int* iterations) const {
  const int n = model_->num_random();
  if (n == 0) return Vector();
  if (u0.size() != n || theta.size() != num_theta())
    throw DimensionMismatch("inner_newton: size mismatch");
  if (!u0.allFinite()) throw NonFiniteObjective("inner_newton: non-finite start");

  Vector u = u0;
  Vector q = join(u, theta);
  Vector g(model_->dim());
  double f = -model_->log_density_gradient(q, g);
  Vector gu = -u_of(g);
  for (int it = 0; it < opts_.inner_max_iterations; ++it) {
    if (!std::isfinite(f) || !gu.allFinite())
      throw NoInteriorMode("inner_newton: non-finite objective for " + model_->name());
    if (gu.lpNorm<Eigen::Infinity>() < opts_.inner_tol) return u;

    JitteredFactor jf;
    try {
      jf = factorize_with_jitter(symbolic_, model_->hessian_uu(q));
    } catch (const NotPositiveDefinite&) {
      throw NoInteriorMode("inner_newton: H_uu not positive definite after jitter");
    }
    const Vector d = -jf.factor.solve(gu);
    if (iterations) ++*iterations;

    double step = 1.0;
    bool accepted = false;
    const double slack = 1e-14 * std::max(1.0, std::abs(f));
    for (int k = 0; k < 50; ++k) {
      const Vector u_new = u + step * d;
      const Vector q_new = join(u_new, theta);
      Vector g_new(model_->dim());
      const double f_new = -model_->log_density_gradient(q_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + slack) {
        u = u_new;
        q = q_new;
        f = f_new;
        gu = -u_of(g_new);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (gu.lpNorm<Eigen::Infinity>() < 1e3 * opts_.inner_tol) return u;
      throw NoInteriorMode("inner_newton: line search stalled for " + model_->name());
    }
  }
  if (gu.lpNorm<Eigen::Infinity>() < opts_.inner_tol) return u;
  throw MaxIterations("inner_newton: iteration limit reached for " + model_->name());
}

double MarginalObjective::value(const Vector& theta, Vector& u_warm, int* iterations) const {
  if (model_->num_random() == 0) return -model_->log_density(join(Vector(), theta));
  u_warm = inner_newton(theta, u_warm, iterations);
  const Vector q = join(u_warm, theta);
  const double f = -model_->log_density(q);
  JitteredFactor jf;
  try {
    jf = factorize_with_jitter(symbolic_, model_->hessian_uu(q));
  } catch (const NotPositiveDefinite&) {
    throw NoInteriorMode("marginal: H_uu not positive definite at the inner mode");
  }
  return f + 0.5 * jf.factor.log_determinant() - 0.5 * model_->num_random() * kLog2Pi;
}

double MarginalObjective::value_gradient(const Vector& theta, Vector& grad, Vector& u_warm,
                                         int* iterations) const {
  if (model_->num_random() == 0 && model_->analytic_gradient()) {
    Vector g(model_->dim());
    const double f = -model_->log_density_gradient(join(Vector(), theta), g);
    grad = -g;
    return f;
  }
  const double f = value(theta, u_warm, iterations);
  grad.resize(theta.size());
  Vector t = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = relative_step(opts_.gradient_step, theta[i]);
    t[i] = theta[i] + h;
    const double hp = t[i] - theta[i];
    Vector u = u_warm;
    const double fp = value(t, u, iterations);
    t[i] = theta[i] - h;
    const double hm = theta[i] - t[i];
    u = u_warm;
    const double fm = value(t, u, iterations);
    t[i] = theta[i];
    grad[i] = (fp - fm) / (hp + hm);
  }
  return f;
}

Matrix MarginalObjective::hessian(const Vector& theta, Vector& u_warm) const {
  const Eigen::Index m = theta.size();
  Matrix h(m, m);
  if (model_->num_random() == 0 && model_->analytic_gradient()) {
    Vector t = theta;
    Vector gp, gm;
    Vector scratch;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double step = relative_step(1e-5, theta[j]);
      t[j] = theta[j] + step;
      value_gradient(t, gp, scratch);
      t[j] = theta[j] - step;
      value_gradient(t, gm, scratch);
      t[j] = theta[j];
      h.col(j) = (gp - gm) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());
  }

  const double f0 = value(theta, u_warm);
  const Vector u0 = u_warm;
  Vector step(m);
  for (Eigen::Index i = 0; i < m; ++i) step[i] = relative_step(opts_.hessian_step, theta[i]);
  auto f_at = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
    Vector t = theta;
    t[i] += si * step[i];
    if (j >= 0) t[j] += sj * step[j];
    Vector u = u0;
    return value(t, u);
  };
  for (Eigen::Index i = 0; i < m; ++i) {
    const double fp = f_at(i, 1.0, -1, 0.0);
    const double fm = f_at(i, -1.0, -1, 0.0);
    h(i, i) = (fp - 2.0 * f0 + fm) / (step[i] * step[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double fpp = f_at(i, 1.0, j, 1.0);
      const double fpm = f_at(i, 1.0, j, -1.0);
      const double fmp = f_at(i, -1.0, j, 1.0);
      const double fmm = f_at(i, -1.0, j, -1.0);
      h(i, j) = h(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * step[i] * step[j]);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

BfgsResult outer_optimize(const MarginalObjective& mo, const Vector& theta0, Vector& u_warm,
                          int* inner_iterations) {
  const LaplaceOptions& o = mo.options();
  BfgsOptions bo;
  bo.max_iterations = o.outer_max_iterations;
  bo.grad_tol = o.outer_grad_tol;
  bo.rel_f_tol = o.outer_rel_f_tol;
  bo.max_abs_x = o.theta_bound;
  const Objective obj = [&](const Vector& theta, Vector& grad) {
    return mo.value_gradient(theta, grad, u_warm, inner_iterations);
  };
  BfgsResult r = minimize_bfgs(obj, theta0, bo);

  // Newton refinement with the marginal Hessian; BFGS stops on a relative
  // change of f well before theta itself is accurate to 1e-6.
  for (int k = 0; k < o.polish_steps && r.x.size() > 0; ++k) {
    const Matrix h = mo.hessian(r.x, u_warm);
    const Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success) break;
    const Vector x_new = r.x - llt.solve(r.grad);
    if (x_new.lpNorm<Eigen::Infinity>() > o.theta_bound) break;
    Vector g_new;
    Vector u = u_warm;
    const double f_new = mo.value_gradient(x_new, g_new, u, inner_iterations);
    if (!std::isfinite(f_new) || f_new > r.f + 1e-12 * std::max(1.0, std::abs(r.f))) break;
    const bool done = g_new.lpNorm<Eigen::Infinity>() >= r.grad.lpNorm<Eigen::Infinity>();
    r.x = x_new;
    r.f = f_new;
    r.grad = g_new;
    u_warm = u;
    r.f_path.push_back(f_new);
    if (done) break;
  }
  mo.value(r.x, u_warm, inner_iterations);
  return r;
}

SparseSymMatrix assemble_Q(const MarginalObjective& mo, const Vector& q_hat,
                           const Matrix& marginal_hessian) {
  const Model& m = mo.model();
  const auto& ri = m.random_idx();
  const auto& fi = m.fixed_idx();
  const int nr = m.num_random();
  const int nf = m.num_fixed();
  if (marginal_hessian.rows() != nf || marginal_hessian.cols() != nf)
    throw DimensionMismatch("assemble_Q: marginal Hessian size mismatch");

  std::vector<Triplet> t;
  Matrix schur = Matrix::Zero(nf, nf);
  if (nr > 0) {
    const SparseSymMatrix huu = m.hessian_uu(q_hat);
    for (const auto& e : huu.triplets()) t.push_back({ri[e.row], ri[e.col], e.value});

    const auto pattern = m.cross_pattern();
    Matrix cross = Matrix::Zero(nr, nf);
    if (const auto values = m.cross_hessian(q_hat)) {
      if (values->size() != pattern.size())
        throw DimensionMismatch("assemble_Q: cross_hessian does not match cross_pattern");
      for (std::size_t k = 0; k < pattern.size(); ++k)
        cross(pattern[k].first, pattern[k].second) = (*values)[k];
    } else {
      Matrix full(nr, nf);
      Vector q = q_hat;
      for (int c = 0; c < nf; ++c) {
        const double h = relative_step(1e-5, q_hat[fi[c]]);
        q[fi[c]] = q_hat[fi[c]] + h;
        const Vector gp = mo.u_of(m.gradient(q));
        q[fi[c]] = q_hat[fi[c]] - h;
        const Vector gm = mo.u_of(m.gradient(q));
        q[fi[c]] = q_hat[fi[c]];
        full.col(c) = -(gp - gm) / (2.0 * h);
      }
      for (const auto& [u, c] : pattern) cross(u, c) = full(u, c);
    }
    for (const auto& [u, c] : pattern) t.push_back({ri[u], fi[c], cross(u, c)});

    JitteredFactor jf;
    try {
      jf = factorize_with_jitter(mo.symbolic_uu(), huu);
    } catch (const NotPositiveDefinite&) {
      throw NoInteriorMode("assemble_Q: H_uu not positive definite at q_hat");
    }
    for (int c = 0; c < nf; ++c) {
      const Vector x = jf.factor.solve(cross.col(c));
      schur.col(c) = cross.transpose() * x;
    }
    schur = 0.5 * (schur + schur.transpose());
  }
  const Matrix qtt = schur + 0.5 * (marginal_hessian + marginal_hessian.transpose());
  for (int c = 0; c < nf; ++c)
    for (int r = c; r < nf; ++r) t.push_back({fi[r], fi[c], qtt(r, c)});
  return SparseSymMatrix::from_triplets(m.dim(), t);
}

PosteriorApprox laplace_approximate(ModelPtr model, const LaplaceOptions& opts) {
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  const MarginalObjective mo(model, opts);
  const Vector q0 = model->initial_point();
  Vector u_warm = mo.u_of(q0);

  PosteriorApprox a;
  a.model_name = model->name();
  const BfgsResult r = outer_optimize(mo, mo.theta_of(q0), u_warm, &a.inner_iterations);
  a.theta_hat = r.x;
  a.outer_iterations = r.iterations;
  a.converged = r.converged;
  a.outer_path = r.f_path;
  a.q_hat = mo.join(u_warm, a.theta_hat);
  a.neg_log_marginal_at_mode = r.f;
  a.optimize_seconds = seconds_since(t0);

  t0 = clock::now();
  a.marginal_hessian = mo.hessian(a.theta_hat, u_warm);
  a.Q = assemble_Q(mo, a.q_hat, a.marginal_hessian);
  a.q_seconds = seconds_since(t0);

  t0 = clock::now();
  JitteredFactor jf = factorize_with_jitter(a.Q, amd_order(a.Q));
  a.factor = std::move(jf.factor);
  a.jitter = jf.jitter;
  a.jittered = jf.jitter > 0.0;
  a.factorize_seconds = seconds_since(t0);
  return a;
}

Matrix precision_sample(const PosteriorApprox& a, int n, std::uint64_t seed) {
  const int d = a.factor.dim();
  std::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> norm;
  Matrix out(n, d);
  Vector z(d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) z[k] = norm(rng);
    a.factor.solve_upper_in_place(z);
    out.row(i) = (a.q_hat + a.factor.perm().apply_transpose(z)).transpose();
  }
  return out;
}

double delta_method(const PosteriorApprox& a, const Vector& j) {
  return a.factor.solve_lower(a.factor.perm().apply(j)).norm();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> fixed_names(const Model& m) {
  std::vector<std::string> out;
  for (const int i : m.fixed_idx()) out.push_back(m.parameter_names()[i]);
  return out;
}

class MarginalModel final : public Model {
 public:
  MarginalModel(ModelPtr model, const PosteriorApprox& a, const LaplaceOptions& opts)
      : Model(model->name() + "_marginal", model->num_fixed(), {}, fixed_names(*model)),
        mo_(model, opts),
        u_start_(mo_.u_of(a.q_hat)),
        theta_hat_(a.theta_hat) {}

  Vector initial_point() const override { return theta_hat_; }
  bool analytic_gradient() const override { return false; }

  double log_density(const Vector& theta) const override {
    try {
      Vector u = u_start_;
      return -mo_.value(theta, u);
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

  double log_density_gradient(const Vector& theta, Vector& grad) const override {
    try {
      Vector u = u_start_;
      const double f = mo_.value_gradient(theta, grad, u);
      grad = -grad;
      return -f;
    } catch (const Error&) {
      grad = Vector::Constant(theta.size(), std::numeric_limits<double>::quiet_NaN());
      return -std::numeric_limits<double>::infinity();
    }
  }

 private:
  MarginalObjective mo_;
  Vector u_start_;
  Vector theta_hat_;
};

}  // namespace

ModelPtr marginal_model(ModelPtr model, const PosteriorApprox& a, const LaplaceOptions& opts) {
  if (model->num_random() == 0)
    throw ConfigError("marginal_model: '" + model->name() + "' has no random effects");
  return std::make_shared<MarginalModel>(std::move(model), a, opts);
}

PosteriorApprox marginal_approx(const PosteriorApprox& full) {
  PosteriorApprox a;
  a.model_name = full.model_name + "_marginal";
  a.q_hat = full.theta_hat;
  a.theta_hat = full.theta_hat;
  a.marginal_hessian = full.marginal_hessian;
  a.Q = SparseSymMatrix::from_dense(0.5 * (full.marginal_hessian + full.marginal_hessian.transpose()));
  a.neg_log_marginal_at_mode = full.neg_log_marginal_at_mode;
  a.converged = full.converged;
  JitteredFactor jf = factorize_with_jitter(a.Q, amd_order(a.Q));
  a.factor = std::move(jf.factor);
  a.jitter = jf.jitter;
  a.jittered = jf.jitter > 0.0;
  return a;
}

}  // namespace snuts
