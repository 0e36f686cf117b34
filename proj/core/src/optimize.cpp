#include "snuts/optimize.hpp"

#include <cmath>

#include "snuts/error.hpp"

namespace snuts {

namespace {

bool finite(const Vector& v) { return v.allFinite(); }

}  // namespace

BfgsResult minimize_bfgs(const Objective& f, const Vector& x0, const BfgsOptions& opts) {
  const Eigen::Index n = x0.size();
  BfgsResult r;
  r.x = x0;
  r.grad.resize(n);
  r.f = f(r.x, r.grad);
  r.evaluations = 1;
  if (!std::isfinite(r.f) || !finite(r.grad))
    throw NonFiniteObjective("minimize_bfgs: objective not finite at the starting point");
  if (n == 0 || r.grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
    r.converged = true;
    return r;
  }

  Matrix h = Matrix::Identity(n, n);
  bool scaled = false;
  Vector g_new(n);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    Vector dir = -(h * r.grad);
    double slope = dir.dot(r.grad);
    if (!(slope < 0.0)) {
      h.setIdentity();
      dir = -r.grad;
      slope = dir.dot(r.grad);
    }

    double step = 1.0;
    if (!scaled) step = std::min(1.0, 1.0 / r.grad.lpNorm<Eigen::Infinity>());
    double f_new = 0.0;
    Vector x_new;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = r.x + step * dir;
      f_new = f(x_new, g_new);
      ++r.evaluations;
      if (std::isfinite(f_new) && finite(g_new) && f_new <= r.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No decrease possible along the search direction: treat as converged
      // when the gradient is already tiny relative to f, otherwise fail.
      if (r.grad.lpNorm<Eigen::Infinity>() < 1e3 * opts.grad_tol) {
        r.converged = true;
        r.iterations = it;
        return r;
      }
      throw NonFiniteObjective("minimize_bfgs: line search failed to find a finite decrease");
    }
    if (opts.max_abs_x > 0.0 && x_new.lpNorm<Eigen::Infinity>() > opts.max_abs_x)
      throw NoInteriorMode("minimize_bfgs: iterate left the admissible box");

    const Vector s = x_new - r.x;
    const Vector y = g_new - r.grad;
    const double f_old = r.f;
    r.x = x_new;
    r.f = f_new;
    r.grad = g_new;
    r.iterations = it;
    r.f_path.push_back(f_new);

    if (r.grad.lpNorm<Eigen::Infinity>() < opts.grad_tol ||
        std::abs(f_old - f_new) <= opts.rel_f_tol * std::max(1.0, std::abs(f_old))) {
      r.converged = true;
      return r;
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Vector hy = h * y;
      h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
           rho * (hy * s.transpose() + s * hy.transpose());
    }
  }
  throw MaxIterations("minimize_bfgs: iteration limit reached");
}

}  // namespace snuts
