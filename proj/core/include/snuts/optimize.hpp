#ifndef SNUTS_OPTIMIZE_HPP
#define SNUTS_OPTIMIZE_HPP

#include <functional>

#include "snuts/sparse_linalg.hpp"

namespace snuts {

struct BfgsOptions {
  int max_iterations = 200;
  double grad_tol = 1e-6;      // on the infinity norm of the gradient
  double rel_f_tol = 1e-10;    // relative change of the objective
  double max_abs_x = 0.0;      // when > 0, leaving this box throws NoInteriorMode
};

struct BfgsResult {
  Vector x;
  double f = 0.0;
  Vector grad;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> f_path;  // objective after each accepted step
};

/// Objective returns f(x) and writes the gradient.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

/// Minimizes `f` from x0 by BFGS with Armijo backtracking. Throws
/// MaxIterations when the budget runs out and NonFiniteObjective when f is
/// not finite at x0 or no finite step can be found.
BfgsResult minimize_bfgs(const Objective& f, const Vector& x0, const BfgsOptions& opts = {});

}  // namespace snuts

#endif  // SNUTS_OPTIMIZE_HPP
