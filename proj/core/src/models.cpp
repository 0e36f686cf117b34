#include "snuts/models.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "snuts/error.hpp"

namespace snuts {

Model::Model(std::string name, int dim, std::vector<int> random_idx,
             std::vector<std::string> names)
    : name_(std::move(name)), dim_(dim), random_idx_(std::move(random_idx)), names_(std::move(names)) {
  if (dim_ < 1) throw std::invalid_argument("Model: dimension must be positive");
  std::vector<char> is_random(static_cast<std::size_t>(dim_), 0);
  for (const int i : random_idx_) {
    if (i < 0 || i >= dim_ || is_random[i])
      throw std::invalid_argument("Model: random index set is invalid");
    is_random[i] = 1;
  }
  for (int i = 0; i < dim_; ++i)
    if (!is_random[i]) fixed_idx_.push_back(i);
  if (names_.empty()) {
    for (int i = 0; i < dim_; ++i) names_.push_back("q[" + std::to_string(i) + "]");
  } else if (static_cast<int>(names_.size()) != dim_) {
    throw std::invalid_argument("Model: parameter name count does not match dimension");
  }
}

Vector Model::gradient(const Vector& q) const {
  Vector g(dim());
  log_density_gradient(q, g);
  return g;
}

SparseSymMatrix Model::hessian_uu(const Vector&) const {
  if (num_random() == 0) return SparseSymMatrix(0, {0}, {}, {});
  throw std::logic_error("Model '" + name() + "' declares random effects but no hessian_uu");
}

std::vector<std::pair<int, int>> Model::cross_pattern() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(num_random()) * static_cast<std::size_t>(num_fixed()));
  for (int t = 0; t < num_fixed(); ++t)
    for (int u = 0; u < num_random(); ++u) out.emplace_back(u, t);
  return out;
}

std::optional<std::vector<double>> Model::cross_hessian(const Vector&) const {
  return std::nullopt;
}

void Model::write_dataset_csv(std::ostream&) const {}

std::map<std::string, double> SimulatedModel::settings() const {
  std::map<std::string, double> out;
  out["seed"] = static_cast<double>(dataset_.seed);
  for (const auto& [k, v] : dataset_.sizes) out["size." + k] = v;
  for (const auto& [k, v] : dataset_.truth) out["truth." + k] = v;
  return out;
}

// ---------------------------------------------------------------------------

GaussianModel::GaussianModel(std::string name, Vector mean, Matrix covariance)
    : Model(std::move(name), static_cast<int>(mean.size()), {}),
      mean_(std::move(mean)),
      cov_(std::move(covariance)) {
  if (cov_.rows() != dim() || cov_.cols() != dim())
    throw DimensionMismatch("GaussianModel: covariance does not match mean");
  const Matrix l = dense_cholesky(cov_);
  const Matrix linv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(dim(), dim()));
  prec_ = linv.transpose() * linv;
  prec_ = 0.5 * (prec_ + prec_.transpose());
}

Vector GaussianModel::initial_point() const { return Vector::Zero(dim()); }

double GaussianModel::log_density(const Vector& q) const {
  const Vector d = q - mean_;
  return -0.5 * d.dot(prec_ * d);
}

double GaussianModel::log_density_gradient(const Vector& q, Vector& grad) const {
  const Vector d = q - mean_;
  grad.noalias() = -(prec_ * d);
  return 0.5 * d.dot(grad);
}

std::shared_ptr<const GaussianModel> bivariate_normal(double tau, double rho) {
  if (!(std::abs(rho) < 1.0)) throw ConfigError("bivariate_normal: |rho| must be < 1");
  if (!(tau > 0.0)) throw ConfigError("bivariate_normal: tau must be positive");
  Matrix cov(2, 2);
  const double c = rho * std::sqrt(tau);
  cov << 1.0, c, c, tau;
  return std::make_shared<GaussianModel>("bivariate_normal", Vector::Zero(2), cov);
}

std::shared_ptr<const GaussianModel> independent_normal(const Vector& sds) {
  if ((sds.array() <= 0.0).any()) throw ConfigError("independent_normal: sds must be positive");
  Matrix cov = sds.array().square().matrix().asDiagonal();
  return std::make_shared<GaussianModel>("independent_normal", Vector::Zero(sds.size()), cov);
}

// ---------------------------------------------------------------------------

double check_gradient(const Model& m, const Vector& q, double h) {
  const Vector g = m.gradient(q);
  double worst = 0.0;
  Vector x = q;
  for (int i = 0; i < m.dim(); ++i) {
    x[i] = q[i] + h;
    const double fp = m.log_density(x);
    x[i] = q[i] - h;
    const double fm = m.log_density(x);
    x[i] = q[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NonFiniteObjective("check_gradient: non-finite density in stencil for " + m.name());
    worst = std::max(worst, std::abs(g[i] - (fp - fm) / (2.0 * h)));
  }
  return worst;
}

Matrix finite_difference_hessian(const Model& m, const Vector& q, double h) {
  const int n = m.dim();
  Matrix hess(n, n);
  Vector x = q;
  for (int j = 0; j < n; ++j) {
    const double step = h * std::max(1.0, std::abs(q[j]));
    x[j] = q[j] + step;
    const Vector gp = m.gradient(x);
    x[j] = q[j] - step;
    const Vector gm = m.gradient(x);
    x[j] = q[j];
    hess.col(j) = -(gp - gm) / (2.0 * step);
  }
  return 0.5 * (hess + hess.transpose());
}

}  // namespace snuts
