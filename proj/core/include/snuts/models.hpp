#ifndef SNUTS_MODELS_HPP
#define SNUTS_MODELS_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "snuts/sparse_linalg.hpp"

namespace snuts {

/**
 * An unnormalized log posterior over q = (u, theta) with an analytic
 * gradient and a declared partition into random effects u and fixed
 * effects theta.
 *
 * Priors and Jacobian adjustments are part of log_density(). Hessians are
 * those of the *negative* log density, so they are positive definite near a
 * mode. Evaluation is const and reentrant: a single instance may be shared
 * across sampling threads.
 */
class Model {
 public:
  virtual ~Model() = default;

  const std::string& name() const noexcept { return name_; }
  int dim() const noexcept { return dim_; }
  const std::vector<int>& random_idx() const noexcept { return random_idx_; }
  const std::vector<int>& fixed_idx() const noexcept { return fixed_idx_; }
  int num_random() const noexcept { return static_cast<int>(random_idx_.size()); }
  int num_fixed() const noexcept { return static_cast<int>(fixed_idx_.size()); }
  const std::vector<std::string>& parameter_names() const noexcept { return names_; }

  virtual Vector initial_point() const = 0;
  virtual double log_density(const Vector& q) const = 0;
  /// Returns log_density(q) and writes its gradient into `grad`.
  virtual double log_density_gradient(const Vector& q, Vector& grad) const = 0;
  Vector gradient(const Vector& q) const;
  /// False when log_density_gradient is itself a numerical approximation.
  virtual bool analytic_gradient() const { return true; }

  /// Hessian of -log_density over the random effects (ordered as
  /// random_idx()). The structural pattern never depends on q.
  virtual SparseSymMatrix hessian_uu(const Vector& q) const;

  /// Structural entries (u-local, theta-local) of the u-theta block of the
  /// negative log density Hessian. Defaults to the full block.
  virtual std::vector<std::pair<int, int>> cross_pattern() const;

  /// Analytic values of that block in cross_pattern() order, when the model
  /// provides them.
  virtual std::optional<std::vector<double>> cross_hessian(const Vector& q) const;

  /// Simulation settings and sizes recorded in run metadata.
  virtual std::map<std::string, double> settings() const { return {}; }

  /// One row per observation with a fixed header; empty for models without
  /// data.
  virtual void write_dataset_csv(std::ostream& os) const;

 protected:
  Model(std::string name, int dim, std::vector<int> random_idx,
        std::vector<std::string> names = {});

 private:
  std::string name_;
  int dim_;
  std::vector<int> random_idx_;
  std::vector<int> fixed_idx_;
  std::vector<std::string> names_;
};

using ModelPtr = std::shared_ptr<const Model>;

/// Seed, structural sizes and true values behind a simulated dataset.
struct DatasetSpec {
  std::uint64_t seed = 0;
  std::map<std::string, int> sizes;
  std::map<std::string, double> truth;
};

/// Multivariate normal target N(mean, cov) with every parameter fixed.
class GaussianModel : public Model {
 public:
  GaussianModel(std::string name, Vector mean, Matrix covariance);

  Vector initial_point() const override;
  double log_density(const Vector& q) const override;
  double log_density_gradient(const Vector& q, Vector& grad) const override;

  const Vector& mean() const noexcept { return mean_; }
  const Matrix& covariance() const noexcept { return cov_; }
  const Matrix& precision() const noexcept { return prec_; }

 private:
  Vector mean_;
  Matrix cov_;
  Matrix prec_;
};

/// Zoo models that simulate data expose their dataset contract.
class SimulatedModel : public Model {
 public:
  const DatasetSpec& dataset() const noexcept { return dataset_; }
  std::map<std::string, double> settings() const override;

 protected:
  SimulatedModel(std::string name, int dim, std::vector<int> random_idx,
                 std::vector<std::string> names, DatasetSpec dataset)
      : Model(std::move(name), dim, std::move(random_idx), std::move(names)),
        dataset_(std::move(dataset)) {}

 private:
  DatasetSpec dataset_;
};

// -- model zoo --------------------------------------------------------------

/// N(0, [[1, rho sqrt(tau)], [rho sqrt(tau), tau]]); rho = 0 gives the
/// variance-ratio family and tau = 1 the unit-variance correlation family.
std::shared_ptr<const GaussianModel> bivariate_normal(double tau, double rho);

/// Independent normals with the given standard deviations.
std::shared_ptr<const GaussianModel> independent_normal(const Vector& sds);

/// Linear regression (intercept, slope, log_sigma) on covariates centred at
/// x_offset. Posterior correlation of intercept and slope grows with the
/// offset.
ModelPtr correlated_regression(int n, double x_offset, std::uint64_t seed = 1);

/// Non-centred eight schools: eta[8] random, (mu, log_tau) fixed.
ModelPtr eight_schools_nc();

/**
 * Poisson counts on a side x side lattice, `obs_per_site` per site, with
 * mean E exp(beta0 + u_site) and exposures E ~ U(0.5, 1.5). The latent
 * field has precision exp(log_kappa) (R + tau I) with R the 4-neighbour
 * graph Laplacian. `kappa` is the simulation truth for exp(log_kappa).
 * The registry entry scales tau with the side; this factory takes it as is.
 */
ModelPtr gmrf_poisson_lattice(int side, double kappa = 2.0, double tau = 0.25,
                              std::uint64_t seed = 1, int obs_per_site = 12);

/**
 * Negative binomial (NB2) counts with a random intercept per group,
 * fixed effects (intercept, group-level treatment, two observation
 * covariates), log dispersion and log random-effect sd.
 */
ModelPtr nb_glmm(int groups, int per_group, std::uint64_t seed = 1);

/// Neal's funnel: v ~ N(0, 3^2), x_i | v ~ N(0, exp(v)), all fixed effects.
ModelPtr funnel(int dim);

/**
 * Gaussian random-intercept regression with known variances:
 * y = X beta + u_group + e, u ~ N(0, sigma_u^2), e ~ N(0, sigma_e^2),
 * beta ~ N(0, 5^2). The posterior over (u, beta) is exactly Gaussian.
 */
class LinearGaussianModel : public SimulatedModel {
 public:
  LinearGaussianModel(int groups, int per_group, int num_covariates, double sigma_u,
                      double sigma_e, std::uint64_t seed);

  Vector initial_point() const override;
  double log_density(const Vector& q) const override;
  double log_density_gradient(const Vector& q, Vector& grad) const override;
  SparseSymMatrix hessian_uu(const Vector& q) const override;
  std::vector<std::pair<int, int>> cross_pattern() const override;
  std::optional<std::vector<double>> cross_hessian(const Vector& q) const override;
  void write_dataset_csv(std::ostream& os) const override;

  /// Exact posterior precision and mean over q = (u, beta).
  Matrix posterior_precision() const;
  Vector posterior_mean() const;

 private:
  /// Full design matrix over q (group indicator columns then covariates).
  Matrix design() const;

  int groups_;
  int num_beta_;
  double sigma_u_;
  double sigma_e_;
  std::vector<int> group_;
  Matrix x_;  // observation covariates with leading intercept column
  Vector y_;
};

std::shared_ptr<const LinearGaussianModel> linear_gaussian(int groups, int per_group,
                                                           int num_covariates = 1,
                                                           double sigma_u = 1.0,
                                                           double sigma_e = 1.0,
                                                           std::uint64_t seed = 1);

// -- registry ----------------------------------------------------------------

using ModelParams = std::map<std::string, double>;

/// Builds a zoo model from its registry name; throws ConfigError for
/// unknown names or invalid parameters.
ModelPtr make_model(const std::string& name, const ModelParams& params = {});
std::vector<std::string> model_names();

// -- checks ------------------------------------------------------------------

/// max_i |grad_i - central difference_i| at q with step h.
double check_gradient(const Model& m, const Vector& q, double h = 1e-5);

/// Dense Hessian of -log_density by central differences of the gradient.
Matrix finite_difference_hessian(const Model& m, const Vector& q, double h = 1e-5);

}  // namespace snuts

#endif  // SNUTS_MODELS_HPP
