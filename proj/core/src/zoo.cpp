#include <boost/math/special_functions/digamma.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "snuts/error.hpp"
#include "snuts/models.hpp"

namespace snuts {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double normal_lpdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - kHalfLog2Pi;
}

std::vector<int> iota_vector(int begin, int end) {
  std::vector<int> v;
  for (int i = begin; i < end; ++i) v.push_back(i);
  return v;
}

// ---------------------------------------------------------------------------

class CorrelatedRegression final : public SimulatedModel {
 public:
  CorrelatedRegression(int n, double x_offset, std::uint64_t seed)
      : SimulatedModel("correlated_regression", 3, {}, {"intercept", "slope", "log_sigma"},
                       DatasetSpec{seed, {{"n", n}},
                                   {{"intercept", 1.0}, {"slope", 0.01}, {"sigma", 0.5},
                                    {"x_offset", x_offset}, {"x_sd", 10.0}}}),
        x_(n),
        y_(n) {
    std::mt19937_64 rng(seed);
    boost::random::normal_distribution<double> norm;
    for (int i = 0; i < n; ++i) {
      x_[i] = x_offset + 10.0 * norm(rng);
      y_[i] = 1.0 + 0.01 * x_[i] + 0.5 * norm(rng);
    }
  }

  Vector initial_point() const override { return Vector::Zero(3); }

  double log_density(const Vector& q) const override {
    Vector g(3);
    return log_density_gradient(q, g);
  }

  double log_density_gradient(const Vector& q, Vector& grad) const override {
    const double a = q[0], b = q[1], s = q[2];
    const double inv_var = std::exp(-2.0 * s);
    double ss = 0.0, sr = 0.0, srx = 0.0;
    for (Eigen::Index i = 0; i < x_.size(); ++i) {
      const double r = y_[i] - a - b * x_[i];
      ss += r * r;
      sr += r;
      srx += r * x_[i];
    }
    const double n = static_cast<double>(x_.size());
    grad.resize(3);
    grad[0] = sr * inv_var - a / 25.0;
    grad[1] = srx * inv_var - b / 25.0;
    grad[2] = -n + ss * inv_var - s / 4.0;
    return -0.5 * ss * inv_var - n * s - n * kHalfLog2Pi + normal_lpdf(a, 0, 5) +
           normal_lpdf(b, 0, 5) + normal_lpdf(s, 0, 2);
  }

  void write_dataset_csv(std::ostream& os) const override {
    os << "x,y\n";
    os.precision(17);
    for (Eigen::Index i = 0; i < x_.size(); ++i) os << x_[i] << ',' << y_[i] << '\n';
  }

 private:
  Vector x_;
  Vector y_;
};

// ---------------------------------------------------------------------------

class EightSchoolsNC final : public Model {
 public:
  EightSchoolsNC()
      : Model("eight_schools_nc", 10, iota_vector(0, 8),
              {"eta[1]", "eta[2]", "eta[3]", "eta[4]", "eta[5]", "eta[6]", "eta[7]", "eta[8]",
               "mu", "log_tau"}) {}

  static constexpr double y[8] = {28, 8, -3, 7, -1, 1, 18, 12};
  static constexpr double sigma[8] = {15, 10, 16, 11, 9, 11, 10, 18};

  Vector initial_point() const override {
    Vector q = Vector::Ones(10);
    q[8] = 0.0;
    q[9] = 1.0;
    return q;
  }

  double log_density(const Vector& q) const override {
    Vector g(10);
    return log_density_gradient(q, g);
  }

  double log_density_gradient(const Vector& q, Vector& grad) const override {
    const double mu = q[8];
    const double tau = std::exp(q[9]);
    double lp = q[9];
    grad.resize(10);
    grad[8] = 0.0;
    grad[9] = 1.0;
    for (int i = 0; i < 8; ++i) {
      const double eta = q[i];
      const double r = y[i] - mu - tau * eta;
      const double iv = 1.0 / (sigma[i] * sigma[i]);
      lp += normal_lpdf(eta, 0.0, 1.0) + normal_lpdf(y[i], mu + tau * eta, sigma[i]);
      grad[i] = -eta + tau * r * iv;
      grad[8] += r * iv;
      grad[9] += r * tau * eta * iv;
    }
    return lp;
  }

  SparseSymMatrix hessian_uu(const Vector& q) const override {
    const double tau = std::exp(q[9]);
    std::vector<Triplet> t;
    for (int i = 0; i < 8; ++i) t.push_back({i, i, 1.0 + tau * tau / (sigma[i] * sigma[i])});
    return SparseSymMatrix::from_triplets(8, t);
  }

  std::vector<std::pair<int, int>> cross_pattern() const override { return Model::cross_pattern(); }

  std::optional<std::vector<double>> cross_hessian(const Vector& q) const override {
    // Pattern order: all eta for mu, then all eta for log_tau.
    const double mu = q[8];
    const double tau = std::exp(q[9]);
    std::vector<double> v(16);
    for (int i = 0; i < 8; ++i) {
      const double iv = 1.0 / (sigma[i] * sigma[i]);
      const double r = y[i] - mu - tau * q[i];
      v[i] = tau * iv;
      v[8 + i] = -tau * (r - tau * q[i]) * iv;
    }
    return v;
  }

  void write_dataset_csv(std::ostream& os) const override {
    os << "school,y,sigma\n";
    for (int i = 0; i < 8; ++i) os << i + 1 << ',' << y[i] << ',' << sigma[i] << '\n';
  }
};

// ---------------------------------------------------------------------------

class GmrfPoissonLattice final : public SimulatedModel {
 public:
  GmrfPoissonLattice(int side, double kappa, double tau, std::uint64_t seed, int obs_per_site)
      : SimulatedModel("gmrf_poisson_lattice", side * side + 2, iota_vector(0, side * side),
                       make_names(side),
                       DatasetSpec{seed,
                                   {{"side", side}, {"obs_per_site", obs_per_site}},
                                   {{"beta0", 0.5}, {"kappa", kappa}, {"tau", tau}}}),
        side_(side),
        sites_(side * side),
        tau_(tau) {
    // Structure R + tau I for the lattice, lower triangle.
    std::vector<Triplet> t;
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const int s = r * side + c;
        int deg = 0;
        if (r > 0) ++deg;
        if (r + 1 < side) {
          ++deg;
          t.push_back({s + side, s, -1.0});
        }
        if (c > 0) ++deg;
        if (c + 1 < side) {
          ++deg;
          t.push_back({s + 1, s, -1.0});
        }
        t.push_back({s, s, deg + tau});
      }
    }
    structure_ = SparseSymMatrix::from_triplets(sites_, t);

    std::mt19937_64 rng(seed);
    boost::random::normal_distribution<double> norm;
    Vector z(sites_);
    for (int i = 0; i < sites_; ++i) z[i] = norm(rng);
    const CholeskyFactor f = factorize(structure_, amd_order(structure_));
    u_true_ = f.perm().apply_transpose(f.solve_upper(z)) / std::sqrt(kappa);

    boost::random::uniform_real_distribution<double> unif(0.5, 1.5);
    const double beta0 = 0.5;
    for (int s = 0; s < sites_; ++s) {
      for (int k = 0; k < obs_per_site; ++k) {
        const double exposure = unif(rng);
        const double mean = exposure * std::exp(beta0 + u_true_[s]);
        boost::random::poisson_distribution<int, double> pois(mean);
        site_.push_back(s);
        log_exposure_.push_back(std::log(exposure));
        count_.push_back(pois(rng));
        log_factorial_sum_ += std::lgamma(count_.back() + 1.0);
      }
    }
    site_count_.assign(static_cast<std::size_t>(sites_), 0.0);
    for (std::size_t k = 0; k < count_.size(); ++k) site_count_[site_[k]] += count_[k];
  }

  static std::vector<std::string> make_names(int side) {
    std::vector<std::string> names;
    for (int s = 0; s < side * side; ++s) names.push_back("u[" + std::to_string(s + 1) + "]");
    names.emplace_back("beta0");
    names.emplace_back("log_kappa");
    return names;
  }

  Vector initial_point() const override { return Vector::Zero(dim()); }

  double log_density(const Vector& q) const override {
    Vector g(dim());
    return log_density_gradient(q, g);
  }

  double log_density_gradient(const Vector& q, Vector& grad) const override {
    const double beta0 = q[sites_];
    const double log_kappa = q[sites_ + 1];
    const double kappa = std::exp(log_kappa);
    const auto u = q.head(sites_);
    grad.resize(dim());

    // Poisson likelihood.
    double lp = -log_factorial_sum_;
    for (int s = 0; s < sites_; ++s) grad[s] = site_count_[s];
    double gb = 0.0;
    for (std::size_t k = 0; k < count_.size(); ++k) {
      const int s = site_[k];
      const double eta = log_exposure_[k] + beta0 + u[s];
      const double mu = std::exp(eta);
      lp += count_[k] * eta - mu;
      grad[s] -= mu;
      gb += count_[k] - mu;
    }
    // Field prior, stencil applied directly.
    double quad = 0.0;
    for (int r = 0; r < side_; ++r) {
      for (int c = 0; c < side_; ++c) {
        const int s = r * side_ + c;
        double ru = tau_ * u[s];
        if (r > 0) ru += u[s] - u[s - side_];
        if (r + 1 < side_) ru += u[s] - u[s + side_];
        if (c > 0) ru += u[s] - u[s - 1];
        if (c + 1 < side_) ru += u[s] - u[s + 1];
        quad += u[s] * ru;
        grad[s] -= kappa * ru;
      }
    }
    lp += 0.5 * sites_ * log_kappa - 0.5 * kappa * quad;
    lp += normal_lpdf(beta0, 0.0, 5.0) + normal_lpdf(log_kappa, 0.0, 2.0);
    grad[sites_] = gb - beta0 / 25.0;
    grad[sites_ + 1] = 0.5 * sites_ - 0.5 * kappa * quad - log_kappa / 4.0;
    return lp;
  }

  SparseSymMatrix hessian_uu(const Vector& q) const override {
    const double kappa = std::exp(q[sites_ + 1]);
    const Vector w = site_rates(q);
    auto t = structure_.triplets();
    for (auto& e : t) {
      e.value *= kappa;
      if (e.row == e.col) e.value += w[e.row];
    }
    return SparseSymMatrix::from_triplets(sites_, t);
  }

  std::vector<std::pair<int, int>> cross_pattern() const override { return Model::cross_pattern(); }

  std::optional<std::vector<double>> cross_hessian(const Vector& q) const override {
    const double kappa = std::exp(q[sites_ + 1]);
    const Vector w = site_rates(q);
    const Vector ru = structure_.multiply(q.head(sites_));
    std::vector<double> v(2 * static_cast<std::size_t>(sites_));
    for (int s = 0; s < sites_; ++s) {
      v[s] = w[s];
      v[sites_ + s] = kappa * ru[s];
    }
    return v;
  }

  void write_dataset_csv(std::ostream& os) const override {
    os << "site,row,col,log_exposure,count\n";
    os.precision(17);
    for (std::size_t k = 0; k < count_.size(); ++k) {
      const int s = site_[k];
      os << s << ',' << s / side_ << ',' << s % side_ << ',' << log_exposure_[k] << ','
         << count_[k] << '\n';
    }
  }

 private:
  // Sum of Poisson means per site.
  Vector site_rates(const Vector& q) const {
    const double beta0 = q[sites_];
    Vector w = Vector::Zero(sites_);
    for (std::size_t k = 0; k < count_.size(); ++k)
      w[site_[k]] += std::exp(log_exposure_[k] + beta0 + q[site_[k]]);
    return w;
  }

  int side_;
  int sites_;
  double tau_;
  SparseSymMatrix structure_;
  Vector u_true_;
  std::vector<int> site_;
  std::vector<double> log_exposure_;
  std::vector<int> count_;
  std::vector<double> site_count_;
  double log_factorial_sum_ = 0.0;
};

// ---------------------------------------------------------------------------

class NbGlmm final : public SimulatedModel {
 public:
  static constexpr int kBeta = 4;  // intercept, treatment, x1, x2
  NbGlmm(int groups, int per_group, std::uint64_t seed)
      : SimulatedModel("nb_glmm", groups + kBeta + 2, iota_vector(0, groups), make_names(groups),
                       DatasetSpec{seed,
                                   {{"groups", groups}, {"per_group", per_group}},
                                   {{"beta0", 1.0}, {"beta_trt", -0.8}, {"beta_x1", 0.5},
                                    {"beta_x2", -0.3}, {"phi", 2.0}, {"sigma_u", 0.8}}}),
        groups_(groups) {
    std::mt19937_64 rng(seed);
    boost::random::normal_distribution<double> norm;
    const double beta[kBeta] = {1.0, -0.8, 0.5, -0.3};
    const double phi = 2.0;
    const double sigma_u = 0.8;
    std::vector<double> u(static_cast<std::size_t>(groups));
    for (int j = 0; j < groups; ++j) u[j] = sigma_u * norm(rng);
    for (int j = 0; j < groups; ++j) {
      for (int k = 0; k < per_group; ++k) {
        Obs o;
        o.group = j;
        o.x[0] = 1.0;
        o.x[1] = static_cast<double>(j % 2);
        o.x[2] = norm(rng);
        o.x[3] = norm(rng);
        double eta = u[j];
        for (int b = 0; b < kBeta; ++b) eta += beta[b] * o.x[b];
        boost::random::gamma_distribution<double> gam(phi, std::exp(eta) / phi);
        boost::random::poisson_distribution<int, double> pois(std::max(gam(rng), 1e-12));
        o.y = pois(rng);
        o.lgamma_y1 = std::lgamma(o.y + 1.0);
        obs_.push_back(o);
      }
    }
  }

  static std::vector<std::string> make_names(int groups) {
    std::vector<std::string> names;
    for (int j = 0; j < groups; ++j) names.push_back("u[" + std::to_string(j + 1) + "]");
    for (const char* s : {"beta0", "beta_trt", "beta_x1", "beta_x2", "log_phi", "log_sigma_u"})
      names.emplace_back(s);
    return names;
  }

  Vector initial_point() const override { return Vector::Zero(dim()); }

  double log_density(const Vector& q) const override {
    Vector g(dim());
    return log_density_gradient(q, g);
  }

  double log_density_gradient(const Vector& q, Vector& grad) const override {
    const int b0 = groups_;
    const double log_phi = q[b0 + kBeta];
    const double log_sigma = q[b0 + kBeta + 1];
    const double phi = std::exp(log_phi);
    const double inv_var = std::exp(-2.0 * log_sigma);
    const double lgamma_phi = std::lgamma(phi);
    const double digamma_phi = boost::math::digamma(phi);

    grad.setZero(dim());
    double lp = 0.0;
    double g_phi = 0.0;
    for (const auto& o : obs_) {
      double eta = q[o.group];
      for (int b = 0; b < kBeta; ++b) eta += q[b0 + b] * o.x[b];
      const double mu = std::exp(eta);
      const double log_phi_mu = std::log(phi + mu);
      const double y = o.y;
      lp += std::lgamma(y + phi) - lgamma_phi - o.lgamma_y1 + phi * (log_phi - log_phi_mu) +
            y * (eta - log_phi_mu);
      const double d_eta = y - (y + phi) * mu / (phi + mu);
      grad[o.group] += d_eta;
      for (int b = 0; b < kBeta; ++b) grad[b0 + b] += d_eta * o.x[b];
      g_phi += boost::math::digamma(y + phi) - digamma_phi + log_phi + 1.0 - log_phi_mu -
               (phi + y) / (phi + mu);
    }
    double sum_u2 = 0.0;
    for (int j = 0; j < groups_; ++j) {
      sum_u2 += q[j] * q[j];
      grad[j] -= q[j] * inv_var;
    }
    lp += -0.5 * sum_u2 * inv_var - groups_ * (log_sigma + kHalfLog2Pi);
    grad[b0 + kBeta] = phi * g_phi - log_phi / 4.0;
    grad[b0 + kBeta + 1] = sum_u2 * inv_var - groups_ - log_sigma / 4.0;
    for (int b = 0; b < kBeta; ++b) {
      lp += normal_lpdf(q[b0 + b], 0.0, 5.0);
      grad[b0 + b] -= q[b0 + b] / 25.0;
    }
    lp += normal_lpdf(log_phi, 0.0, 2.0) + normal_lpdf(log_sigma, 0.0, 2.0);
    return lp;
  }

  SparseSymMatrix hessian_uu(const Vector& q) const override {
    const double inv_var = std::exp(-2.0 * q[groups_ + kBeta + 1]);
    std::vector<double> diag(static_cast<std::size_t>(groups_), inv_var);
    const double phi = std::exp(q[groups_ + kBeta]);
    for (const auto& o : obs_) {
      const double mu = std::exp(linear_predictor(q, o));
      const double d = phi + mu;
      diag[o.group] += (o.y + phi) * phi * mu / (d * d);
    }
    std::vector<Triplet> t;
    for (int j = 0; j < groups_; ++j) t.push_back({j, j, diag[j]});
    return SparseSymMatrix::from_triplets(groups_, t);
  }

  // Columns: beta0, beta_trt (treated groups only), beta_x1, beta_x2,
  // log_phi, log_sigma_u.
  std::vector<std::pair<int, int>> cross_pattern() const override {
    std::vector<std::pair<int, int>> p;
    for (int t = 0; t < kBeta + 2; ++t)
      for (int j = 0; j < groups_; ++j)
        if (t != 1 || j % 2 == 1) p.emplace_back(j, t);
    return p;
  }

  std::optional<std::vector<double>> cross_hessian(const Vector& q) const override {
    const double phi = std::exp(q[groups_ + kBeta]);
    const double inv_var = std::exp(-2.0 * q[groups_ + kBeta + 1]);
    Matrix block = Matrix::Zero(groups_, kBeta + 2);
    for (const auto& o : obs_) {
      const double mu = std::exp(linear_predictor(q, o));
      const double d = phi + mu;
      const double w = (o.y + phi) * phi * mu / (d * d);
      for (int b = 0; b < kBeta; ++b) block(o.group, b) += w * o.x[b];
      block(o.group, kBeta) += phi * mu * (mu - o.y) / (d * d);
    }
    for (int j = 0; j < groups_; ++j) block(j, kBeta + 1) = -2.0 * q[j] * inv_var;
    std::vector<double> v;
    for (const auto& [j, t] : cross_pattern()) v.push_back(block(j, t));
    return v;
  }

  void write_dataset_csv(std::ostream& os) const override {
    os << "group,treatment,x1,x2,count\n";
    os.precision(17);
    for (const auto& o : obs_)
      os << o.group << ',' << o.x[1] << ',' << o.x[2] << ',' << o.x[3] << ',' << o.y << '\n';
  }

 private:
  struct Obs {
    int group = 0;
    double x[kBeta] = {};
    int y = 0;
    double lgamma_y1 = 0.0;
  };

  double linear_predictor(const Vector& q, const Obs& o) const {
    double eta = q[o.group];
    for (int b = 0; b < kBeta; ++b) eta += q[groups_ + b] * o.x[b];
    return eta;
  }

  int groups_;
  std::vector<Obs> obs_;
};

// ---------------------------------------------------------------------------

class Funnel final : public Model {
 public:
  explicit Funnel(int dim) : Model("funnel", dim, {}, make_names(dim)) {}

  static std::vector<std::string> make_names(int dim) {
    std::vector<std::string> names{"v"};
    for (int i = 1; i < dim; ++i) names.push_back("x[" + std::to_string(i) + "]");
    return names;
  }

  Vector initial_point() const override { return Vector::Zero(dim()); }

  double log_density(const Vector& q) const override {
    Vector g(dim());
    return log_density_gradient(q, g);
  }

  double log_density_gradient(const Vector& q, Vector& grad) const override {
    const double v = q[0];
    const double prec = std::exp(-v);
    const double k = dim() - 1.0;
    const double sx2 = q.tail(dim() - 1).squaredNorm();
    grad.resize(dim());
    grad[0] = -v / 9.0 - 0.5 * k + 0.5 * prec * sx2;
    grad.tail(dim() - 1) = -prec * q.tail(dim() - 1);
    return -v * v / 18.0 - 0.5 * k * v - 0.5 * prec * sx2;
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// LinearGaussianModel

namespace {
std::vector<std::string> linear_gaussian_names(int groups, int num_beta) {
  std::vector<std::string> names;
  for (int j = 0; j < groups; ++j) names.push_back("u[" + std::to_string(j + 1) + "]");
  for (int b = 0; b < num_beta; ++b) names.push_back("beta[" + std::to_string(b) + "]");
  return names;
}
}  // namespace

LinearGaussianModel::LinearGaussianModel(int groups, int per_group, int num_covariates,
                                         double sigma_u, double sigma_e, std::uint64_t seed)
    : SimulatedModel("linear_gaussian", groups + num_covariates + 1, iota_vector(0, groups),
                     linear_gaussian_names(groups, num_covariates + 1),
                     DatasetSpec{seed,
                                 {{"groups", groups},
                                  {"per_group", per_group},
                                  {"covariates", num_covariates}},
                                 {{"sigma_u", sigma_u}, {"sigma_e", sigma_e}}}),
      groups_(groups),
      num_beta_(num_covariates + 1),
      sigma_u_(sigma_u),
      sigma_e_(sigma_e) {
  if (groups < 1 || per_group < 1 || num_covariates < 0)
    throw ConfigError("linear_gaussian: invalid sizes");
  std::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> norm;
  const int n = groups * per_group;
  x_.resize(n, num_beta_);
  y_.resize(n);
  Vector u(groups);
  for (int j = 0; j < groups; ++j) u[j] = sigma_u * norm(rng);
  for (int i = 0; i < n; ++i) {
    const int j = i / per_group;
    group_.push_back(j);
    x_(i, 0) = 1.0;
    double mean = 1.0 + u[j];
    for (int b = 1; b < num_beta_; ++b) {
      x_(i, b) = norm(rng);
      mean += (b % 2 == 1 ? 0.5 : -0.5) * x_(i, b);
    }
    y_[i] = mean + sigma_e * norm(rng);
  }
}

Vector LinearGaussianModel::initial_point() const { return Vector::Zero(dim()); }

double LinearGaussianModel::log_density(const Vector& q) const {
  Vector g(dim());
  return log_density_gradient(q, g);
}

double LinearGaussianModel::log_density_gradient(const Vector& q, Vector& grad) const {
  const auto beta = q.tail(num_beta_);
  const Vector r = y_ - x_ * beta - Vector::NullaryExpr(y_.size(), [&](Eigen::Index i) {
                     return q[group_[i]];
                   });
  const double iv = 1.0 / (sigma_e_ * sigma_e_);
  grad.setZero(dim());
  for (Eigen::Index i = 0; i < r.size(); ++i) grad[group_[i]] += r[i] * iv;
  grad.head(groups_) -= q.head(groups_) / (sigma_u_ * sigma_u_);
  grad.tail(num_beta_) = x_.transpose() * r * iv - beta / 25.0;
  return -0.5 * r.squaredNorm() * iv - 0.5 * q.head(groups_).squaredNorm() / (sigma_u_ * sigma_u_) -
         0.5 * beta.squaredNorm() / 25.0;
}

SparseSymMatrix LinearGaussianModel::hessian_uu(const Vector&) const {
  std::vector<double> diag(static_cast<std::size_t>(groups_), 1.0 / (sigma_u_ * sigma_u_));
  for (const int j : group_) diag[j] += 1.0 / (sigma_e_ * sigma_e_);
  std::vector<Triplet> t;
  for (int j = 0; j < groups_; ++j) t.push_back({j, j, diag[j]});
  return SparseSymMatrix::from_triplets(groups_, t);
}

std::vector<std::pair<int, int>> LinearGaussianModel::cross_pattern() const {
  return Model::cross_pattern();
}

std::optional<std::vector<double>> LinearGaussianModel::cross_hessian(const Vector&) const {
  Matrix block = Matrix::Zero(groups_, num_beta_);
  for (Eigen::Index i = 0; i < y_.size(); ++i) block.row(group_[i]) += x_.row(i);
  block /= sigma_e_ * sigma_e_;
  std::vector<double> v;
  for (const auto& [j, t] : cross_pattern()) v.push_back(block(j, t));
  return v;
}

Matrix LinearGaussianModel::design() const {
  Matrix d = Matrix::Zero(y_.size(), dim());
  for (Eigen::Index i = 0; i < y_.size(); ++i) d(i, group_[i]) = 1.0;
  d.rightCols(num_beta_) = x_;
  return d;
}

Matrix LinearGaussianModel::posterior_precision() const {
  const Matrix d = design();
  Matrix p = d.transpose() * d / (sigma_e_ * sigma_e_);
  for (int j = 0; j < groups_; ++j) p(j, j) += 1.0 / (sigma_u_ * sigma_u_);
  for (int b = 0; b < num_beta_; ++b) p(groups_ + b, groups_ + b) += 1.0 / 25.0;
  return p;
}

Vector LinearGaussianModel::posterior_mean() const {
  const Vector rhs = design().transpose() * y_ / (sigma_e_ * sigma_e_);
  return posterior_precision().ldlt().solve(rhs);
}

void LinearGaussianModel::write_dataset_csv(std::ostream& os) const {
  os << "group";
  for (int b = 1; b < num_beta_; ++b) os << ",x" << b;
  os << ",y\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    os << group_[i];
    for (int b = 1; b < num_beta_; ++b) os << ',' << x_(i, b);
    os << ',' << y_[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Factories and registry

ModelPtr correlated_regression(int n, double x_offset, std::uint64_t seed) {
  if (n < 3) throw ConfigError("correlated_regression: n must be >= 3");
  return std::make_shared<CorrelatedRegression>(n, x_offset, seed);
}

ModelPtr eight_schools_nc() { return std::make_shared<EightSchoolsNC>(); }

ModelPtr gmrf_poisson_lattice(int side, double kappa, double tau, std::uint64_t seed,
                              int obs_per_site) {
  if (side < 3) throw ConfigError("gmrf_poisson_lattice: side must be >= 3");
  if (!(kappa > 0.0) || !(tau > 0.0)) throw ConfigError("gmrf_poisson_lattice: kappa, tau > 0");
  if (obs_per_site < 1) throw ConfigError("gmrf_poisson_lattice: obs_per_site must be >= 1");
  return std::make_shared<GmrfPoissonLattice>(side, kappa, tau, seed, obs_per_site);
}

ModelPtr nb_glmm(int groups, int per_group, std::uint64_t seed) {
  if (groups < 2 || per_group < 1) throw ConfigError("nb_glmm: groups >= 2 and per_group >= 1");
  return std::make_shared<NbGlmm>(groups, per_group, seed);
}

ModelPtr funnel(int dim) {
  if (dim < 2) throw ConfigError("funnel: dim must be >= 2");
  return std::make_shared<Funnel>(dim);
}

std::shared_ptr<const LinearGaussianModel> linear_gaussian(int groups, int per_group,
                                                           int num_covariates, double sigma_u,
                                                           double sigma_e, std::uint64_t seed) {
  return std::make_shared<LinearGaussianModel>(groups, per_group, num_covariates, sigma_u,
                                               sigma_e, seed);
}

namespace {

double param(const ModelParams& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

int int_param(const ModelParams& p, const std::string& key, int fallback) {
  const double v = param(p, key, fallback);
  if (v != std::floor(v)) throw ConfigError("model parameter '" + key + "' must be an integer");
  return static_cast<int>(v);
}

}  // namespace

std::vector<std::string> model_names() {
  return {"bivariate_normal", "iid_normal",   "correlated_regression", "eight_schools_nc",
          "gmrf_poisson_lattice", "nb_glmm", "funnel",                "linear_gaussian"};
}

ModelPtr make_model(const std::string& name, const ModelParams& p) {
  const auto seed = static_cast<std::uint64_t>(int_param(p, "seed", 1));
  if (name == "bivariate_normal") return bivariate_normal(param(p, "tau", 1.0), param(p, "rho", 0.0));
  if (name == "iid_normal") {
    const int d = int_param(p, "dim", 10);
    if (d < 1) throw ConfigError("iid_normal: dim must be >= 1");
    return independent_normal(Vector::Constant(d, param(p, "sd", 1.0)));
  }
  if (name == "correlated_regression")
    return correlated_regression(int_param(p, "n", 100), param(p, "x_offset", 2000.0), seed);
  if (name == "eight_schools_nc") return eight_schools_nc();
  if (name == "gmrf_poisson_lattice") {
    // nugget_side > 0 reads tau as the nugget at that side and shrinks it as
    // 1/side^2, the h^2 scaling of a lattice refined over a fixed domain.
    const int side = int_param(p, "side", 16);
    const double ref = param(p, "nugget_side", 8.0);
    if (ref < 0.0) throw ConfigError("gmrf_poisson_lattice: nugget_side must be >= 0");
    const double tau = param(p, "tau", 1.0) * (ref > 0.0 ? (ref / side) * (ref / side) : 1.0);
    return gmrf_poisson_lattice(side, param(p, "kappa", 2.0), tau, seed,
                                int_param(p, "obs_per_site", 12));
  }
  if (name == "nb_glmm") return nb_glmm(int_param(p, "groups", 23), int_param(p, "per_group", 10), seed);
  if (name == "funnel") return funnel(int_param(p, "dim", 10));
  if (name == "linear_gaussian")
    return linear_gaussian(int_param(p, "groups", 8), int_param(p, "per_group", 5),
                           int_param(p, "covariates", 1), param(p, "sigma_u", 1.0),
                           param(p, "sigma_e", 1.0), seed);
  throw ConfigError("unknown model '" + name + "'");
}

}  // namespace snuts
