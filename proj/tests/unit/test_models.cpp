#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "snuts/error.hpp"
#include "snuts/models.hpp"

namespace snuts {
namespace {

Vector random_point(int dim, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Vector q(dim);
  for (int i = 0; i < dim; ++i) q[i] = n(rng);
  return q;
}

Matrix dense_uu(const Model& m, const Matrix& h) {
  const int n = m.num_random();
  Matrix out(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) out(a, b) = h(m.random_idx()[a], m.random_idx()[b]);
  return out;
}

TEST(Models, RegistryBuildsEveryModel) {
  for (const auto& name : model_names()) {
    ModelParams p;
    if (name == "gmrf_poisson_lattice") p["side"] = 4;
    const auto m = make_model(name, p);
    ASSERT_TRUE(m) << name;
    EXPECT_EQ(static_cast<int>(m->parameter_names().size()), m->dim());
    EXPECT_EQ(m->num_random() + m->num_fixed(), m->dim());
    EXPECT_TRUE(std::isfinite(m->log_density(m->initial_point()))) << name;
  }
}

TEST(Models, RegistryRejectsUnknownAndInvalid) {
  EXPECT_THROW(make_model("no_such_model"), ConfigError);
  EXPECT_THROW(make_model("gmrf_poisson_lattice", {{"side", 0}}), ConfigError);
}

TEST(Models, IndexSetsPartition) {
  const auto m = make_model("nb_glmm", {{"groups", 7}});
  std::vector<int> seen(m->dim(), 0);
  for (int i : m->random_idx()) ++seen[i];
  for (int i : m->fixed_idx()) ++seen[i];
  for (int c : seen) EXPECT_EQ(c, 1);
}

struct GradientCase {
  std::string name;
  ModelParams params;
  double tol;
};

class GradientCheck : public ::testing::TestWithParam<GradientCase> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifference) {
  const auto& c = GetParam();
  const auto m = make_model(c.name, c.params);
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const Vector q = m->initial_point() + random_point(m->dim(), s, 0.3);
    Vector g;
    const double lp = m->log_density_gradient(q, g);
    EXPECT_DOUBLE_EQ(lp, m->log_density(q));
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    EXPECT_LT(check_gradient(*m, q) / scale, c.tol) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Zoo, GradientCheck,
    ::testing::Values(GradientCase{"bivariate_normal", {{"rho", 0.5}}, 1e-6},
                      GradientCase{"iid_normal", {{"dim", 5}}, 1e-6},
                      GradientCase{"correlated_regression", {{"x_offset", 0.0}}, 1e-5},
                      GradientCase{"eight_schools_nc", {}, 1e-5},
                      GradientCase{"gmrf_poisson_lattice", {{"side", 4}}, 1e-5},
                      GradientCase{"nb_glmm", {{"groups", 6}}, 1e-5},
                      GradientCase{"funnel", {{"dim", 5}}, 1e-5},
                      GradientCase{"linear_gaussian", {}, 1e-5}),
    [](const auto& info) { return info.param.name; });

TEST(Models, BivariateGradientAtRandomPoints) {
  const auto m = bivariate_normal(1.0, 0.5);
  for (std::uint64_t s = 0; s < 10; ++s) EXPECT_LT(check_gradient(*m, random_point(2, s, 2.0)), 1e-6);
}

TEST(Models, SchoolsGradientAtReferenceInit) {
  const auto m = eight_schools_nc();
  Vector q = Vector::Ones(10);
  q[8] = 0.0;
  q[9] = 1.0;
  EXPECT_LT(check_gradient(*m, q), 1e-5);
}

TEST(Models, CentralDifferenceIsSecondOrder) {
  // A cubic term makes the central-difference error exactly proportional to h^2.
  class Cubic final : public Model {
   public:
    Cubic() : Model("cubic", 1, {}) {}
    Vector initial_point() const override { return Vector::Zero(1); }
    double log_density(const Vector& q) const override { return -std::pow(q[0], 3); }
    double log_density_gradient(const Vector& q, Vector& g) const override {
      g = Vector::Constant(1, -3.0 * q[0] * q[0]);
      return log_density(q);
    }
  } m;
  const Vector q = Vector::Constant(1, 0.7);
  const double e1 = check_gradient(m, q, 1e-2);
  const double e2 = check_gradient(m, q, 5e-3);
  EXPECT_NEAR(e1 / e2, 4.0, 0.05);
}

TEST(Models, HessianUUMatchesFiniteDifference) {
  for (const auto& [name, params] : std::vector<std::pair<std::string, ModelParams>>{
           {"eight_schools_nc", {}},
           {"gmrf_poisson_lattice", {{"side", 4}}},
           {"nb_glmm", {{"groups", 6}}},
           {"linear_gaussian", {}}}) {
    const auto m = make_model(name, params);
    const Vector q = m->initial_point() + random_point(m->dim(), 3, 0.2);
    const Matrix fd = dense_uu(*m, finite_difference_hessian(*m, q));
    const Matrix h = m->hessian_uu(q).to_dense();
    EXPECT_LT((h - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()), 1e-5)
        << name;
  }
}

TEST(Models, CrossHessianMatchesFiniteDifference) {
  for (const auto& [name, params] : std::vector<std::pair<std::string, ModelParams>>{
           {"eight_schools_nc", {}}, {"nb_glmm", {{"groups", 5}}}, {"linear_gaussian", {}}}) {
    const auto m = make_model(name, params);
    const Vector q = m->initial_point() + random_point(m->dim(), 4, 0.2);
    const auto vals = m->cross_hessian(q);
    if (!vals) continue;
    const Matrix fd = finite_difference_hessian(*m, q);
    const auto pattern = m->cross_pattern();
    ASSERT_EQ(pattern.size(), vals->size());
    for (std::size_t k = 0; k < pattern.size(); ++k) {
      const auto [a, b] = pattern[k];
      EXPECT_NEAR((*vals)[k], fd(m->random_idx()[a], m->fixed_idx()[b]), 1e-5) << name;
    }
  }
}

TEST(Models, HessianPatternIndependentOfPoint) {
  const auto m = make_model("gmrf_poisson_lattice", {{"side", 5}});
  const auto a = m->hessian_uu(m->initial_point());
  const auto b = m->hessian_uu(random_point(m->dim(), 9, 1.0));
  EXPECT_TRUE(a.same_pattern(b));
}

TEST(Models, GmrfLatticePatternCount) {
  const auto m = gmrf_poisson_lattice(3);
  EXPECT_EQ(m->dim(), 11);
  EXPECT_EQ(m->num_random(), 9);
  // 9 diagonal entries plus 12 lattice edges.
  EXPECT_EQ(m->hessian_uu(m->initial_point()).nnz(), 21);
}

TEST(Models, GmrfScoreAtZeroField) {
  const auto m = std::dynamic_pointer_cast<const SimulatedModel>(gmrf_poisson_lattice(3, 2.0, 0.25, 7, 4));
  ASSERT_TRUE(m);
  std::stringstream ss;
  m->write_dataset_csv(ss);
  std::string header;
  std::getline(ss, header);
  ASSERT_EQ(header, "site,row,col,log_exposure,count");
  // Accumulate sum_k (y - E) per site from the dataset file.
  Vector score = Vector::Zero(9);
  std::string line;
  while (std::getline(ss, line)) {
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> f;
    while (std::getline(ls, cell, ',')) f.push_back(std::stod(cell));
    ASSERT_EQ(f.size(), 5u);
    score[static_cast<int>(f[0])] += f[4] - std::exp(f[3]);
  }
  // The prior term vanishes at u = 0, so the u-gradient is the likelihood score.
  const Vector g = m->gradient(Vector::Zero(11));
  // The file rounds log exposures to 6 significant digits.
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(g[i], score[i], 1e-4);
}

TEST(Models, SchoolsHessianIsDiagonal) {
  const auto m = eight_schools_nc();
  const auto h = m->hessian_uu(m->initial_point());
  EXPECT_EQ(h.nnz(), 8);
}

TEST(Models, NbGlmmHessianIsDiagonal) {
  const auto m = nb_glmm(23, 10);
  EXPECT_EQ(m->hessian_uu(m->initial_point()).nnz(), 23);
}

TEST(Models, FunnelGradientAtOrigin) {
  const int d = 10;
  const auto m = funnel(d);
  const Vector g = m->gradient(Vector::Zero(d));
  EXPECT_NEAR(g[0], -(d - 1) / 2.0, 1e-12);
  for (int i = 1; i < d; ++i) EXPECT_EQ(g[i], 0.0);
  EXPECT_EQ(m->num_random(), 0);
}

TEST(Models, CorrelatedRegressionCorrelation) {
  for (const auto& [offset, low] : {std::pair{0.0, true}, std::pair{2000.0, false}}) {
    const auto m = correlated_regression(100, offset);
    const Vector q = Vector::Zero(3);
    const Matrix h = finite_difference_hessian(*m, q, 1e-4).topLeftCorner(2, 2);
    const Matrix s = h.inverse();
    const double corr = std::abs(s(0, 1)) / std::sqrt(s(0, 0) * s(1, 1));
    if (low)
      EXPECT_LT(corr, 0.3);
    else
      EXPECT_GT(corr, 0.999);
  }
}

TEST(Models, SimulationIsDeterministic) {
  for (const char* name : {"nb_glmm", "gmrf_poisson_lattice", "correlated_regression", "linear_gaussian"}) {
    ModelParams p{{"seed", 42}};
    if (std::string(name) == "gmrf_poisson_lattice") p["side"] = 4;
    const auto a = make_model(name, p);
    const auto b = make_model(name, p);
    const Vector q = random_point(a->dim(), 1, 0.3);
    EXPECT_EQ(a->log_density(q), b->log_density(q)) << name;
    std::stringstream sa, sb;
    a->write_dataset_csv(sa);
    b->write_dataset_csv(sb);
    EXPECT_EQ(sa.str(), sb.str());
    p["seed"] = 43;
    EXPECT_NE(make_model(name, p)->log_density(q), a->log_density(q)) << name;
  }
}

TEST(Models, LinearGaussianPosteriorIsExact) {
  const auto m = linear_gaussian(5, 8, 2);
  const Vector mean = m->posterior_mean();
  const Matrix prec = m->posterior_precision();
  EXPECT_LT(m->gradient(mean).cwiseAbs().maxCoeff(), 1e-9);
  const Vector q = random_point(m->dim(), 2, 1.0);
  EXPECT_LT((m->gradient(q) + prec * (q - mean)).cwiseAbs().maxCoeff(), 1e-9);
}

}  // namespace
}  // namespace snuts
