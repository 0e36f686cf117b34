#include <gtest/gtest.h>

#include <cmath>

#include "snuts/error.hpp"
#include "snuts/laplace.hpp"
#include "snuts/models.hpp"
#include "snuts/pipeline.hpp"

namespace snuts {
namespace {

PosteriorApprox approx_from(const Matrix& q, const Vector& mean) {
  PosteriorApprox a;
  a.q_hat = mean;
  a.theta_hat = mean;
  a.Q = SparseSymMatrix::from_dense(q);
  a.factor = factorize(a.Q, amd_order(a.Q));
  return a;
}

// Schur complement of the random-effect block: the precision of the exact
// marginal posterior over beta.
Matrix marginal_precision(const LinearGaussianModel& m) {
  const Matrix p = m.posterior_precision();
  const int n = m.num_random();
  const int k = m.num_fixed();
  return p.bottomRightCorner(k, k) -
         p.bottomLeftCorner(k, n) * p.topLeftCorner(n, n).ldlt().solve(p.topRightCorner(n, k));
}

struct LgCase {
  int groups, per_group, covariates;
  double sigma_u, sigma_e;
};

class LinearGaussianExact : public ::testing::TestWithParam<LgCase> {};

TEST_P(LinearGaussianExact, ModeAndPrecisionMatchClosedForm) {
  const auto c = GetParam();
  const auto m = linear_gaussian(c.groups, c.per_group, c.covariates, c.sigma_u, c.sigma_e, 3);
  const auto a = laplace_approximate(m);
  EXPECT_TRUE(a.converged);
  EXPECT_FALSE(a.jittered);
  EXPECT_LT((a.q_hat - m->posterior_mean()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((a.Q.to_dense() - m->posterior_precision()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((a.marginal_hessian - marginal_precision(*m)).cwiseAbs().maxCoeff(), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Configs, LinearGaussianExact,
                         ::testing::Values(LgCase{5, 4, 1, 1.0, 1.0}, LgCase{20, 3, 2, 0.5, 2.0},
                                           LgCase{50, 6, 3, 2.0, 0.7}));

TEST(InnerNewton, LinearGaussianConvergesInOneStep) {
  const auto m = linear_gaussian(8, 5, 2);
  MarginalObjective mo(m);
  for (double start : {-3.0, 0.0, 10.0}) {
    int it = 0;
    const Vector theta = Vector::Constant(m->num_fixed(), 0.3);
    const Vector u = mo.inner_newton(theta, Vector::Constant(m->num_random(), start), &it);
    EXPECT_LE(it, 2);
    EXPECT_LT(m->gradient(mo.join(u, theta)).head(m->num_random()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(InnerNewton, SchoolsConjugateMode) {
  const double y[8] = {28, 8, -3, 7, -1, 1, 18, 12};
  const double s[8] = {15, 10, 16, 11, 9, 11, 10, 18};
  const auto m = eight_schools_nc();
  MarginalObjective mo(m);
  const Vector u = mo.inner_newton(Vector::Zero(2), Vector::Zero(8));
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(u[i], y[i] / (s[i] * s[i] + 1.0), 1e-9);
}

TEST(MarginalObjective, LinearGaussianDifferencesAreExact) {
  const auto m = linear_gaussian(10, 4, 2, 1.3, 0.8, 5);
  MarginalObjective mo(m);
  const Matrix s = marginal_precision(*m);
  const Vector mb = m->posterior_mean().tail(m->num_fixed());
  auto analytic = [&](const Vector& t) { return 0.5 * (t - mb).dot(s * (t - mb)); };
  Vector warm = Vector::Zero(m->num_random());
  const Vector t0 = Vector::Zero(m->num_fixed());
  const double f0 = mo.value(t0, warm);
  for (double shift : {0.1, -0.7, 2.0}) {
    const Vector t1 = Vector::LinSpaced(m->num_fixed(), shift, 2 * shift);
    EXPECT_NEAR(mo.value(t1, warm) - f0, analytic(t1) - analytic(t0), 1e-8);
  }
}

TEST(MarginalObjective, NoRandomEffectsReducesToDensity) {
  const auto m = bivariate_normal(2.0, 0.4);
  MarginalObjective mo(m);
  Vector warm(0);
  const Vector t = Vector::LinSpaced(2, -0.3, 0.8);
  EXPECT_DOUBLE_EQ(mo.value(t, warm), -m->log_density(t));
}

TEST(OuterOptimize, BivariateModeIsOrigin) {
  const auto a = laplace_approximate(bivariate_normal(1.0, 0.9));
  EXPECT_TRUE(a.converged);
  EXPECT_LT(a.theta_hat.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(OuterOptimize, LinearGaussianMatchesClosedForm) {
  const auto m = linear_gaussian(12, 5, 2, 1.0, 1.0, 9);
  const auto a = laplace_approximate(m);
  EXPECT_LT((a.theta_hat - m->posterior_mean().tail(m->num_fixed())).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(OuterOptimize, StronglyCorrelatedRegressionConverges) {
  const auto a = laplace_approximate(correlated_regression(100, 2000.0));
  EXPECT_TRUE(a.converged);
}

TEST(OuterOptimize, FunnelHasNoInteriorMode) {
  EXPECT_THROW(laplace_approximate(funnel(10)), Error);
}

TEST(AssembleQ, SchoolsMatchesFiniteDifferenceBlocks) {
  const auto m = eight_schools_nc();
  const auto a = laplace_approximate(m);
  const Matrix fd = finite_difference_hessian(*m, a.q_hat, 1e-5);
  const Matrix q = a.Q.to_dense();
  EXPECT_LT((q.topLeftCorner(8, 8) - fd.topLeftCorner(8, 8)).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LT((q.bottomLeftCorner(2, 8) - fd.bottomLeftCorner(2, 8)).cwiseAbs().maxCoeff(), 1e-4);
  // The theta block carries the Laplace correction: its Schur complement is
  // the marginal Hessian, not the joint one.
  const Matrix schur = q.bottomRightCorner(2, 2) -
                       q.bottomLeftCorner(2, 8) * q.topLeftCorner(8, 8).inverse() * q.topRightCorner(8, 2);
  EXPECT_LT((schur - a.marginal_hessian).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(AssembleQ, SchoolsSparsity) {
  const auto a = laplace_approximate(eight_schools_nc());
  EXPECT_NEAR(sparsity_percent(a.Q), 62.2, 0.05);
}

TEST(AssembleQ, NoRandomEffectsIsMarginalHessian) {
  const auto a = laplace_approximate(bivariate_normal(1.0, 0.8));
  EXPECT_LT((a.Q.to_dense() - a.marginal_hessian).cwiseAbs().maxCoeff(), 1e-12);
  Matrix prec(2, 2);
  prec << 1, -0.8, -0.8, 1;
  prec /= 0.36;
  EXPECT_LT((a.Q.to_dense() - prec).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(PrecisionSample, IdentityMoments) {
  const int n = 10000;
  const Matrix d = precision_sample(approx_from(Matrix::Identity(3, 3), Vector::Zero(3)), n, 1);
  for (int j = 0; j < 3; ++j) EXPECT_LT(std::abs(d.col(j).mean()), 3.0 / std::sqrt(n));
}

TEST(PrecisionSample, DiagonalScale) {
  const Matrix d = precision_sample(approx_from(4.0 * Matrix::Identity(2, 2), Vector::Ones(2)), 10000, 2);
  for (int j = 0; j < 2; ++j) {
    const double sd = std::sqrt((d.col(j).array() - d.col(j).mean()).square().sum() / (d.rows() - 1));
    EXPECT_NEAR(sd, 0.5, 0.025);
    EXPECT_NEAR(d.col(j).mean(), 1.0, 0.02);
  }
}

TEST(PrecisionSample, BivariateCorrelation) {
  Matrix s(2, 2);
  s << 1, 0.8, 0.8, 1;
  const Matrix d = precision_sample(approx_from(s.inverse(), Vector::Zero(2)), 10000, 3);
  const Matrix c = d.rowwise() - d.colwise().mean();
  const Matrix cov = c.transpose() * c / (d.rows() - 1);
  EXPECT_NEAR(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)), 0.8, 0.02);
}

TEST(PrecisionSample, SameSeedSameDraws) {
  const auto a = approx_from(Matrix::Identity(4, 4) * 2.0, Vector::Zero(4));
  EXPECT_EQ(precision_sample(a, 50, 7), precision_sample(a, 50, 7));
}

TEST(DeltaMethod, UnitVectorGivesMarginalSd) {
  Matrix s(3, 3);
  s << 2, 0.5, 0.1, 0.5, 1, -0.3, 0.1, -0.3, 0.5;
  const auto a = approx_from(s.inverse(), Vector::Zero(3));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(delta_method(a, Vector::Unit(3, i)), std::sqrt(s(i, i)), 1e-12);
  const Vector j = Vector::LinSpaced(3, 1.0, -2.0);
  EXPECT_NEAR(delta_method(a, j), std::sqrt(j.dot(s * j)), 1e-12);
}

TEST(DeltaMethod, SchoolsDerivedQuantity) {
  // gq = exp(log_tau) * (eta[2] + eta[3] + eta[4])
  const auto m = eight_schools_nc();
  const auto a = laplace_approximate(m);
  const double tau = std::exp(a.q_hat[9]);
  Vector j = Vector::Zero(10);
  j.segment(1, 3).setConstant(tau);
  j[9] = tau * a.q_hat.segment(1, 3).sum();
  const double sd_delta = delta_method(a, j);

  NutsConfig cfg;
  cfg.iterations = 2500;
  cfg.seed = 17;
  const auto run = sample_snuts(m, Mode::Diag, cfg);
  std::vector<double> gq;
  for (const auto& c : run.chains)
    for (Eigen::Index i = 0; i < c.draws.rows(); ++i)
      gq.push_back(std::exp(c.draws(i, 9)) * c.draws.row(i).segment(1, 3).sum());
  const Eigen::Map<const Vector> g(gq.data(), static_cast<Eigen::Index>(gq.size()));
  const double sd_nuts = std::sqrt((g.array() - g.mean()).square().sum() / (g.size() - 1));
  EXPECT_NEAR(sd_delta / sd_nuts, 1.0, 0.15);
}

TEST(MarginalModel, LinearGaussianMatchesExactMarginal) {
  const auto m = linear_gaussian(10, 4, 2, 1.0, 1.0, 2);
  const auto a = laplace_approximate(m);
  const auto mm = marginal_model(m, a);
  EXPECT_EQ(mm->dim(), m->num_fixed());
  EXPECT_EQ(mm->num_random(), 0);
  const Matrix s = marginal_precision(*m);
  const Vector mb = m->posterior_mean().tail(m->num_fixed());
  const Vector t = mb + Vector::LinSpaced(mb.size(), 0.2, -0.4);
  EXPECT_NEAR(mm->log_density(mb) - mm->log_density(t), 0.5 * (t - mb).dot(s * (t - mb)), 1e-8);
  Vector g;
  mm->log_density_gradient(t, g);
  EXPECT_LT((g + s * (t - mb)).cwiseAbs().maxCoeff(), 1e-5);

  const auto ma = marginal_approx(a);
  EXPECT_LT((ma.Q.to_dense() - s).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MarginalModel, RejectsModelWithoutRandomEffects) {
  const auto m = bivariate_normal(1.0, 0.3);
  EXPECT_THROW(marginal_model(m, laplace_approximate(m)), ConfigError);
}

TEST(MarginalModel, SchoolsElaMuNearFullPosterior) {
  const auto m = eight_schools_nc();
  NutsConfig cfg;
  cfg.iterations = 1500;
  cfg.seed = 4;
  const auto full = sample_snuts(m, Mode::Diag, cfg);
  const auto ela = sample_snuts(m, Mode::ElaSnuts, cfg);
  ASSERT_EQ(ela.dim(), 2);
  auto mean_of = [](const RunResult& r, int col) {
    double s = 0.0;
    long n = 0;
    for (const auto& c : r.chains) {
      s += c.draws.col(col).sum();
      n += c.draws.rows();
    }
    return s / static_cast<double>(n);
  };
  EXPECT_NEAR(mean_of(ela, 0), mean_of(full, 8), 0.5);
}

}  // namespace
}  // namespace snuts
