#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "snuts/diagnostics.hpp"
#include "snuts/pipeline.hpp"

namespace snuts {
namespace {

ChainDraws ar1(int chains, int n, double phi, std::uint64_t seed, double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  ChainDraws out(chains, std::vector<double>(n));
  const double innov = std::sqrt(1.0 - phi * phi);
  for (auto& c : out) {
    double x = z(rng);
    for (int t = 0; t < n; ++t) {
      c[t] = x + shift;
      x = phi * x + innov * z(rng);
    }
  }
  return out;
}

TEST(Ess, IidNormal) {
  const double ess = bulk_ess(ar1(4, 500, 0.0, 1));
  EXPECT_GE(ess, 1600.0);
  EXPECT_LE(ess, 2400.0);
}

TEST(Ess, Ar1MatchesIntegratedAutocorrelation) {
  const double phi = 0.9;
  const double truth = 4 * 2000 * (1 - phi) / (1 + phi);
  EXPECT_NEAR(bulk_ess(ar1(4, 2000, phi, 2)) / truth, 1.0, 0.25);
  EXPECT_NEAR(ess_basic(ar1(4, 2000, phi, 3)) / truth, 1.0, 0.25);
}

TEST(Ess, ConstantChainIsNan) {
  const ChainDraws c(2, std::vector<double>(100, 3.0));
  EXPECT_TRUE(std::isnan(bulk_ess(c)));
  EXPECT_TRUE(std::isnan(ess_basic(c)));
  EXPECT_TRUE(std::isnan(split_rhat(c)));
}

TEST(Ess, InvariantUnderMonotoneTransform) {
  auto c = ar1(4, 400, 0.5, 4);
  const double a = bulk_ess(c);
  for (auto& ch : c)
    for (auto& x : ch) x = std::exp(3.0 * x);
  EXPECT_NEAR(bulk_ess(c), a, 1e-9 * a);
}

TEST(Rhat, IidChainsNearOne) { EXPECT_LT(split_rhat(ar1(4, 1000, 0.0, 5)), 1.01); }

TEST(Rhat, SeparatedChainsLarge) {
  auto a = ar1(2, 1000, 0.0, 6);
  const auto b = ar1(2, 1000, 0.0, 7, 5.0);
  a.insert(a.end(), b.begin(), b.end());
  EXPECT_GT(split_rhat(a), 2.0);
}

TEST(Rhat, SingleChainUsesSplitHalves) {
  std::vector<double> c(1000);
  for (int i = 0; i < 1000; ++i) c[i] = i < 500 ? 0.01 * (i % 7) : 5.0 + 0.01 * (i % 7);
  EXPECT_GT(split_rhat(ChainDraws{c}), 2.0);
}

TEST(Wasserstein, Examples) {
  const std::vector<double> a{1, 2, 3};
  EXPECT_DOUBLE_EQ(wasserstein1d(a, a), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein1d(std::vector<double>{0}, std::vector<double>{5}), 5.0);
  EXPECT_DOUBLE_EQ(wasserstein1d(std::vector<double>{0, 1}, std::vector<double>{1, 2}), 1.0);
  EXPECT_THROW(wasserstein1d(std::vector<double>{}, a), std::invalid_argument);
}

TEST(Wasserstein, UnequalSizes) {
  // Mass 1/2 at 0 and 1/2 at 2 against a point at 1.
  EXPECT_DOUBLE_EQ(wasserstein1d(std::vector<double>{0, 2}, std::vector<double>{1}), 1.0);
}

TEST(Wasserstein, MetricAxioms) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(30 + rep), b(17), c(44);
    for (auto& x : a) x = z(rng);
    for (auto& x : b) x = 2.0 * z(rng) + 1.0;
    for (auto& x : c) x = z(rng) - 0.5;
    const double ab = wasserstein1d(a, b), ba = wasserstein1d(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(wasserstein1d(a, c), ab + wasserstein1d(b, c) + 1e-12);
    // Shifting one sample moves the distance by at most the shift.
    std::vector<double> shifted = a;
    for (auto& x : shifted) x += 0.3;
    EXPECT_NEAR(wasserstein1d(a, shifted), 0.3, 1e-12);
  }
}

TEST(Wasserstein, ColumnsSummary) {
  Matrix a = Matrix::Zero(4, 2), b = Matrix::Zero(3, 2);
  b.col(1).setConstant(2.0);
  const auto w = wasserstein_columns(a, b);
  ASSERT_EQ(w.per_dim.size(), 2u);
  EXPECT_DOUBLE_EQ(w.per_dim[1], 2.0);
  EXPECT_DOUBLE_EQ(w.mean, 1.0);
  EXPECT_DOUBLE_EQ(w.max, 2.0);
}

TEST(Summary, MinEssIsColumnMinimum) {
  const std::vector<ChainDraws> cols{ar1(4, 500, 0.0, 10), ar1(4, 500, 0.8, 11), ar1(4, 500, 0.3, 12)};
  const auto t = summarize({"a", "b", "lp__"}, cols, 2.0, 7.0, 1);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[2].name, "lp__");
  double expected = bulk_ess(cols[0]);
  for (const auto& c : cols) expected = std::min(expected, bulk_ess(c));
  EXPECT_DOUBLE_EQ(t.min_ess, expected);
  EXPECT_EQ(t.min_ess_name, "b");
  EXPECT_DOUBLE_EQ(t.efficiency, t.min_ess / 2.0);
}

TEST(Summary, SlowLpDeterminesMinEss) {
  const std::vector<ChainDraws> cols{ar1(4, 500, 0.0, 13), ar1(4, 500, 0.95, 14)};
  const auto t = summarize({"a", "lp__"}, cols, 1.0, 3.0, 0);
  EXPECT_EQ(t.min_ess_name, "lp__");
}

TEST(Summary, ConstantColumnFlagged) {
  const std::vector<ChainDraws> cols{ChainDraws(2, std::vector<double>(50, 1.0)), ar1(2, 50, 0.0, 15)};
  const auto t = summarize({"a", "lp__"}, cols, 1.0, 3.0, 0);
  EXPECT_TRUE(t.has_nan_ess);
}

}  // namespace
}  // namespace snuts
