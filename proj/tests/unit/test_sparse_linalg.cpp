#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "snuts/error.hpp"
#include "snuts/models.hpp"
#include "snuts/sparse_linalg.hpp"

namespace snuts {
namespace {

SparseSymMatrix arrow(int n) {
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) t.push_back({i, i, static_cast<double>(n + 1)});
  for (int i = 1; i < n; ++i) t.push_back({i, 0, 1.0});
  return SparseSymMatrix::from_triplets(n, t);
}

SparseSymMatrix lattice(int side) {
  const int n = side * side;
  std::vector<Triplet> t;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const int i = r * side + c;
      t.push_back({i, i, 4.5});
      if (c + 1 < side) t.push_back({i + 1, i, -1.0});
      if (r + 1 < side) t.push_back({i + side, i, -1.0});
    }
  }
  return SparseSymMatrix::from_triplets(n, t);
}

// Random SPD with roughly `density` of the strict lower triangle filled,
// made diagonally dominant.
Matrix random_spd(int n, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), coin(0.0, 1.0);
  Matrix a = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = j + 1; i < n; ++i)
      if (coin(rng) < density) a(i, j) = a(j, i) = u(rng);
  for (int i = 0; i < n; ++i) a(i, i) = a.row(i).cwiseAbs().sum() + 0.5 + coin(rng);
  return a;
}

// Column-pattern elimination written directly from the graph definition.
long natural_fill_oracle(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<std::set<int>> adj(n);
  for (int j = 0; j < n; ++j)
    for (int i = j + 1; i < n; ++i)
      if (a(i, j) != 0.0) {
        adj[i].insert(j);
        adj[j].insert(i);
      }
  long nnz = 0;
  for (int k = 0; k < n; ++k) {
    std::vector<int> later;
    for (int v : adj[k])
      if (v > k) later.push_back(v);
    nnz += 1 + static_cast<long>(later.size());
    for (int x : later)
      for (int y : later)
        if (x != y) adj[x].insert(y);
  }
  return nnz;
}

TEST(SparseSymMatrix, TripletsMirrorAndSumDuplicates) {
  const std::vector<Triplet> t{{0, 1, 2.0}, {1, 0, 1.0}, {0, 0, 4.0}, {1, 1, 3.0}};
  const auto a = SparseSymMatrix::from_triplets(2, t);
  EXPECT_EQ(a.nnz(), 3);
  EXPECT_DOUBLE_EQ(a.coeff(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(a.coeff(0, 1), 3.0);
}

TEST(SparseSymMatrix, MissingDiagonalIsStructural) {
  const std::vector<Triplet> t{{1, 0, 1.0}};
  const auto a = SparseSymMatrix::from_triplets(3, t);
  EXPECT_EQ(a.nnz(), 4);
  EXPECT_DOUBLE_EQ(a.coeff(2, 2), 0.0);
}

TEST(SparseSymMatrix, RejectsUpperTriangleInput) {
  EXPECT_THROW(SparseSymMatrix(2, {0, 2, 3}, {0, 1, 0}, {1.0, 0.5, 1.0}), std::invalid_argument);
}

TEST(SparseSymMatrix, MultiplyMatchesDense) {
  std::mt19937_64 rng(3);
  const Matrix d = random_spd(30, 0.2, rng);
  const auto a = SparseSymMatrix::from_dense(d);
  const Vector x = Vector::LinSpaced(30, -1.0, 2.0);
  EXPECT_LT((a.multiply(x) - d * x).norm(), 1e-12);
  EXPECT_LT((a.to_dense() - d).norm(), 1e-14);
}

TEST(SparseSymMatrix, SparsityPercent) {
  Matrix dense = Matrix::Constant(4, 4, 0.1);
  dense.diagonal().setOnes();
  EXPECT_DOUBLE_EQ(sparsity_percent(SparseSymMatrix::from_dense(dense)), 0.0);
  EXPECT_DOUBLE_EQ(sparsity_percent(SparseSymMatrix::identity(10)), 100.0);
}

TEST(Permutation, ForwardInverseRoundTrip) {
  const Permutation p({2, 0, 3, 1});
  for (int k = 0; k < 4; ++k) EXPECT_EQ(p.inverse()[p.forward()[k]], k);
  const Vector x = Vector::LinSpaced(4, 1.0, 4.0);
  EXPECT_EQ(p.apply_transpose(p.apply(x)), x);
  EXPECT_DOUBLE_EQ(p.apply(x)[0], 3.0);
}

TEST(Permutation, RejectsNonBijection) {
  EXPECT_THROW(Permutation({0, 0, 1}), std::invalid_argument);
}

TEST(Ordering, DiagonalHasNoFill) {
  const auto a = SparseSymMatrix::identity(12);
  const auto p = amd_order(a);
  EXPECT_EQ(symbolic_nnz(a, p), 12);
  EXPECT_EQ(factorize(a, p).fill(), 0);
}

TEST(Ordering, ArrowPlacesHubLast) {
  const auto a = arrow(5);
  const auto p = amd_order(a);
  EXPECT_EQ(p.forward()[4], 0);
  EXPECT_EQ(symbolic_nnz(a, p), 9);
  EXPECT_EQ(symbolic_nnz(a, Permutation::identity(5)), 15);
  EXPECT_EQ(natural_fill_oracle(a.to_dense()), 15);
}

TEST(Ordering, ArrowFillIsLinear) {
  for (int n : {3, 10, 57, 200}) {
    const auto a = arrow(n);
    EXPECT_EQ(factorize(a, amd_order(a)).nnz(), 2 * n - 1) << n;
    EXPECT_EQ(symbolic_nnz(a, Permutation::identity(n)), static_cast<long>(n) * (n + 1) / 2);
  }
}

TEST(Ordering, LatticeHalvesFill) {
  // Off-diagonal entries of L; counting the diagonal too the ratio is 0.52.
  const auto a = lattice(16);
  const long n = a.dim();
  const long natural = symbolic_nnz(a, Permutation::identity(a.dim()));
  EXPECT_EQ(natural, natural_fill_oracle(a.to_dense()));
  const long ordered = symbolic_nnz(a, amd_order(a));
  EXPECT_LE(ordered - n, (natural - n) / 2);
  EXPECT_LT(static_cast<double>(ordered) / natural, 0.55);
}

TEST(Ordering, NeverWorseThanNatural) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = SparseSymMatrix::from_dense(random_spd(40, 0.05 * (rep % 5), rng));
    EXPECT_LE(symbolic_nnz(a, amd_order(a)), symbolic_nnz(a, Permutation::identity(40)));
  }
}

TEST(Cholesky, TwoByTwoExample) {
  Matrix d(2, 2);
  d << 4, 2, 2, 3;
  const auto f = factorize(SparseSymMatrix::from_dense(d), Permutation::identity(2));
  const Matrix l = f.to_dense_lower();
  EXPECT_NEAR(l(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(l(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(l(1, 1), 1.41421356, 1e-8);
  EXPECT_DOUBLE_EQ(l(0, 1), 0.0);
  EXPECT_NEAR(f.log_determinant(), std::log(8.0), 1e-14);
}

TEST(Cholesky, IdentityFactor) {
  const auto f = factorize(SparseSymMatrix::identity(6), Permutation::identity(6));
  EXPECT_EQ(f.fill(), 0);
  EXPECT_EQ(f.to_dense_lower(), Matrix::Identity(6, 6));
}

TEST(Cholesky, IndefiniteThrows) {
  Matrix d(2, 2);
  d << 1, 2, 2, 1;
  EXPECT_THROW(factorize(SparseSymMatrix::from_dense(d), Permutation::identity(2)),
               NotPositiveDefinite);
}

TEST(Cholesky, JitterRescuesSemidefinite) {
  Matrix d(2, 2);
  d << 1, 1, 1, 1;
  const auto j = factorize_with_jitter(SparseSymMatrix::from_dense(d), Permutation::identity(2));
  EXPECT_GT(j.jitter, 0.0);
  EXPECT_LE(j.jitter, 1e-4);
}

TEST(Cholesky, RandomReconstructionAndSolves) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 120);
  std::uniform_real_distribution<double> dens(0.0, 1.0);
  for (int rep = 0; rep < 60; ++rep) {
    const int n = dim(rng);
    const Matrix d = random_spd(n, dens(rng), rng);
    const auto a = SparseSymMatrix::from_dense(d);
    const auto p = amd_order(a);
    const auto f = factorize(a, p);
    const Matrix l = f.to_dense_lower();
    ASSERT_TRUE(l.isLowerTriangular());
    EXPECT_GT(l.diagonal().minCoeff(), 0.0);
    Matrix perm = Matrix::Zero(n, n);
    for (int k = 0; k < n; ++k) perm(k, p.forward()[k]) = 1.0;
    const Matrix papt = perm * d * perm.transpose();
    EXPECT_LT((l * l.transpose() - papt).norm() / papt.norm(), 1e-10);

    const Vector b = Vector::LinSpaced(n, -2.0, 3.0);
    const Vector x = d.llt().solve(b);
    EXPECT_LT((f.solve(b) - x).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((f.multiply_lower(f.solve_lower(b)) - b).norm(), 1e-10);
    EXPECT_LT((f.multiply_upper(f.solve_upper(b)) - b).norm(), 1e-10);
  }
}

TEST(Cholesky, TriangularSolveExamples) {
  const auto id = factorize(SparseSymMatrix::identity(2), Permutation::identity(2));
  EXPECT_EQ(id.solve_lower(Vector::Map(std::vector<double>{3.0, -1.0}.data(), 2)),
            Vector::Map(std::vector<double>{3.0, -1.0}.data(), 2));
  Matrix d(2, 2);
  d << 4, 2, 2, 3;
  const auto f = factorize(SparseSymMatrix::from_dense(d), Permutation::identity(2));
  Vector b(2);
  b << 2.0, 1.0 + std::sqrt(2.0);
  const Vector x = f.solve_lower(b);
  EXPECT_NEAR(x[0], 1.0, 1e-15);
  EXPECT_NEAR(x[1], 1.0, 1e-15);
}

TEST(Cholesky, DimensionMismatchThrows) {
  const auto f = factorize(SparseSymMatrix::identity(3), Permutation::identity(3));
  EXPECT_THROW(f.solve(Vector::Ones(4)), DimensionMismatch);
}

TEST(Cholesky, SymbolicReuseMatchesFreshFactor) {
  const auto a = lattice(6);
  const auto sym = analyze(a, amd_order(a));
  const auto b = a.add_diagonal(0.7);
  ASSERT_TRUE(a.same_pattern(b));
  const auto f1 = factorize(sym, b);
  const auto f2 = factorize(b, sym.perm);
  EXPECT_EQ(f1.nnz(), sym.l_nnz());
  EXPECT_LT((f1.to_dense_lower() - f2.to_dense_lower()).norm(), 1e-14);
}

TEST(PrecisionToCov, Examples) {
  EXPECT_EQ(precision_to_cov(SparseSymMatrix::identity(3)), Matrix::Identity(3, 3));
  Matrix q(2, 2);
  q << 4, 0, 0, 0.25;
  const Matrix s = precision_to_cov(SparseSymMatrix::from_dense(q));
  EXPECT_NEAR(s(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(s(1, 1), 4.0, 1e-15);
  EXPECT_EQ(s(0, 1), 0.0);

  Matrix sigma(2, 2);
  sigma << 1, 0.8, 0.8, 1;
  Matrix q2(2, 2);
  q2 << 1, -0.8, -0.8, 1;
  q2 /= 1 - 0.64;
  EXPECT_LT((precision_to_cov(SparseSymMatrix::from_dense(q2)) - sigma).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(PrecisionToCov, DimensionCap) {
  EXPECT_THROW(precision_to_cov(SparseSymMatrix::identity(20), 10), DimensionTooLarge);
}

TEST(PrecisionToCov, InverseDiagonalMatchesDense) {
  std::mt19937_64 rng(5);
  const Matrix d = random_spd(50, 0.1, rng);
  const auto a = SparseSymMatrix::from_dense(d);
  const auto f = factorize(a, amd_order(a));
  EXPECT_LT((inverse_diagonal(f) - Matrix(d.inverse()).diagonal()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SparseText, RoundTrip) {
  std::mt19937_64 rng(8);
  const auto a = SparseSymMatrix::from_dense(random_spd(25, 0.15, rng));
  std::stringstream ss;
  write_sparse_text(ss, a);
  const auto b = read_sparse_text(ss);
  ASSERT_TRUE(a.same_pattern(b));
  for (int k = 0; k < a.nnz(); ++k) EXPECT_EQ(a.values()[k], b.values()[k]);
}

TEST(SparseText, RejectsMalformedHeader) {
  std::stringstream ss("%%dense 2 2\n");
  EXPECT_ANY_THROW(read_sparse_text(ss));
}

TEST(DenseCholesky, MatchesEigen) {
  std::mt19937_64 rng(9);
  const Matrix d = random_spd(12, 0.5, rng);
  const Matrix l = dense_cholesky(d);
  EXPECT_LT((l * l.transpose() - d).norm(), 1e-12);
}

}  // namespace
}  // namespace snuts
