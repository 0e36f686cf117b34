#ifndef SNUTS_SPARSE_LINALG_HPP
#define SNUTS_SPARSE_LINALG_HPP

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <vector>

namespace snuts {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Triplet {
  int row;
  int col;
  double value;
};

/**
 * Symmetric matrix stored as its lower triangle (diagonal included) in
 * compressed-sparse-column form.
 *
 * Row indices inside a column are strictly increasing and never above the
 * diagonal, and every diagonal entry is structurally present (possibly a
 * numeric zero). Instances are immutable.
 */
class SparseSymMatrix {
 public:
  SparseSymMatrix() = default;

  /// Takes ownership of raw CSC arrays; throws std::invalid_argument if they
  /// violate the storage invariants.
  SparseSymMatrix(int dim, std::vector<int> col_ptr, std::vector<int> row_idx,
                  std::vector<double> values);

  /**
   * Assemble from coordinate entries. Entries above the diagonal are
   * mirrored into the lower triangle, duplicates are summed and missing
   * diagonal entries are inserted as structural zeros.
   */
  static SparseSymMatrix from_triplets(int dim, std::span<const Triplet> entries);
  static SparseSymMatrix identity(int dim);
  /// Keeps every lower-triangle entry with |a_ij| > drop, plus the diagonal.
  static SparseSymMatrix from_dense(const Matrix& a, double drop = 0.0);

  int dim() const noexcept { return dim_; }
  int nnz() const noexcept { return static_cast<int>(values_.size()); }
  std::span<const int> col_ptr() const noexcept { return col_ptr_; }
  std::span<const int> row_idx() const noexcept { return row_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Value at (i, j) in either triangle; zero when structurally absent.
  double coeff(int i, int j) const;
  double max_abs_diagonal() const;
  Vector diagonal() const;

  Matrix to_dense() const;
  std::vector<Triplet> triplets() const;
  /// y = A x using both triangles.
  Vector multiply(const Vector& x) const;
  SparseSymMatrix add_diagonal(double tau) const;
  /// Same dimension and identical structural pattern.
  bool same_pattern(const SparseSymMatrix& other) const;

 private:
  int dim_ = 0;
  std::vector<int> col_ptr_{0};
  std::vector<int> row_idx_;
  std::vector<double> values_;
};

/**
 * Symmetric permutation P with (P x)[k] = x[forward[k]], so that the
 * permuted matrix P A P^T has entry (a, b) = A(forward[a], forward[b]).
 */
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<int> forward);
  static Permutation identity(int n);

  int size() const noexcept { return static_cast<int>(forward_.size()); }
  std::span<const int> forward() const noexcept { return forward_; }
  std::span<const int> inverse() const noexcept { return inverse_; }
  bool is_identity() const;

  /// P x
  Vector apply(const Vector& x) const;
  /// P^T y
  Vector apply_transpose(const Vector& y) const;

 private:
  std::vector<int> forward_;
  std::vector<int> inverse_;
};

/// Elimination tree and L pattern sizes of P A P^T.
struct SymbolicFactor {
  int dim = 0;
  Permutation perm;
  std::vector<int> parent;
  std::vector<int> col_counts;
  std::vector<int> l_col_ptr;
  /// Upper triangle of P A P^T in CSC form, and for each of its entries the
  /// index of the source value in A.
  std::vector<int> c_col_ptr;
  std::vector<int> c_row_idx;
  std::vector<int> c_source;
  long l_nnz() const { return l_col_ptr.empty() ? 0 : l_col_ptr.back(); }
  int input_nnz() const { return c_col_ptr.empty() ? 0 : c_col_ptr.back(); }
};

SymbolicFactor analyze(const SparseSymMatrix& a, const Permutation& perm);

/// Structural nonzeros of the Cholesky factor of P A P^T, diagonal included.
long symbolic_nnz(const SparseSymMatrix& a, const Permutation& perm);

/**
 * Sparse lower-triangular factor L with L L^T = P A P^T.
 *
 * Each column stores its diagonal first followed by strictly increasing row
 * indices. The triangular solves work in permuted coordinates; solve()
 * applies the full A^{-1}.
 */
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  CholeskyFactor(Permutation perm, std::vector<int> col_ptr, std::vector<int> row_idx,
                 std::vector<double> values, int input_nnz);

  int dim() const noexcept { return perm_.size(); }
  const Permutation& perm() const noexcept { return perm_; }
  /// Structural nonzeros of L, diagonal included.
  int nnz() const noexcept { return static_cast<int>(values_.size()); }
  /// Entries of L absent from the lower triangle of P A P^T.
  int fill() const noexcept { return nnz() - input_nnz_; }
  std::span<const int> col_ptr() const noexcept { return col_ptr_; }
  std::span<const int> row_idx() const noexcept { return row_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  Matrix to_dense_lower() const;
  /// log det(A) = 2 sum log L_ii
  double log_determinant() const;

  /// x with L x = b
  Vector solve_lower(const Vector& b) const;
  /// x with L^T x = b
  Vector solve_upper(const Vector& b) const;
  void solve_lower_in_place(Eigen::Ref<Vector> x) const;
  void solve_upper_in_place(Eigen::Ref<Vector> x) const;
  /// L x
  Vector multiply_lower(const Vector& x) const;
  /// L^T x
  Vector multiply_upper(const Vector& x) const;
  /// A^{-1} b in the original ordering.
  Vector solve(const Vector& b) const;

 private:
  void check_dim(Eigen::Index n) const;

  Permutation perm_;
  std::vector<int> col_ptr_{0};
  std::vector<int> row_idx_;
  std::vector<double> values_;
  int input_nnz_ = 0;
};

/**
 * Fill-reducing ordering by approximate minimum degree on the quotient
 * graph, ties broken by the largest original index. Falls back to the
 * natural order whenever that produces strictly less fill.
 */
Permutation amd_order(const SparseSymMatrix& a);

/// Ordering produced by the minimum degree elimination alone, without the
/// comparison against the natural order.
Permutation minimum_degree_order(const SparseSymMatrix& a);

/// Up-looking simplicial Cholesky of P A P^T. Throws NotPositiveDefinite.
CholeskyFactor factorize(const SparseSymMatrix& a, const Permutation& perm);
CholeskyFactor factorize(const SymbolicFactor& symbolic, const SparseSymMatrix& a);

struct JitteredFactor {
  CholeskyFactor factor;
  /// Absolute amount added to the diagonal; zero when none was needed.
  double jitter = 0.0;
};

/**
 * Factorize A, retrying with A + tau I for tau in {1e-8, 1e-6, 1e-4} times
 * max|diag(A)| when a nonpositive pivot appears. Throws NotPositiveDefinite
 * when every level fails.
 */
JitteredFactor factorize_with_jitter(const SparseSymMatrix& a, const Permutation& perm);
JitteredFactor factorize_with_jitter(const SymbolicFactor& symbolic, const SparseSymMatrix& a);

/// Percentage of structural zeros in the strict lower triangle.
double sparsity_percent(const SparseSymMatrix& a);

inline constexpr int kDefaultDenseCap = 5000;

/// Dense Q^{-1} by column solves through a sparse factor.
Matrix precision_to_cov(const SparseSymMatrix& q, int max_dim = kDefaultDenseCap);
Matrix precision_to_cov(const CholeskyFactor& factor, int max_dim = kDefaultDenseCap);

/// diag(A^{-1}) without forming the inverse.
Vector inverse_diagonal(const CholeskyFactor& factor);

/// Dense lower Cholesky factor of a symmetric positive-definite matrix.
Matrix dense_cholesky(const Matrix& s);

/**
 * Text exchange format: a header line `%%sparse-sym dim nnz` followed by
 * one `row col value` line per stored lower-triangle entry, 0-based.
 */
void write_sparse_text(std::ostream& os, const SparseSymMatrix& a);
SparseSymMatrix read_sparse_text(std::istream& is);

}  // namespace snuts

#endif  // SNUTS_SPARSE_LINALG_HPP
