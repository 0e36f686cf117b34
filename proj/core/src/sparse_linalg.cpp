#include "snuts/sparse_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>

#include "snuts/error.hpp"

namespace snuts {

// ---------------------------------------------------------------------------
// SparseSymMatrix

SparseSymMatrix::SparseSymMatrix(int dim, std::vector<int> col_ptr, std::vector<int> row_idx,
                                 std::vector<double> values)
    : dim_(dim),
      col_ptr_(std::move(col_ptr)),
      row_idx_(std::move(row_idx)),
      values_(std::move(values)) {
  if (dim_ < 0 || col_ptr_.size() != static_cast<std::size_t>(dim_) + 1 || col_ptr_.front() != 0)
    throw std::invalid_argument("SparseSymMatrix: column pointer length must be dim + 1");
  if (row_idx_.size() != values_.size() ||
      static_cast<std::size_t>(col_ptr_.back()) != values_.size())
    throw std::invalid_argument("SparseSymMatrix: value count must equal last column pointer");
  for (int j = 0; j < dim_; ++j) {
    const int begin = col_ptr_[j];
    const int end = col_ptr_[j + 1];
    if (end <= begin || row_idx_[begin] != j)
      throw std::invalid_argument("SparseSymMatrix: missing diagonal in column " +
                                  std::to_string(j));
    for (int p = begin + 1; p < end; ++p) {
      if (row_idx_[p] <= row_idx_[p - 1] || row_idx_[p] >= dim_)
        throw std::invalid_argument("SparseSymMatrix: row indices must increase within column " +
                                    std::to_string(j));
    }
  }
}

SparseSymMatrix SparseSymMatrix::from_triplets(int dim, std::span<const Triplet> entries) {
  if (dim < 0) throw std::invalid_argument("from_triplets: negative dimension");
  std::vector<Triplet> lower;
  lower.reserve(entries.size() + static_cast<std::size_t>(dim));
  for (const auto& t : entries) {
    if (t.row < 0 || t.col < 0 || t.row >= dim || t.col >= dim)
      throw std::out_of_range("from_triplets: index out of range");
    if (t.row >= t.col)
      lower.push_back(t);
    else
      lower.push_back({t.col, t.row, t.value});
  }
  for (int j = 0; j < dim; ++j) lower.push_back({j, j, 0.0});
  std::sort(lower.begin(), lower.end(), [](const Triplet& a, const Triplet& b) {
    return std::tie(a.col, a.row) < std::tie(b.col, b.row);
  });

  std::vector<int> col_ptr(static_cast<std::size_t>(dim) + 1, 0);
  std::vector<int> row_idx;
  std::vector<double> values;
  row_idx.reserve(lower.size());
  values.reserve(lower.size());
  for (std::size_t k = 0; k < lower.size(); ++k) {
    const auto& t = lower[k];
    if (!row_idx.empty() && k > 0 && lower[k - 1].col == t.col && lower[k - 1].row == t.row) {
      values.back() += t.value;
      continue;
    }
    row_idx.push_back(t.row);
    values.push_back(t.value);
    ++col_ptr[t.col + 1];
  }
  std::partial_sum(col_ptr.begin(), col_ptr.end(), col_ptr.begin());
  return SparseSymMatrix(dim, std::move(col_ptr), std::move(row_idx), std::move(values));
}

SparseSymMatrix SparseSymMatrix::identity(int dim) {
  std::vector<int> col_ptr(static_cast<std::size_t>(dim) + 1);
  std::iota(col_ptr.begin(), col_ptr.end(), 0);
  std::vector<int> row_idx(static_cast<std::size_t>(dim));
  std::iota(row_idx.begin(), row_idx.end(), 0);
  return SparseSymMatrix(dim, std::move(col_ptr), std::move(row_idx),
                         std::vector<double>(static_cast<std::size_t>(dim), 1.0));
}

SparseSymMatrix SparseSymMatrix::from_dense(const Matrix& a, double drop) {
  if (a.rows() != a.cols()) throw DimensionMismatch("from_dense: matrix must be square");
  const int n = static_cast<int>(a.rows());
  std::vector<Triplet> entries;
  for (int j = 0; j < n; ++j) {
    entries.push_back({j, j, a(j, j)});
    for (int i = j + 1; i < n; ++i)
      if (std::abs(a(i, j)) > drop) entries.push_back({i, j, a(i, j)});
  }
  return from_triplets(n, entries);
}

double SparseSymMatrix::coeff(int i, int j) const {
  if (i < j) std::swap(i, j);
  const auto begin = row_idx_.begin() + col_ptr_[j];
  const auto end = row_idx_.begin() + col_ptr_[j + 1];
  const auto it = std::lower_bound(begin, end, i);
  if (it == end || *it != i) return 0.0;
  return values_[static_cast<std::size_t>(it - row_idx_.begin())];
}

double SparseSymMatrix::max_abs_diagonal() const {
  double m = 0.0;
  for (int j = 0; j < dim_; ++j) m = std::max(m, std::abs(values_[col_ptr_[j]]));
  return m;
}

Vector SparseSymMatrix::diagonal() const {
  Vector d(dim_);
  for (int j = 0; j < dim_; ++j) d[j] = values_[col_ptr_[j]];
  return d;
}

Matrix SparseSymMatrix::to_dense() const {
  Matrix a = Matrix::Zero(dim_, dim_);
  for (int j = 0; j < dim_; ++j) {
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
      a(row_idx_[p], j) = values_[p];
      a(j, row_idx_[p]) = values_[p];
    }
  }
  return a;
}

std::vector<Triplet> SparseSymMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(values_.size());
  for (int j = 0; j < dim_; ++j)
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) out.push_back({row_idx_[p], j, values_[p]});
  return out;
}

Vector SparseSymMatrix::multiply(const Vector& x) const {
  if (x.size() != dim_) throw DimensionMismatch("SparseSymMatrix::multiply: size mismatch");
  Vector y = Vector::Zero(dim_);
  for (int j = 0; j < dim_; ++j) {
    const int p0 = col_ptr_[j];
    y[j] += values_[p0] * x[j];
    for (int p = p0 + 1; p < col_ptr_[j + 1]; ++p) {
      const int i = row_idx_[p];
      y[i] += values_[p] * x[j];
      y[j] += values_[p] * x[i];
    }
  }
  return y;
}

SparseSymMatrix SparseSymMatrix::add_diagonal(double tau) const {
  SparseSymMatrix out = *this;
  for (int j = 0; j < dim_; ++j) out.values_[out.col_ptr_[j]] += tau;
  return out;
}

bool SparseSymMatrix::same_pattern(const SparseSymMatrix& other) const {
  return dim_ == other.dim_ && col_ptr_ == other.col_ptr_ && row_idx_ == other.row_idx_;
}

// ---------------------------------------------------------------------------
// Permutation

Permutation::Permutation(std::vector<int> forward) : forward_(std::move(forward)) {
  const int n = static_cast<int>(forward_.size());
  inverse_.assign(forward_.size(), -1);
  for (int k = 0; k < n; ++k) {
    const int i = forward_[k];
    if (i < 0 || i >= n || inverse_[i] != -1)
      throw std::invalid_argument("Permutation: forward map is not a bijection");
    inverse_[i] = k;
  }
}

Permutation Permutation::identity(int n) {
  std::vector<int> fwd(static_cast<std::size_t>(n));
  std::iota(fwd.begin(), fwd.end(), 0);
  return Permutation(std::move(fwd));
}

bool Permutation::is_identity() const {
  for (int k = 0; k < size(); ++k)
    if (forward_[k] != k) return false;
  return true;
}

Vector Permutation::apply(const Vector& x) const {
  if (x.size() != size()) throw DimensionMismatch("Permutation::apply: size mismatch");
  Vector y(x.size());
  for (int k = 0; k < size(); ++k) y[k] = x[forward_[k]];
  return y;
}

Vector Permutation::apply_transpose(const Vector& y) const {
  if (y.size() != size()) throw DimensionMismatch("Permutation::apply_transpose: size mismatch");
  Vector x(y.size());
  for (int k = 0; k < size(); ++k) x[forward_[k]] = y[k];
  return x;
}

// ---------------------------------------------------------------------------
// Symbolic analysis

namespace {

// Nonzero pattern of row k of L, written to stack[top..n) in topological
// order. `mark[i] == k` flags nodes already visited for this row.
int ereach(const SymbolicFactor& s, int k, std::vector<int>& mark, std::vector<int>& stack) {
  const int n = s.dim;
  int top = n;
  mark[k] = k;
  for (int p = s.c_col_ptr[k]; p < s.c_col_ptr[k + 1]; ++p) {
    int i = s.c_row_idx[p];
    if (i > k) continue;
    int len = 0;
    for (; mark[i] != k; i = s.parent[i]) {
      stack[len++] = i;
      mark[i] = k;
    }
    while (len > 0) stack[--top] = stack[--len];
  }
  return top;
}

}  // namespace

SymbolicFactor analyze(const SparseSymMatrix& a, const Permutation& perm) {
  const int n = a.dim();
  if (perm.size() != n) throw DimensionMismatch("analyze: permutation size mismatch");
  SymbolicFactor s;
  s.dim = n;
  s.perm = perm;

  // Upper triangle of C = P A P^T, columns sorted by row.
  const auto pinv = perm.inverse();
  const auto acp = a.col_ptr();
  const auto ari = a.row_idx();
  std::vector<std::tuple<int, int, int>> entries;  // (col, row, source)
  entries.reserve(static_cast<std::size_t>(a.nnz()));
  for (int j = 0; j < n; ++j) {
    for (int p = acp[j]; p < acp[j + 1]; ++p) {
      const int r = pinv[ari[p]];
      const int c = pinv[j];
      entries.emplace_back(std::max(r, c), std::min(r, c), p);
    }
  }
  std::sort(entries.begin(), entries.end());
  s.c_col_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  s.c_row_idx.reserve(entries.size());
  s.c_source.reserve(entries.size());
  for (const auto& [c, r, src] : entries) {
    ++s.c_col_ptr[c + 1];
    s.c_row_idx.push_back(r);
    s.c_source.push_back(src);
  }
  std::partial_sum(s.c_col_ptr.begin(), s.c_col_ptr.end(), s.c_col_ptr.begin());

  // Elimination tree with path compression through `ancestor`.
  s.parent.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> ancestor(static_cast<std::size_t>(n), -1);
  for (int k = 0; k < n; ++k) {
    for (int p = s.c_col_ptr[k]; p < s.c_col_ptr[k + 1]; ++p) {
      int i = s.c_row_idx[p];
      while (i != -1 && i < k) {
        const int next = ancestor[i];
        ancestor[i] = k;
        if (next == -1) s.parent[i] = k;
        i = next;
      }
    }
  }

  // Column counts from the row patterns.
  s.col_counts.assign(static_cast<std::size_t>(n), 1);
  std::vector<int> mark(static_cast<std::size_t>(n), -1);
  std::vector<int> stack(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const int top = ereach(s, k, mark, stack);
    for (int t = top; t < n; ++t) ++s.col_counts[stack[t]];
  }
  s.l_col_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int j = 0; j < n; ++j) s.l_col_ptr[j + 1] = s.l_col_ptr[j] + s.col_counts[j];
  return s;
}

long symbolic_nnz(const SparseSymMatrix& a, const Permutation& perm) {
  return analyze(a, perm).l_nnz();
}

// ---------------------------------------------------------------------------
// Numeric factorization

CholeskyFactor factorize(const SymbolicFactor& s, const SparseSymMatrix& a) {
  const int n = s.dim;
  if (a.dim() != n || static_cast<int>(s.c_source.size()) != a.nnz())
    throw DimensionMismatch("factorize: matrix does not match the symbolic analysis");
  const auto av = a.values();

  std::vector<int> li(static_cast<std::size_t>(s.l_nnz()));
  std::vector<double> lx(static_cast<std::size_t>(s.l_nnz()));
  std::vector<int> next(s.l_col_ptr.begin(), s.l_col_ptr.end() - 1);
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  std::vector<int> mark(static_cast<std::size_t>(n), -1);
  std::vector<int> stack(static_cast<std::size_t>(n));

  for (int k = 0; k < n; ++k) {
    const int top = ereach(s, k, mark, stack);
    x[k] = 0.0;
    for (int p = s.c_col_ptr[k]; p < s.c_col_ptr[k + 1]; ++p) x[s.c_row_idx[p]] = av[s.c_source[p]];
    double d = x[k];
    x[k] = 0.0;
    for (int t = top; t < n; ++t) {
      const int i = stack[t];
      const double lki = x[i] / lx[s.l_col_ptr[i]];
      x[i] = 0.0;
      for (int p = s.l_col_ptr[i] + 1; p < next[i]; ++p) x[li[p]] -= lx[p] * lki;
      d -= lki * lki;
      const int p = next[i]++;
      li[p] = k;
      lx[p] = lki;
    }
    if (!(d > 0.0))
      throw NotPositiveDefinite("factorize: nonpositive pivot at column " + std::to_string(k), k);
    const int p = next[k]++;
    li[p] = k;
    lx[p] = std::sqrt(d);
  }
  return CholeskyFactor(s.perm, s.l_col_ptr, std::move(li), std::move(lx), s.input_nnz());
}

CholeskyFactor factorize(const SparseSymMatrix& a, const Permutation& perm) {
  return factorize(analyze(a, perm), a);
}

JitteredFactor factorize_with_jitter(const SymbolicFactor& symbolic, const SparseSymMatrix& a) {
  try {
    return {factorize(symbolic, a), 0.0};
  } catch (const NotPositiveDefinite&) {
  }
  const double scale = std::max(a.max_abs_diagonal(), std::numeric_limits<double>::min());
  for (const double level : {1e-8, 1e-6, 1e-4}) {
    const double tau = level * scale;
    try {
      return {factorize(symbolic, a.add_diagonal(tau)), tau};
    } catch (const NotPositiveDefinite&) {
    }
  }
  throw NotPositiveDefinite("factorize_with_jitter: matrix not positive definite after jitter");
}

JitteredFactor factorize_with_jitter(const SparseSymMatrix& a, const Permutation& perm) {
  return factorize_with_jitter(analyze(a, perm), a);
}

// ---------------------------------------------------------------------------
// CholeskyFactor

CholeskyFactor::CholeskyFactor(Permutation perm, std::vector<int> col_ptr,
                               std::vector<int> row_idx, std::vector<double> values,
                               int input_nnz)
    : perm_(std::move(perm)),
      col_ptr_(std::move(col_ptr)),
      row_idx_(std::move(row_idx)),
      values_(std::move(values)),
      input_nnz_(input_nnz) {}

void CholeskyFactor::check_dim(Eigen::Index n) const {
  if (n != dim()) throw DimensionMismatch("CholeskyFactor: vector length does not match factor");
}

Matrix CholeskyFactor::to_dense_lower() const {
  const int n = dim();
  Matrix l = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) l(row_idx_[p], j) = values_[p];
  return l;
}

double CholeskyFactor::log_determinant() const {
  double s = 0.0;
  for (int j = 0; j < dim(); ++j) s += std::log(values_[col_ptr_[j]]);
  return 2.0 * s;
}

void CholeskyFactor::solve_lower_in_place(Eigen::Ref<Vector> x) const {
  check_dim(x.size());
  const int n = dim();
  for (int j = 0; j < n; ++j) {
    const int p0 = col_ptr_[j];
    const double xj = x[j] / values_[p0];
    x[j] = xj;
    for (int p = p0 + 1; p < col_ptr_[j + 1]; ++p) x[row_idx_[p]] -= values_[p] * xj;
  }
}

void CholeskyFactor::solve_upper_in_place(Eigen::Ref<Vector> x) const {
  check_dim(x.size());
  for (int j = dim() - 1; j >= 0; --j) {
    const int p0 = col_ptr_[j];
    double xj = x[j];
    for (int p = p0 + 1; p < col_ptr_[j + 1]; ++p) xj -= values_[p] * x[row_idx_[p]];
    x[j] = xj / values_[p0];
  }
}

Vector CholeskyFactor::solve_lower(const Vector& b) const {
  Vector x = b;
  solve_lower_in_place(x);
  return x;
}

Vector CholeskyFactor::solve_upper(const Vector& b) const {
  Vector x = b;
  solve_upper_in_place(x);
  return x;
}

Vector CholeskyFactor::multiply_lower(const Vector& x) const {
  check_dim(x.size());
  Vector y = Vector::Zero(dim());
  for (int j = 0; j < dim(); ++j)
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) y[row_idx_[p]] += values_[p] * x[j];
  return y;
}

Vector CholeskyFactor::multiply_upper(const Vector& x) const {
  check_dim(x.size());
  Vector y(dim());
  for (int j = 0; j < dim(); ++j) {
    double s = 0.0;
    for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) s += values_[p] * x[row_idx_[p]];
    y[j] = s;
  }
  return y;
}

Vector CholeskyFactor::solve(const Vector& b) const {
  Vector y = perm_.apply(b);
  solve_lower_in_place(y);
  solve_upper_in_place(y);
  return perm_.apply_transpose(y);
}

// ---------------------------------------------------------------------------
// Derived quantities

double sparsity_percent(const SparseSymMatrix& a) {
  const long n = a.dim();
  if (n <= 1) return 0.0;
  const long total = n * (n - 1) / 2;
  const long stored = static_cast<long>(a.nnz()) - n;
  return 100.0 * static_cast<double>(total - stored) / static_cast<double>(total);
}

Matrix precision_to_cov(const CholeskyFactor& factor, int max_dim) {
  const int n = factor.dim();
  if (n > max_dim)
    throw DimensionTooLarge("precision_to_cov: dimension " + std::to_string(n) +
                            " exceeds dense cap " + std::to_string(max_dim));
  Matrix cov(n, n);
  Vector e = Vector::Zero(n);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    cov.col(j) = factor.solve(e);
    e[j] = 0.0;
  }
  return 0.5 * (cov + cov.transpose());
}

Matrix precision_to_cov(const SparseSymMatrix& q, int max_dim) {
  if (q.dim() > max_dim)
    throw DimensionTooLarge("precision_to_cov: dimension " + std::to_string(q.dim()) +
                            " exceeds dense cap " + std::to_string(max_dim));
  return precision_to_cov(factorize(q, amd_order(q)), max_dim);
}

Vector inverse_diagonal(const CholeskyFactor& factor) {
  // diag(A^{-1})_i = || L^{-1} P e_i ||^2
  const int n = factor.dim();
  const auto pinv = factor.perm().inverse();
  Vector out(n);
  Vector w(n);
  for (int i = 0; i < n; ++i) {
    w.setZero();
    w[pinv[i]] = 1.0;
    factor.solve_lower_in_place(w);
    out[i] = w.squaredNorm();
  }
  return out;
}

Matrix dense_cholesky(const Matrix& s) {
  if (s.rows() != s.cols()) throw DimensionMismatch("dense_cholesky: matrix must be square");
  const Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("dense_cholesky: matrix is not positive definite");
  return llt.matrixL();
}

// ---------------------------------------------------------------------------
// Text I/O

void write_sparse_text(std::ostream& os, const SparseSymMatrix& a) {
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  os << "%%sparse-sym " << a.dim() << ' ' << a.nnz() << '\n';
  for (const auto& t : a.triplets()) os << t.row << ' ' << t.col << ' ' << t.value << '\n';
  os.precision(old_precision);
}

SparseSymMatrix read_sparse_text(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_sparse_text: empty input");
  std::istringstream header(line);
  std::string tag;
  int dim = -1;
  long nnz = -1;
  header >> tag >> dim >> nnz;
  if (tag != "%%sparse-sym" || dim < 0 || nnz < 0)
    throw std::runtime_error("read_sparse_text: malformed header '" + line + "'");
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  for (long k = 0; k < nnz; ++k) {
    Triplet t{};
    if (!(is >> t.row >> t.col >> t.value))
      throw std::runtime_error("read_sparse_text: expected " + std::to_string(nnz) + " entries");
    entries.push_back(t);
  }
  return SparseSymMatrix::from_triplets(dim, entries);
}

}  // namespace snuts
