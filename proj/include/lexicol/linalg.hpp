#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lexicol/core.hpp"

// Numerical kernel shared by diffusion, expansion and the GCN: compressed-row
// sparse matrices, row-major dense matrices, conjugate gradients, Pearson
// correlation and deterministic top-k selection. All reductions run in a fixed
// sequential order so results are bitwise reproducible.

namespace lexicol {

// =============================================================================
// Dense matrix
// =============================================================================

class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("dense matrix buffer has " + std::to_string(data_.size()) +
                           " entries, expected " + std::to_string(rows_ * cols_));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// =============================================================================
// Sparse matrix (CSR)
// =============================================================================

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

class SparseMatrix {
public:
  SparseMatrix() : row_offsets_(1, 0) {}

  /// Takes ownership of CSR arrays; throws ValidationError when the layout is
  /// inconsistent (non-monotone offsets, unsorted or out-of-range columns).
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
               std::vector<std::uint32_t> col_indices, std::vector<double> values)
      : rows_(rows),
        cols_(cols),
        row_offsets_(std::move(row_offsets)),
        col_indices_(std::move(col_indices)),
        values_(std::move(values)) {
    validate_layout();
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<std::size_t> off(n + 1);
    std::iota(off.begin(), off.end(), std::size_t{0});
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::uint32_t{0});
    return SparseMatrix(n, n, std::move(off), std::move(idx), std::vector<double>(n, 1.0));
  }

  static SparseMatrix zeros(std::size_t rows, std::size_t cols) {
    return SparseMatrix(rows, cols, std::vector<std::size_t>(rows + 1, 0), {}, {});
  }

  /// Duplicate coordinates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> entries) {
    for (const auto& t : entries)
      if (t.row >= rows || t.col >= cols)
        throw DimensionError("triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                             ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> off(rows + 1, 0);
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
    idx.reserve(entries.size());
    val.reserve(entries.size());
    std::size_t last_row = rows, last_col = cols;
    for (const auto& t : entries) {
      if (t.row == last_row && t.col == last_col) {
        val.back() += t.value;
        continue;
      }
      idx.push_back(static_cast<std::uint32_t>(t.col));
      val.push_back(t.value);
      ++off[t.row + 1];
      last_row = t.row;
      last_col = t.col;
    }
    for (std::size_t r = 0; r < rows; ++r) off[r + 1] += off[r];
    return SparseMatrix(rows, cols, std::move(off), std::move(idx), std::move(val));
  }

  static SparseMatrix from_dense(const DenseMatrix& m) {
    std::vector<std::size_t> off(m.rows() + 1, 0);
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        if (m(r, c) != 0.0) {
          idx.push_back(static_cast<std::uint32_t>(c));
          val.push_back(m(r, c));
        }
      }
      off[r + 1] = idx.size();
    }
    return SparseMatrix(m.rows(), m.cols(), std::move(off), std::move(idx), std::move(val));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::uint32_t> col_indices() const noexcept { return col_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const std::uint32_t> row_indices(std::size_t r) const noexcept {
    return {col_indices_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
  }
  std::span<const double> row_values(std::size_t r) const noexcept {
    return {values_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
  }

  /// Entry lookup by binary search; absent entries are 0.
  double at(std::size_t r, std::size_t c) const noexcept {
    const auto idx = row_indices(r);
    const auto it = std::lower_bound(idx.begin(), idx.end(), static_cast<std::uint32_t>(c));
    if (it == idx.end() || *it != c) return 0.0;
    return values_[row_offsets_[r] + static_cast<std::size_t>(it - idx.begin())];
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(std::min(rows_, cols_), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(i, i);
    return d;
  }

  DenseMatrix to_dense() const {
    DenseMatrix m(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
      const auto idx = row_indices(r);
      const auto val = row_values(r);
      for (std::size_t k = 0; k < idx.size(); ++k) m(r, idx[k]) = val[k];
    }
    return m;
  }

  /// Structural and value symmetry, exact comparison.
  bool is_symmetric() const noexcept {
    if (rows_ != cols_) return false;
    for (std::size_t r = 0; r < rows_; ++r) {
      const auto idx = row_indices(r);
      const auto val = row_values(r);
      for (std::size_t k = 0; k < idx.size(); ++k)
        if (at(idx[k], r) != val[k]) return false;
    }
    return true;
  }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

private:
  void validate_layout() const {
    if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0 ||
        row_offsets_.back() != col_indices_.size() || col_indices_.size() != values_.size())
      throw ValidationError("sparse matrix: inconsistent CSR array sizes");
    for (std::size_t r = 0; r < rows_; ++r) {
      if (row_offsets_[r] > row_offsets_[r + 1])
        throw ValidationError("sparse matrix: row offsets not monotone at row " +
                              std::to_string(r));
      for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
        if (col_indices_[k] >= cols_)
          throw ValidationError("sparse matrix: column index out of range in row " +
                                std::to_string(r));
        if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1])
          throw ValidationError("sparse matrix: column indices not strictly increasing in row " +
                                std::to_string(r));
      }
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::uint32_t> col_indices_;
  std::vector<double> values_;
};

// =============================================================================
// Products
// =============================================================================

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

inline void spmv_into(const SparseMatrix& s, std::span<const double> x, std::span<double> y) {
  if (s.cols() != x.size() || s.rows() != y.size())
    throw DimensionError("spmv: matrix is " + std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()) + ", vector has " + std::to_string(x.size()) +
                         " entries");
  const auto off = s.row_offsets();
  const auto idx = s.col_indices();
  const auto val = s.values();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t k = off[r]; k < off[r + 1]; ++k) acc += val[k] * x[idx[k]];
    y[r] = acc;
  }
}

/// y = S x, summing each row in ascending column order.
inline std::vector<double> spmv(const SparseMatrix& s, std::span<const double> x) {
  std::vector<double> y(s.rows());
  spmv_into(s, x, y);
  return y;
}

/// S * B for sparse S and dense B.
inline DenseMatrix multiply(const SparseMatrix& s, const DenseMatrix& b) {
  if (s.cols() != b.rows()) throw DimensionError("sparse*dense: inner dimensions differ");
  DenseMatrix out(s.rows(), b.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto dst = out.row(r);
    const auto idx = s.row_indices(r);
    const auto val = s.row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto src = b.row(idx[k]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += val[k] * src[c];
    }
  }
  return out;
}

/// S^T * B for sparse S and dense B.
inline DenseMatrix multiply_transposed(const SparseMatrix& s, const DenseMatrix& b) {
  if (s.rows() != b.rows()) throw DimensionError("sparse^T*dense: inner dimensions differ");
  DenseMatrix out(s.cols(), b.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const auto src = b.row(r);
    const auto idx = s.row_indices(r);
    const auto val = s.row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto dst = out.row(idx[k]);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += val[k] * src[c];
    }
  }
  return out;
}

/// A * B.
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double v = a(i, p);
      if (v == 0.0) continue;
      const auto src = b.row(p);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

/// A^T * B.
inline DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_at_b: row counts differ");
  DenseMatrix out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto src = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double v = a(r, i);
      if (v == 0.0) continue;
      auto dst = out.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

/// A * B^T.
inline DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_a_bt: column counts differ");
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

// =============================================================================
// Conjugate gradients
// =============================================================================

struct CgOptions {
  double tolerance = 1e-8;           // on ||S x - b|| / ||b||
  std::size_t max_iterations = 200;  // Krylov dimension cap
  bool jacobi = false;
};

struct CgReport {
  std::size_t iterations = 0;
  double final_relative_residual = 0.0;
  bool converged = false;
};

struct CgResult {
  std::vector<double> x;
  CgReport report;
};

/// Solves S x = b for symmetric positive definite S, starting from x = 0.
///
/// Stops when the recursively updated residual satisfies the tolerance and the
/// explicitly recomputed residual confirms it, or after max_iterations. When
/// the two disagree the iteration restarts from the true residual. The
/// reported residual is always the true one, so converged implies
/// final_relative_residual <= tolerance.
inline CgResult cg_solve(const SparseMatrix& s, std::span<const double> b,
                         const CgOptions& options = {}) {
  const std::size_t n = b.size();
  if (s.rows() != s.cols() || s.rows() != n)
    throw DimensionError("cg_solve: matrix is " + std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()) + ", right-hand side has " + std::to_string(n) +
                         " entries");
  if (!(options.tolerance > 0.0)) throw ValidationError("cg_solve: tolerance must be positive");
  if (options.max_iterations < 1)
    throw ValidationError("cg_solve: max_iterations must be at least 1");
  for (double v : b)
    if (!std::isfinite(v)) throw SolverError("cg_solve: non-finite right-hand side", 0);

  CgResult result{std::vector<double>(n, 0.0), {}};
  const double b_norm = norm2(b);
  if (b_norm == 0.0) {
    result.report = {0, 0.0, true};
    return result;
  }

  std::vector<double> inv_diag;
  if (options.jacobi) {
    inv_diag = s.diagonal();
    for (std::size_t i = 0; i < n; ++i) {
      if (!(inv_diag[i] > 0.0))
        throw ValidationError("cg_solve: Jacobi preconditioner needs a positive diagonal (row " +
                              std::to_string(i) + ")");
      inv_diag[i] = 1.0 / inv_diag[i];
    }
  }
  const auto precondition = [&](std::span<const double> r, std::span<double> z) {
    if (options.jacobi)
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    else
      std::copy(r.begin(), r.end(), z.begin());
  };

  auto& x = result.x;
  std::vector<double> r(b.begin(), b.end());
  std::vector<double> z(n), p(n), q(n);
  precondition(r, z);
  p = z;
  double rz = dot(r, z);
  const double threshold = options.tolerance * b_norm;

  const auto true_residual = [&] {
    spmv_into(s, x, q);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
    return norm2(r);
  };

  std::size_t it = 0;
  bool converged = false;
  while (it < options.max_iterations) {
    ++it;
    spmv_into(s, p, q);
    const double pq = dot(p, q);
    if (!std::isfinite(pq)) throw SolverError("cg_solve: non-finite curvature", it);
    if (!(pq > 0.0)) throw SolverError("cg_solve: matrix is not positive definite", it);
    const double step = rz / pq;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += step * p[i];
      r[i] -= step * q[i];
    }
    const double r_norm = norm2(r);
    if (!std::isfinite(r_norm)) throw SolverError("cg_solve: non-finite residual", it);

    if (r_norm <= threshold) {
      if (true_residual() <= threshold) {
        converged = true;
        break;
      }
      // Recursive residual drifted; restart from the true residual.
      precondition(r, z);
      p = z;
      rz = dot(r, z);
      continue;
    }
    precondition(r, z);
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    rz = rz_next;
  }

  const double final_residual = converged ? norm2(r) : true_residual();
  result.report.iterations = it;
  result.report.final_relative_residual = final_residual / b_norm;
  result.report.converged = result.report.final_relative_residual <= options.tolerance;
  return result;
}

// =============================================================================
// Pearson correlation
// =============================================================================

struct Correlation {
  double value = 0.0;
  bool valid = false;  // false when either input has zero variance; value is 0
};

namespace detail {

struct Centered {
  std::vector<double> deviations;
  double sum_squares = 0.0;
  bool constant = true;
};

inline Centered center(std::span<const double> x) {
  Centered c;
  double sum = 0.0;
  for (double v : x) sum += v;
  const double mean = sum / static_cast<double>(x.size());
  c.deviations.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    c.deviations[i] = x[i] - mean;
    c.sum_squares += c.deviations[i] * c.deviations[i];
    if (x[i] != x[0]) c.constant = false;
  }
  return c;
}

inline Correlation correlate(std::span<const double> dx, double sxx, bool x_constant,
                             std::span<const double> dy, double syy, bool y_constant) noexcept {
  if (x_constant || y_constant || sxx == 0.0 || syy == 0.0) return {0.0, false};
  double sxy = 0.0;
  for (std::size_t i = 0; i < dx.size(); ++i) sxy += dx[i] * dy[i];
  const double rho = sxy / std::sqrt(sxx * syy);
  return {std::clamp(rho, -1.0, 1.0), true};
}

}  // namespace detail

/// Sample Pearson correlation. Zero-variance input yields {0, false}.
inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw DimensionError("pearson: lengths " + std::to_string(x.size()) + " and " +
                         std::to_string(y.size()) + " differ");
  if (x.size() < 2) throw ValidationError("pearson: need at least two observations");
  const auto cx = detail::center(x);
  const auto cy = detail::center(y);
  return detail::correlate(cx.deviations, cx.sum_squares, cx.constant, cy.deviations,
                           cy.sum_squares, cy.constant);
}

// =============================================================================
// Deterministic top-k
// =============================================================================

namespace detail {

/// Strict ordering: larger score first, NaN last, then ascending index.
inline bool ranks_before(double sa, std::size_t a, double sb, std::size_t b) noexcept {
  const bool na = std::isnan(sa), nb = std::isnan(sb);
  if (na != nb) return nb;
  if (!na && sa != sb) return sa > sb;
  return a < b;
}

}  // namespace detail

/// The k best entries of `candidates` under `score_of`, ordered by
/// (score desc, id asc). Returns all candidates when fewer than k exist.
template <typename ScoreFn>
std::vector<NodeId> top_k_of(std::span<const NodeId> candidates, std::size_t k,
                             ScoreFn&& score_of) {
  std::vector<std::pair<double, NodeId>> keyed;
  keyed.reserve(candidates.size());
  for (NodeId c : candidates) keyed.emplace_back(score_of(c), c);
  const auto cmp = [](const auto& a, const auto& b) {
    return detail::ranks_before(a.first, a.second, b.first, b.second);
  };
  const std::size_t take = std::min(k, keyed.size());
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(take), keyed.end(),
                    cmp);
  std::vector<NodeId> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = keyed[i].second;
  return out;
}

/// The k non-excluded indices with the largest scores.
inline std::vector<NodeId> top_k(std::span<const double> scores, std::size_t k,
                                 std::span<const NodeId> excluded = {}) {
  std::vector<char> skip(scores.size(), 0);
  for (NodeId e : excluded)
    if (e < scores.size()) skip[e] = 1;
  std::vector<NodeId> candidates;
  candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!skip[i]) candidates.push_back(static_cast<NodeId>(i));
  return top_k_of(candidates, k, [&](NodeId i) { return scores[i]; });
}

}  // namespace lexicol
