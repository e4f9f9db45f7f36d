#pragma once

#include "fastcluster/common.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace fastcluster {

template <typename Scalar>
struct Triplet {
  Index row;
  Index col;
  Scalar value;
};

/// Compressed-row sparse matrix with sorted column indices and no stored zeros.
template <typename Scalar>
class SparseFactor {
 public:
  SparseFactor() = default;

  /// Builds the all-zero rows x cols matrix.
  SparseFactor(Index rows, Index cols)
      : rows_(rows), cols_(cols), row_offsets_(static_cast<std::size_t>(rows) + 1, 0) {
    if (rows <= 0 || cols <= 0) throw DimensionMismatch("SparseFactor: dimensions must be positive");
  }

  /// Takes ownership of already-canonical CSR arrays. Checked.
  SparseFactor(Index rows, Index cols, std::vector<Index> row_offsets, std::vector<Index> col_indices,
               std::vector<Scalar> values)
      : rows_(rows),
        cols_(cols),
        row_offsets_(std::move(row_offsets)),
        col_indices_(std::move(col_indices)),
        values_(std::move(values)) {
    validate();
  }

  static SparseFactor from_triplets(Index rows, Index cols, std::vector<Triplet<Scalar>> triplets) {
    SparseFactor out(rows, cols);
    for (const auto& t : triplets) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
        throw IndexOutOfRange("sparse_from_triplets: entry (" + std::to_string(t.row) + ", " +
                              std::to_string(t.col) + ") outside " + std::to_string(rows) + "x" +
                              std::to_string(cols));
      }
    }
    std::sort(triplets.begin(), triplets.end(),
              [](const auto& a, const auto& b) { return std::tie(a.row, a.col) < std::tie(b.row, b.col); });
    for (std::size_t i = 1; i < triplets.size(); ++i) {
      if (triplets[i].row == triplets[i - 1].row && triplets[i].col == triplets[i - 1].col) {
        throw DuplicateEntry("sparse_from_triplets: duplicate entry (" + std::to_string(triplets[i].row) + ", " +
                             std::to_string(triplets[i].col) + ")");
      }
    }
    for (const auto& t : triplets) {
      if (t.value == Scalar(0)) continue;
      out.row_offsets_[static_cast<std::size_t>(t.row) + 1]++;
      out.col_indices_.push_back(t.col);
      out.values_.push_back(t.value);
    }
    for (Index r = 0; r < rows; ++r) out.row_offsets_[r + 1] += out.row_offsets_[r];
    return out;
  }

  /// Keeps the nonzero entries of a dense matrix.
  template <typename Derived>
  static SparseFactor from_dense(const Eigen::MatrixBase<Derived>& dense) {
    SparseFactor out(dense.rows(), dense.cols());
    for (Index r = 0; r < dense.rows(); ++r) {
      for (Index c = 0; c < dense.cols(); ++c) {
        const Scalar v = dense(r, c);
        if (v != Scalar(0)) {
          out.col_indices_.push_back(c);
          out.values_.push_back(v);
        }
      }
      out.row_offsets_[r + 1] = static_cast<Index>(out.values_.size());
    }
    return out;
  }

  static SparseFactor identity(Index n) { return diagonal(Vector<Scalar>::Ones(n)); }

  template <typename Derived>
  static SparseFactor diagonal(const Eigen::MatrixBase<Derived>& diag) {
    const Index n = diag.size();
    SparseFactor out(n, n);
    for (Index i = 0; i < n; ++i) {
      if (diag(i) != Scalar(0)) {
        out.col_indices_.push_back(i);
        out.values_.push_back(diag(i));
      }
      out.row_offsets_[i + 1] = static_cast<Index>(out.values_.size());
    }
    return out;
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index nnz() const noexcept { return static_cast<Index>(values_.size()); }

  std::span<const Index> row_offsets() const noexcept { return row_offsets_; }
  std::span<const Index> col_indices() const noexcept { return col_indices_; }
  std::span<const Scalar> values() const noexcept { return values_; }

  Index row_begin(Index r) const noexcept { return row_offsets_[static_cast<std::size_t>(r)]; }
  Index row_end(Index r) const noexcept { return row_offsets_[static_cast<std::size_t>(r) + 1]; }
  Index col_at(Index k) const noexcept { return col_indices_[static_cast<std::size_t>(k)]; }
  Scalar value_at(Index k) const noexcept { return values_[static_cast<std::size_t>(k)]; }

  Scalar coeff(Index r, Index c) const {
    const auto first = col_indices_.begin() + row_begin(r);
    const auto last = col_indices_.begin() + row_end(r);
    const auto it = std::lower_bound(first, last, c);
    if (it == last || *it != c) return Scalar(0);
    return values_[static_cast<std::size_t>(it - col_indices_.begin())];
  }

  Matrix<Scalar> to_dense() const {
    Matrix<Scalar> out = Matrix<Scalar>::Zero(rows_, cols_);
    for (Index r = 0; r < rows_; ++r)
      for (Index k = row_begin(r); k < row_end(r); ++k) out(r, col_at(k)) = value_at(k);
    return out;
  }

  std::vector<Triplet<Scalar>> triplets() const {
    std::vector<Triplet<Scalar>> out;
    out.reserve(values_.size());
    for (Index r = 0; r < rows_; ++r)
      for (Index k = row_begin(r); k < row_end(r); ++k) out.push_back({r, col_at(k), value_at(k)});
    return out;
  }

  Scalar squared_norm() const {
    Scalar s(0);
    for (Scalar v : values_) s += v * v;
    return s;
  }
  Scalar frobenius_norm() const { return std::sqrt(squared_norm()); }

  /// Multiplies every stored value. Zero is not allowed (it would store zeros).
  SparseFactor scaled(Scalar factor) const {
    if (factor == Scalar(0)) return SparseFactor(rows_, cols_);
    SparseFactor out = *this;
    for (Scalar& v : out.values_) v *= factor;
    return out;
  }

  Index row_nnz(Index r) const noexcept { return row_end(r) - row_begin(r); }

  std::vector<Index> col_nnz() const {
    std::vector<Index> counts(static_cast<std::size_t>(cols_), 0);
    for (Index c : col_indices_) counts[static_cast<std::size_t>(c)]++;
    return counts;
  }

  friend bool operator==(const SparseFactor& a, const SparseFactor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.row_offsets_ == b.row_offsets_ &&
           a.col_indices_ == b.col_indices_ && a.values_ == b.values_;
  }

  bool same_support(const SparseFactor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && row_offsets_ == other.row_offsets_ &&
           col_indices_ == other.col_indices_;
  }

 private:
  void validate() const {
    if (rows_ <= 0 || cols_ <= 0) throw DimensionMismatch("SparseFactor: dimensions must be positive");
    if (row_offsets_.size() != static_cast<std::size_t>(rows_) + 1 || row_offsets_.front() != 0 ||
        row_offsets_.back() != static_cast<Index>(values_.size()) || col_indices_.size() != values_.size()) {
      throw DimensionMismatch("SparseFactor: inconsistent compressed-row arrays");
    }
    for (Index r = 0; r < rows_; ++r) {
      if (row_end(r) < row_begin(r)) throw DimensionMismatch("SparseFactor: row offsets decrease");
      for (Index k = row_begin(r); k < row_end(r); ++k) {
        const Index c = col_at(k);
        if (c < 0 || c >= cols_) throw IndexOutOfRange("SparseFactor: column index out of range");
        if (k > row_begin(r) && col_at(k - 1) >= c)
          throw DuplicateEntry("SparseFactor: column indices not strictly increasing");
        if (value_at(k) == Scalar(0)) throw DimensionMismatch("SparseFactor: explicit zero stored");
      }
    }
  }

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_offsets_{0};
  std::vector<Index> col_indices_;
  std::vector<Scalar> values_;
};

using SparseFactorXd = SparseFactor<double>;

/// y = S x; counter advanced by nnz(S).
template <typename Scalar, typename Derived>
Vector<Scalar> spmv(const SparseFactor<Scalar>& S, const Eigen::MatrixBase<Derived>& x, OpCounter* counter = nullptr) {
  if (x.size() != S.cols())
    throw DimensionMismatch("spmv: vector length " + std::to_string(x.size()) + " != " + std::to_string(S.cols()));
  Vector<Scalar> y(S.rows());
  for (Index r = 0; r < S.rows(); ++r) {
    Scalar acc(0);
    for (Index k = S.row_begin(r); k < S.row_end(r); ++k) acc += S.value_at(k) * x(S.col_at(k));
    y(r) = acc;
  }
  if (counter) counter->add(static_cast<std::uint64_t>(S.nnz()));
  return y;
}

/// S X for dense X; counter advanced by nnz(S) * cols(X).
template <typename Scalar, typename Derived>
Matrix<Scalar> spmm_dense(const SparseFactor<Scalar>& S, const Eigen::MatrixBase<Derived>& X,
                          OpCounter* counter = nullptr) {
  if (X.rows() != S.cols())
    throw DimensionMismatch("spmm_dense: " + std::to_string(S.rows()) + "x" + std::to_string(S.cols()) +
                            " times " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()));
  Matrix<Scalar> Y(S.rows(), X.cols());
  const auto cols = S.col_indices();
  const auto vals = S.values();
  for (Index j = 0; j < X.cols(); ++j) {
    for (Index r = 0; r < S.rows(); ++r) {
      Scalar acc(0);
      for (Index k = S.row_begin(r); k < S.row_end(r); ++k) acc += vals[k] * X(cols[k], j);
      Y(r, j) = acc;
    }
  }
  if (counter) counter->add(static_cast<std::uint64_t>(S.nnz()) * static_cast<std::uint64_t>(X.cols()));
  return Y;
}

/// S^T X without forming the transpose; counter advanced by nnz(S) * cols(X).
template <typename Scalar, typename Derived>
Matrix<Scalar> spmm_dense_transposed(const SparseFactor<Scalar>& S, const Eigen::MatrixBase<Derived>& X,
                                     OpCounter* counter = nullptr) {
  if (X.rows() != S.rows())
    throw DimensionMismatch("spmm_dense_transposed: row count " + std::to_string(X.rows()) +
                            " != " + std::to_string(S.rows()));
  Matrix<Scalar> Y = Matrix<Scalar>::Zero(S.cols(), X.cols());
  const auto cols = S.col_indices();
  const auto vals = S.values();
  for (Index j = 0; j < X.cols(); ++j) {
    for (Index r = 0; r < S.rows(); ++r) {
      const Scalar xr = X(r, j);
      for (Index k = S.row_begin(r); k < S.row_end(r); ++k) Y(cols[k], j) += vals[k] * xr;
    }
  }
  if (counter) counter->add(static_cast<std::uint64_t>(S.nnz()) * static_cast<std::uint64_t>(X.cols()));
  return Y;
}

/// Gustavson row-by-row product with a dense accumulator. Cancelled entries are dropped.
template <typename Scalar>
SparseFactor<Scalar> spmm_sparse(const SparseFactor<Scalar>& A, const SparseFactor<Scalar>& B,
                                 OpCounter* counter = nullptr) {
  if (A.cols() != B.rows())
    throw DimensionMismatch("spmm_sparse: inner dimensions " + std::to_string(A.cols()) +
                            " != " + std::to_string(B.rows()));
  std::vector<Index> offsets{0};
  std::vector<Index> cols;
  std::vector<Scalar> vals;
  std::vector<Scalar> acc(static_cast<std::size_t>(B.cols()), Scalar(0));
  std::vector<char> touched(static_cast<std::size_t>(B.cols()), 0);
  std::vector<Index> pattern;
  std::uint64_t ops = 0;
  for (Index r = 0; r < A.rows(); ++r) {
    pattern.clear();
    for (Index ka = A.row_begin(r); ka < A.row_end(r); ++ka) {
      const Index mid = A.col_at(ka);
      const Scalar a = A.value_at(ka);
      for (Index kb = B.row_begin(mid); kb < B.row_end(mid); ++kb) {
        const auto c = static_cast<std::size_t>(B.col_at(kb));
        if (!touched[c]) {
          touched[c] = 1;
          pattern.push_back(B.col_at(kb));
        }
        acc[c] += a * B.value_at(kb);
        ++ops;
      }
    }
    std::sort(pattern.begin(), pattern.end());
    for (Index c : pattern) {
      const auto cu = static_cast<std::size_t>(c);
      if (acc[cu] != Scalar(0)) {
        cols.push_back(c);
        vals.push_back(acc[cu]);
      }
      acc[cu] = Scalar(0);
      touched[cu] = 0;
    }
    offsets.push_back(static_cast<Index>(vals.size()));
  }
  if (counter) counter->add(ops);
  return SparseFactor<Scalar>(A.rows(), B.cols(), std::move(offsets), std::move(cols), std::move(vals));
}

/// Counting-sort transpose; canonical output.
template <typename Scalar>
SparseFactor<Scalar> transpose(const SparseFactor<Scalar>& S) {
  std::vector<Index> offsets(static_cast<std::size_t>(S.cols()) + 1, 0);
  for (Index c : S.col_indices()) offsets[static_cast<std::size_t>(c) + 1]++;
  for (Index c = 0; c < S.cols(); ++c) offsets[c + 1] += offsets[c];
  std::vector<Index> next(offsets.begin(), offsets.end() - 1);
  std::vector<Index> cols(static_cast<std::size_t>(S.nnz()));
  std::vector<Scalar> vals(static_cast<std::size_t>(S.nnz()));
  for (Index r = 0; r < S.rows(); ++r) {
    for (Index k = S.row_begin(r); k < S.row_end(r); ++k) {
      const auto dst = static_cast<std::size_t>(next[static_cast<std::size_t>(S.col_at(k))]++);
      cols[dst] = r;
      vals[dst] = S.value_at(k);
    }
  }
  return SparseFactor<Scalar>(S.cols(), S.rows(), std::move(offsets), std::move(cols), std::move(vals));
}

// Text triplet format: "rows cols nnz" then one "row col value" line per entry.

template <typename Scalar>
void write_triplets(std::ostream& os, const SparseFactor<Scalar>& S) {
  os << S.rows() << ' ' << S.cols() << ' ' << S.nnz() << '\n';
  os << std::setprecision(std::numeric_limits<Scalar>::max_digits10);
  for (const auto& t : S.triplets()) os << t.row << ' ' << t.col << ' ' << t.value << '\n';
}

template <typename Scalar>
SparseFactor<Scalar> read_triplets(std::istream& is) {
  Index rows = 0, cols = 0, nnz = 0;
  if (!(is >> rows >> cols >> nnz)) throw ParseError("triplet file: bad header");
  if (rows <= 0 || cols <= 0 || nnz < 0) throw ParseError("triplet file: invalid header values");
  std::vector<Triplet<Scalar>> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  for (Index i = 0; i < nnz; ++i) {
    Triplet<Scalar> t{};
    if (!(is >> t.row >> t.col >> t.value))
      throw ParseError("triplet file: expected " + std::to_string(nnz) + " entries, got " + std::to_string(i));
    entries.push_back(t);
  }
  return SparseFactor<Scalar>::from_triplets(rows, cols, std::move(entries));
}

}  // namespace fastcluster
