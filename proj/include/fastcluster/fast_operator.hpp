#pragma once

#include "fastcluster/sparse_factor.hpp"

#include <span>
#include <vector>

namespace fastcluster {

/// Applies the chain factors[0] * factors[1] * ... * factors[last] to X,
/// rightmost factor first. An empty chain is the identity.
template <typename Scalar, typename Derived>
Matrix<Scalar> apply_chain(std::span<const SparseFactor<Scalar>> factors, const Eigen::MatrixBase<Derived>& X,
                           OpCounter* counter = nullptr) {
  Matrix<Scalar> Y = X;
  for (auto it = factors.rbegin(); it != factors.rend(); ++it) Y = spmm_dense(*it, Y, counter);
  return Y;
}

/// (factors[0] * ... * factors[last])^T X, leftmost factor transposed first.
template <typename Scalar, typename Derived>
Matrix<Scalar> apply_chain_transposed(std::span<const SparseFactor<Scalar>> factors,
                                      const Eigen::MatrixBase<Derived>& X, OpCounter* counter = nullptr) {
  Matrix<Scalar> Y = X;
  for (const auto& f : factors) Y = spmm_dense_transposed(f, Y, counter);
  return Y;
}

/// Dense product of a chain; identity of size `identity_size` when the chain is empty.
template <typename Scalar>
Matrix<Scalar> chain_product(std::span<const SparseFactor<Scalar>> factors, Index identity_size = 0) {
  if (factors.empty()) return Matrix<Scalar>::Identity(identity_size, identity_size);
  const Index cols = factors.back().cols();
  return apply_chain<Scalar>(factors, Matrix<Scalar>::Identity(cols, cols));
}

/// Linear map stored as scale * factors[0] * ... * factors[Q-1], K_out x D_in.
template <typename Scalar>
class FastOperator {
 public:
  FastOperator() = default;

  explicit FastOperator(std::vector<SparseFactor<Scalar>> factors, Scalar scale = Scalar(1))
      : factors_(std::move(factors)), scale_(scale) {
    if (factors_.empty()) throw ShapeChainMismatch("FastOperator: needs at least one factor");
    for (std::size_t i = 0; i + 1 < factors_.size(); ++i) {
      if (factors_[i].cols() != factors_[i + 1].rows()) {
        throw ShapeChainMismatch("FastOperator: factor " + std::to_string(i) + " has " +
                                 std::to_string(factors_[i].cols()) + " columns but factor " +
                                 std::to_string(i + 1) + " has " + std::to_string(factors_[i + 1].rows()) + " rows");
      }
    }
  }

  Index rows() const { return factors_.front().rows(); }
  Index cols() const { return factors_.back().cols(); }
  Scalar scale() const noexcept { return scale_; }
  std::span<const SparseFactor<Scalar>> factors() const noexcept { return factors_; }
  std::size_t n_factors() const noexcept { return factors_.size(); }

  Index nnz() const {
    Index total = 0;
    for (const auto& f : factors_) total += f.nnz();
    return total;
  }

  /// Returns the same operator with the scale multiplied into the leftmost factor.
  FastOperator folded() const {
    if (scale_ == Scalar(1)) return *this;
    std::vector<SparseFactor<Scalar>> out = factors_;
    out.front() = out.front().scaled(scale_);
    return FastOperator(std::move(out));
  }

 private:
  std::vector<SparseFactor<Scalar>> factors_;
  Scalar scale_ = Scalar(1);
};

using FastOperatorXd = FastOperator<double>;

/// scale * S_1 (S_2 ( ... (S_Q X))). The counter is advanced by sum_q nnz(S_q) * cols(X).
template <typename Scalar, typename Derived>
Matrix<Scalar> fast_apply(const FastOperator<Scalar>& V, const Eigen::MatrixBase<Derived>& X,
                          OpCounter* counter = nullptr) {
  if (X.rows() != V.cols())
    throw DimensionMismatch("fast_apply: operator expects " + std::to_string(V.cols()) + " rows, got " +
                            std::to_string(X.rows()));
  Matrix<Scalar> Y = apply_chain<Scalar>(V.factors(), X, counter);
  if (V.scale() != Scalar(1)) Y *= V.scale();
  return Y;
}

template <typename Scalar>
Matrix<Scalar> materialize(const FastOperator<Scalar>& V) {
  Matrix<Scalar> M = chain_product<Scalar>(V.factors());
  if (V.scale() != Scalar(1)) M *= V.scale();
  return M;
}

}  // namespace fastcluster
