#pragma once

#include "fastcluster/fast_operator.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <variant>
#include <vector>

namespace fastcluster {

/// Gaussian kernel exp(-gamma ||x - y||^2), written as f(x) f(y) g(<x, y>) with
/// f(x) = exp(-gamma ||x||^2) and g(s) = exp(2 gamma s).
struct KernelSpec {
  double gamma = 1.0;

  void validate() const {
    if (!(gamma > 0) || !std::isfinite(gamma)) throw InvalidConfig("KernelSpec: gamma must be positive and finite");
  }
};

template <typename Derived1, typename Derived2>
typename Derived1::Scalar gaussian_kernel(const Eigen::MatrixBase<Derived1>& x, const Eigen::MatrixBase<Derived2>& y,
                                          double gamma) {
  using Scalar = typename Derived1::Scalar;
  if (!(gamma > 0)) throw InvalidConfig("gaussian_kernel: gamma must be positive");
  if (x.size() != y.size()) throw DimensionMismatch("gaussian_kernel: vector lengths differ");
  return std::exp(-static_cast<Scalar>(gamma) * (x - y).squaredNorm());
}

/// 1 / (D * Var(X)), variance taken over all entries.
template <typename Scalar>
double default_gamma(const Matrix<Scalar>& X) {
  const double mean = static_cast<double>(X.mean());
  const double var = static_cast<double>((X.array() - static_cast<Scalar>(mean)).square().mean());
  if (!(var > 0)) throw InvalidConfig("default_gamma: data has zero variance");
  return 1.0 / (static_cast<double>(X.cols()) * var);
}

template <typename Scalar>
using Landmarks = std::variant<Matrix<Scalar>, FastOperator<Scalar>>;

template <typename Scalar>
struct NystromModel {
  Landmarks<Scalar> landmarks;
  KernelSpec kernel;
  Vector<Scalar> landmark_sq_norms;
  Matrix<Scalar> eigvecs;            // of W, columns
  Vector<Scalar> inv_eigvals;        // clipped pseudo-inverse spectrum, >= 0
  Matrix<Scalar> reference_columns;  // C: kernel between the fitted data and the landmarks, N x K

  Index n_landmarks() const { return landmark_sq_norms.size(); }

  Matrix<Scalar> w_pinv() const { return eigvecs * inv_eigvals.asDiagonal() * eigvecs.transpose(); }
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> landmark_matrix(const Landmarks<Scalar>& landmarks) {
  if (const auto* dense = std::get_if<Matrix<Scalar>>(&landmarks)) return *dense;
  return materialize(std::get<FastOperator<Scalar>>(landmarks));
}

// U X^T for a D x m block of columns, through the operator when factorized.
template <typename Scalar>
Matrix<Scalar> landmark_products(const Landmarks<Scalar>& landmarks, const Matrix<Scalar>& columns,
                                 OpCounter* counter) {
  if (const auto* dense = std::get_if<Matrix<Scalar>>(&landmarks)) {
    if (columns.rows() != dense->cols()) throw DimensionMismatch("kernel_row: dimension mismatch");
    if (counter)
      counter->add(static_cast<std::uint64_t>(dense->size()) * static_cast<std::uint64_t>(columns.cols()));
    return *dense * columns;
  }
  return fast_apply(std::get<FastOperator<Scalar>>(landmarks), columns, counter);
}

}  // namespace detail

/// Kernel values between the rows of X (m x D) and the landmarks, m x K, via
/// f(x) f(u) g(<u, x>) evaluated in the exponent.
template <typename Scalar>
Matrix<Scalar> kernel_rows(const NystromModel<Scalar>& model, const Matrix<Scalar>& X, OpCounter* counter = nullptr) {
  const Matrix<Scalar> products = detail::landmark_products<Scalar>(model.landmarks, X.transpose(), counter);  // K x m
  const Scalar gamma = static_cast<Scalar>(model.kernel.gamma);
  Matrix<Scalar> out(X.rows(), model.n_landmarks());
  for (Index i = 0; i < X.rows(); ++i) {
    const Scalar log_fx = -gamma * X.row(i).squaredNorm();
    for (Index k = 0; k < model.n_landmarks(); ++k)
      out(i, k) = std::exp(log_fx - gamma * model.landmark_sq_norms(k) + Scalar(2) * gamma * products(k, i));
  }
  return out;
}

template <typename Scalar, typename Derived>
Vector<Scalar> kernel_row(const NystromModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x,
                          OpCounter* counter = nullptr) {
  const Matrix<Scalar> row = x.derived().reshaped(1, x.size());  // row or column vector
  return kernel_rows(model, row, counter).row(0).transpose();
}

/// W = k(landmarks, landmarks), pseudo-inverted through its eigendecomposition
/// with eigenvalues below 1e-10 * max clipped to zero.
template <typename Scalar>
NystromModel<Scalar> fit_nystrom(const Matrix<Scalar>& X, Landmarks<Scalar> landmarks, const KernelSpec& kernel) {
  kernel.validate();
  NystromModel<Scalar> model;
  model.landmarks = std::move(landmarks);
  model.kernel = kernel;
  const Matrix<Scalar> U = detail::landmark_matrix(model.landmarks);
  if (U.cols() != X.cols()) throw DimensionMismatch("fit_nystrom: landmarks and data differ in dimension");
  if (U.rows() > X.rows()) throw InvalidConfig("fit_nystrom: more landmarks than data points");
  model.landmark_sq_norms = U.rowwise().squaredNorm();

  const Index K = U.rows();
  Matrix<Scalar> W(K, K);
  for (Index i = 0; i < K; ++i)
    for (Index j = 0; j <= i; ++j) W(i, j) = W(j, i) = gaussian_kernel(U.row(i), U.row(j), kernel.gamma);
  if (W.cwiseAbs().maxCoeff() == Scalar(0)) throw DegenerateLandmarks("fit_nystrom: landmark kernel is zero");

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(W);
  model.eigvecs = eig.eigenvectors();
  const Vector<Scalar>& values = eig.eigenvalues();
  const Scalar cutoff = Scalar(1e-10) * values.maxCoeff();
  model.inv_eigvals.resize(K);
  for (Index k = 0; k < K; ++k) model.inv_eigvals(k) = values(k) > cutoff ? Scalar(1) / values(k) : Scalar(0);

  model.reference_columns = kernel_rows(model, X);
  return model;
}

/// Row of C W^+ C^T for the query x against the fitted reference set.
template <typename Scalar, typename Derived>
Vector<Scalar> approx_kernel_row(const NystromModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x,
                                 OpCounter* counter = nullptr) {
  const Vector<Scalar> c = kernel_row(model, x, counter);
  const Vector<Scalar> projected = model.eigvecs * (model.inv_eigvals.asDiagonal() * (model.eigvecs.transpose() * c));
  return model.reference_columns * projected;
}

/// Feature map phi with phi(x)^T phi(y) = c(x)^T W^+ c(y).
template <typename Scalar>
Matrix<Scalar> nystrom_features(const NystromModel<Scalar>& model, const Matrix<Scalar>& X, OpCounter* counter = nullptr) {
  const Matrix<Scalar> C = kernel_rows(model, X, counter);
  return C * model.eigvecs * model.inv_eigvals.cwiseSqrt().asDiagonal();
}

/// ||K - C W^+ C^T||_F / ||K||_F on the full kernel of X.
template <typename Scalar>
Scalar reconstruction_error(const NystromModel<Scalar>& model, const Matrix<Scalar>& X) {
  const Matrix<Scalar> phi = nystrom_features(model, X);
  const Matrix<Scalar> approx = phi * phi.transpose();
  const Index N = X.rows();
  Scalar diff(0), total(0);
  for (Index j = 0; j < N; ++j) {
    for (Index i = 0; i < N; ++i) {
      const Scalar exact = gaussian_kernel(X.row(i), X.row(j), model.kernel.gamma);
      diff += (exact - approx(i, j)) * (exact - approx(i, j));
      total += exact * exact;
    }
  }
  return std::sqrt(diff / total);
}

/// One-vs-rest ridge regression on features, targets +1 / -1, bias column appended.
template <typename Scalar>
class LinearHead {
 public:
  explicit LinearHead(double ridge = 1e-3) : ridge_(ridge) {}

  void fit(const Matrix<Scalar>& features, const std::vector<int>& labels) {
    if (static_cast<Index>(labels.size()) != features.rows()) throw DimensionMismatch("LinearHead: label count != rows");
    classes_ = labels;
    std::sort(classes_.begin(), classes_.end());
    classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
    const Matrix<Scalar> F = with_bias(features);
    Matrix<Scalar> targets = Matrix<Scalar>::Constant(F.rows(), static_cast<Index>(classes_.size()), Scalar(-1));
    for (Index n = 0; n < F.rows(); ++n) targets(n, class_index(labels[static_cast<std::size_t>(n)])) = Scalar(1);
    Matrix<Scalar> gram = F.transpose() * F;
    gram.diagonal().array() += static_cast<Scalar>(ridge_);
    weights_ = gram.ldlt().solve(F.transpose() * targets);
  }

  std::vector<int> predict(const Matrix<Scalar>& features) const {
    const Matrix<Scalar> scores = with_bias(features) * weights_;
    std::vector<int> out(static_cast<std::size_t>(scores.rows()));
    for (Index n = 0; n < scores.rows(); ++n) {
      Index best = 0;
      scores.row(n).maxCoeff(&best);
      out[static_cast<std::size_t>(n)] = classes_[static_cast<std::size_t>(best)];
    }
    return out;
  }

 private:
  static Matrix<Scalar> with_bias(const Matrix<Scalar>& features) {
    Matrix<Scalar> F(features.rows(), features.cols() + 1);
    F << features, Matrix<Scalar>::Ones(features.rows(), 1);
    return F;
  }

  Index class_index(int label) const {
    return static_cast<Index>(std::lower_bound(classes_.begin(), classes_.end(), label) - classes_.begin());
  }

  double ridge_;
  std::vector<int> classes_;
  Matrix<Scalar> weights_;
};

}  // namespace fastcluster
