#include "helpers.hpp"

using namespace fastcluster;
using namespace testing_support;

namespace {

double exact_kernel(const VectorXd& x, const VectorXd& y, double gamma) {
  return std::exp(-gamma * oracle::squared_distance(x, y));
}

}  // namespace

TEST_SUITE("kernel") {
  TEST_CASE("k(x, x) = 1") {
    const MatrixXd X = oracle::random_matrix(10, 5, 1);
    for (Index n = 0; n < 10; ++n) CHECK(gaussian_kernel(X.row(n), X.row(n), 0.7) == 1.0);
  }

  TEST_CASE("f f g factorization") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> g(0.01, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
      const double gamma = g(rng);
      const VectorXd x = oracle::random_matrix(6, 1, rng()), y = oracle::random_matrix(6, 1, rng());
      const double f = std::exp(-gamma * x.squaredNorm()) * std::exp(-gamma * y.squaredNorm()) * std::exp(2 * gamma * x.dot(y));
      CHECK(std::abs(gaussian_kernel(x, y, gamma) - f) <= 1e-12);
    }
  }

  TEST_CASE("kernel rows against pairwise evaluation") {
    const MatrixXd X = oracle::random_matrix(30, 4, 2), U = oracle::random_matrix(5, 4, 3);
    const auto model = fit_nystrom<double>(X, U, {0.3});
    OpCounter c;
    const MatrixXd C = kernel_rows(model, X, &c);
    CHECK(c.multiply_adds() == 30u * 5u * 4u);
    for (Index i = 0; i < 30; ++i)
      for (Index k = 0; k < 5; ++k)
        CHECK(std::abs(C(i, k) - exact_kernel(X.row(i).transpose(), U.row(k).transpose(), 0.3)) <= 1e-12);
  }

  TEST_CASE("dense and identity-chain landmarks agree") {
    const MatrixXd X = oracle::random_matrix(20, 5, 4), U = oracle::random_matrix(5, 5, 5);
    const FastOperator<double> V({SparseFactor<double>::from_dense(U), SparseFactor<double>::identity(5)});
    const auto a = fit_nystrom<double>(X, U, {0.2});
    const auto b = fit_nystrom<double>(X, V, {0.2});
    for (Index n = 0; n < 20; ++n) CHECK(max_abs(kernel_row(a, X.row(n)) - kernel_row(b, X.row(n))) <= 1e-12);
  }

  TEST_CASE("default gamma") {
    MatrixXd X(2, 2);
    X << 0, 2, 2, 0;
    CHECK(default_gamma(X) == doctest::Approx(0.5));
    CHECK_THROWS_AS(default_gamma(MatrixXd(MatrixXd::Ones(3, 3))), InvalidConfig);
  }
}

TEST_SUITE("nystrom") {
  TEST_CASE("landmarks equal to the data reproduce the kernel") {
    const MatrixXd X = oracle::random_matrix(20, 3, 6);
    const auto model = fit_nystrom<double>(X, X, {0.5});
    CHECK(reconstruction_error(model, X) <= 1e-8);
  }

  TEST_CASE("one landmark on identical points") {
    const MatrixXd X = MatrixXd::Constant(8, 3, 1.5);
    const auto model = fit_nystrom<double>(X, MatrixXd(X.topRows(1)), {0.5});
    CHECK(reconstruction_error(model, X) <= 1e-12);
  }

  TEST_CASE("approximation is symmetric positive semidefinite") {
    const MatrixXd X = oracle::random_matrix(40, 4, 7);
    const auto model = fit_nystrom<double>(X, sample_initial_centroids(X, 8, 1), {0.25});
    MatrixXd A(40, 40);
    for (Index n = 0; n < 40; ++n) A.row(n) = approx_kernel_row(model, X.row(n)).transpose();
    CHECK(max_abs(A - A.transpose()) <= 1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (A + A.transpose()));
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * eig.eigenvalues().maxCoeff());
    const MatrixXd phi = nystrom_features(model, X);
    CHECK(max_abs(phi * phi.transpose() - A) <= 1e-10);
  }

  TEST_CASE("k-means landmarks beat uniform sampling") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Dataset data = blobs(400, 8, 10, 1.0, seed);
      const KernelSpec kernel{default_gamma(data.X)};
      const MatrixXd uniform = sample_initial_centroids(data.X, 10, seed + 100);
      const auto km = lloyd_kmeans(data.X, 10, sample_initial_centroids(data.X, 10, seed));
      const double e_uniform = reconstruction_error(fit_nystrom<double>(data.X, uniform, kernel), data.X);
      const double e_kmeans = reconstruction_error(fit_nystrom<double>(data.X, km.centroids_dense, kernel), data.X);
      if (e_kmeans <= e_uniform) ++wins;
    }
    CHECK(wins >= 4);
  }

  TEST_CASE("errors") {
    const MatrixXd X = oracle::random_matrix(5, 3, 8);
    CHECK_THROWS_AS(fit_nystrom<double>(X, MatrixXd(MatrixXd::Ones(2, 4)), {1.0}), DimensionMismatch);
    CHECK_THROWS_AS(fit_nystrom<double>(X, MatrixXd(MatrixXd::Ones(6, 3)), {1.0}), InvalidConfig);
    CHECK_THROWS_AS(fit_nystrom<double>(X, MatrixXd(X.topRows(2)), {0.0}), InvalidConfig);
  }
}

TEST_SUITE("linear_head") {
  TEST_CASE("separable classes and determinism") {
    const Dataset data = blobs(300, 4, 3, 0.5, 9);
    const auto model = fit_nystrom<double>(data.X, sample_initial_centroids(data.X, 20, 2), {default_gamma(data.X)});
    const MatrixXd phi = nystrom_features(model, data.X);
    LinearHead<double> a, b;
    a.fit(phi, data.labels);
    b.fit(phi, data.labels);
    const auto pa = a.predict(phi);
    CHECK(pa == b.predict(phi));
    std::size_t correct = 0;
    for (std::size_t n = 0; n < pa.size(); ++n) correct += pa[n] == data.labels[n];
    CHECK(static_cast<double>(correct) / static_cast<double>(pa.size()) >= 0.95);
  }
}
