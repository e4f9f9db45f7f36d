#include "helpers.hpp"

using namespace fastcluster;
using namespace testing_support;

namespace {

std::vector<Index> as_index(const std::vector<long>& v) { return {v.begin(), v.end()}; }

bool non_increasing(const std::vector<double>& trace, double slack = 1e-9) {
  for (std::size_t t = 1; t < trace.size(); ++t)
    if (trace[t] > trace[t - 1] * (1 + slack)) return false;
  return true;
}

}  // namespace

TEST_SUITE("assignment") {
  TEST_CASE("single centroid") {
    const MatrixXd X = oracle::random_matrix(10, 3, 1);
    const auto a = assign_dense(X, MatrixXd(MatrixXd::Zero(1, 3)));
    for (Index t : a.labels) CHECK(t == 0);
  }

  TEST_CASE("points equal to centroids") {
    const MatrixXd X = oracle::random_matrix(6, 4, 2);
    OpCounter c;
    const auto a = assign_dense(X, X, &c);
    for (Index n = 0; n < 6; ++n) CHECK(a.labels[static_cast<std::size_t>(n)] == n);
    CHECK(clustering_objective(X, a.labels, X) == 0.0);
    CHECK(c.multiply_adds() == 6u * 6u * 4u);
  }

  TEST_CASE("random 20x3 against exhaustive distances") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const MatrixXd X = oracle::random_matrix(20, 3, seed), U = oracle::random_matrix(4, 3, seed + 30);
      const auto a = assign_dense(X, U);
      CHECK(a.labels == as_index(oracle::exhaustive_assign(X, U)));
      for (Index n = 0; n < 20; ++n)
        CHECK(std::abs(a.distances(n) - oracle::squared_distance(X.row(n).transpose(),
                                                                  U.row(a.labels[static_cast<std::size_t>(n)]).transpose())) <=
              1e-10);
    }
  }

  TEST_CASE("ties go to the smallest index") {
    MatrixXd U(3, 1);
    U << -1, 1, 1;
    MatrixXd X(1, 1);
    X << 0;
    CHECK(assign_dense(X, U).labels[0] == 0);
  }

  TEST_CASE("fast assignment through an identity chain") {
    const MatrixXd X = oracle::random_matrix(30, 5, 3), U = oracle::random_matrix(5, 5, 4);
    const FastOperator<double> V({SparseFactor<double>::from_dense(U), SparseFactor<double>::identity(5)});
    CHECK(assign_fast(X, V).labels == assign_dense(X, U).labels);
  }

  TEST_CASE("fast assignment against materialization and its count") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = oracle::random_entries(6, 4, 12, seed), b = oracle::random_entries(4, 8, 14, seed + 1);
      const FastOperator<double> V({factor_from(6, 4, a), factor_from(4, 8, b)});
      const MatrixXd X = oracle::random_matrix(25, 8, seed + 2);
      OpCounter c;
      const auto fast = assign_fast(X, V, &c);
      CHECK(fast.labels == assign_dense(X, materialize(V)).labels);
      CHECK(c.multiply_adds() == 25u * (12u + 14u));
    }
    CHECK_THROWS_AS(assign_fast(MatrixXd(MatrixXd::Ones(2, 3)), FastOperator<double>({SparseFactor<double>::identity(4)})),
                    DimensionMismatch);
  }
}

TEST_SUITE("centroid_update") {
  TEST_CASE("one cluster gives the global mean") {
    const MatrixXd X = oracle::random_matrix(12, 3, 5);
    std::vector<Index> t(12, 0);
    const auto u = update_centroids(X, t, 1);
    CHECK(max_abs(u.centroids.row(0) - X.colwise().mean()) <= 1e-12);
    CHECK(u.sizes[0] == 12);
  }

  TEST_CASE("every point its own cluster") {
    const MatrixXd X = oracle::random_matrix(7, 2, 6);
    std::vector<Index> t(7);
    std::iota(t.begin(), t.end(), Index(0));
    CHECK(update_centroids(X, t, 7).centroids == X);
  }

  TEST_CASE("random against accumulate and divide") {
    const MatrixXd X = oracle::random_matrix(40, 3, 7);
    std::mt19937_64 rng(8);
    std::vector<Index> t(40);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Index>(i % 5);
    std::shuffle(t.begin(), t.end(), rng);
    std::vector<Index> original = t;
    const auto u = update_centroids(X, t, 5);
    CHECK(t == original);
    for (Index k = 0; k < 5; ++k) {
      VectorXd sum = VectorXd::Zero(3);
      double count = 0;
      for (Index n = 0; n < 40; ++n)
        if (t[static_cast<std::size_t>(n)] == k) {
          sum += X.row(n).transpose();
          count += 1;
        }
      CHECK(max_abs(u.centroids.row(k).transpose() - sum / count) <= 1e-12);
    }
  }

  TEST_CASE("means minimize the objective for fixed labels") {
    const MatrixXd X = oracle::random_matrix(50, 4, 9);
    std::vector<Index> t(50);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Index>(i % 3);
    const auto u = update_centroids(X, t, 3);
    const double base = clustering_objective(X, t, u.centroids);
    for (int trial = 0; trial < 10; ++trial) {
      const MatrixXd dir = oracle::random_matrix(3, 4, 100 + static_cast<std::uint64_t>(trial));
      CHECK(clustering_objective(X, t, MatrixXd(u.centroids + 1e-3 * dir)) >= base);
    }
  }

  TEST_CASE("empty cluster takes the farthest point") {
    MatrixXd X(4, 1);
    X << 0, 1, 2, 10;
    std::vector<Index> t{0, 0, 0, 0};
    const auto u = update_centroids(X, t, 2);
    CHECK(u.reseeded == 1);
    CHECK(t[3] == 1);
    CHECK(u.sizes == std::vector<Index>{3, 1});
    CHECK(u.centroids(1, 0) == 10.0);
    CHECK(u.centroids(0, 0) == 1.0);
  }

  TEST_CASE("weighted target") {
    const MatrixXd U = oracle::random_matrix(2, 3, 10);
    CHECK(weighted_target(U, {1, 1}) == U);
    const MatrixXd A = weighted_target(U, {4, 9});
    CHECK(A.row(0) == 2.0 * U.row(0));
    CHECK(A.row(1) == 3.0 * U.row(1));
    const MatrixXd R = oracle::random_matrix(5, 2, 11);
    const std::vector<Index> n{3, 1, 7, 2, 5};
    const MatrixXd W = weighted_target(R, n);
    for (Index k = 0; k < 5; ++k)
      for (Index d = 0; d < 2; ++d)
        CHECK(std::abs(W(k, d) - std::sqrt(static_cast<double>(n[static_cast<std::size_t>(k)])) * R(k, d)) <= 1e-15);
  }

  TEST_CASE("decomposition identity") {
    const MatrixXd X = oracle::random_matrix(30, 3, 12);
    std::vector<Index> t(30);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Index>(i % 4);
    const MatrixXd U = update_centroids(X, t, 4).centroids;
    auto [l0, r0] = decomposition_identity_check(X, t, U, U);
    CHECK(l0 == doctest::Approx(r0).epsilon(1e-12));
    CHECK(l0 == doctest::Approx(clustering_objective(X, t, U)).epsilon(1e-12));
    const MatrixXd V = U + 0.3 * oracle::random_matrix(4, 3, 13);
    auto [l1, r1] = decomposition_identity_check(X, t, U, V);
    CHECK(std::abs(l1 - r1) <= 1e-9 * l1);

    MatrixXd S(4, 2);
    S << 1, 0, -1, 0, 0, 2, 0, -2;
    const std::vector<Index> one(4, 0);
    MatrixXd mean = MatrixXd::Zero(1, 2), shifted(1, 2);
    shifted << 0.5, -0.25;
    auto [l2, r2] = decomposition_identity_check(S, one, mean, shifted);
    CHECK(l2 == doctest::Approx(10.0 + 4 * 0.3125));
    CHECK(r2 == doctest::Approx(l2));
  }
}

TEST_SUITE("lloyd") {
  TEST_CASE("four points on a line") {
    MatrixXd X(4, 1);
    X << 0, 1, 10, 11;
    MatrixXd init(2, 1);
    init << 0, 10;
    const auto model = lloyd_kmeans(X, 2, init);
    CHECK(model.iteration_count <= 2);
    CHECK(model.objective_trace.back() == 1.0);
    CHECK(model.objective_trace.back() == oracle::best_two_partition(X));
    CHECK(model.centroids_dense(0, 0) == 0.5);
    CHECK(model.centroids_dense(1, 0) == 10.5);
  }

  TEST_CASE("K equal to N") {
    const MatrixXd X = oracle::random_matrix(9, 2, 14);
    const auto model = lloyd_kmeans(X, 9, X);
    CHECK(model.objective_trace.back() == 0.0);
  }

  TEST_CASE("trace never rises over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Dataset data = blobs(300, 5, 6, 2.0, seed);
      const auto model = lloyd_kmeans(data.X, 6, sample_initial_centroids(data.X, 6, seed), 1e-6, 50);
      CHECK(non_increasing(model.objective_trace));
      Index total = 0;
      for (Index n : model.cluster_sizes) total += n;
      CHECK(total == 300);
    }
  }

  TEST_CASE("shared seed shares the initial centroids") {
    const MatrixXd X = oracle::random_matrix(50, 3, 15);
    CHECK(sample_initial_centroids(X, 5, 3) == sample_initial_centroids(X, 5, 3));
    const MatrixXd U = sample_initial_centroids(X, 50, 4);
    std::vector<std::vector<double>> rows;
    for (Index k = 0; k < 50; ++k) rows.push_back({U(k, 0), U(k, 1), U(k, 2)});
    std::sort(rows.begin(), rows.end());
    CHECK(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
  }
}

TEST_SUITE("qkmeans") {
  TEST_CASE("unconstrained limit on identical-point clusters") {
    MatrixXd X(12, 4);
    const MatrixXd centers = 5.0 * oracle::random_matrix(4, 4, 16);
    for (Index n = 0; n < 12; ++n) X.row(n) = centers.row(n % 4);
    QkConfig cfg;
    cfg.K = 4;
    cfg.Q = 1;
    cfg.sparsity_level = 4;
    MatrixXd init(4, 4);
    for (Index k = 0; k < 4; ++k) init.row(k) = X.row(k) + 0.1 * oracle::random_matrix(1, 4, 20 + static_cast<std::uint64_t>(k));
    const auto model = qkmeans(X, cfg, init);
    CHECK(model.objective_trace.back() <= 1e-12 * X.squaredNorm());
    CHECK(max_abs(materialize(model.centroids_op) - centers) <= 1e-6);
  }

  TEST_CASE("blobs: trace never rises and ends below its start") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Dataset data = blobs(500, 32, 16, 1.0, seed);
      QkConfig cfg;
      cfg.K = 16;
      cfg.Q = 4;
      cfg.sparsity_level = 2;
      cfg.seed = seed;
      cfg.palm.seed = seed;
      cfg.palm.max_iterations = 50;
      const auto model = qkmeans(data.X, cfg, sample_initial_centroids(data.X, 16, seed));
      CHECK(non_increasing(model.objective_trace));
      CHECK(model.objective_trace.back() <= model.objective_trace.front());
      CHECK(model.objective_trace.back() == doctest::Approx(objective_eq5(data.X, model.assignments, model.centroids_op)));
    }
  }

  TEST_CASE("Q = 1 at full sparsity follows Lloyd") {
    const Dataset data = blobs(200, 6, 4, 1.5, 3);
    const MatrixXd init = sample_initial_centroids(data.X, 4, 3);
    QkConfig cfg;
    cfg.K = 4;
    cfg.Q = 1;
    cfg.sparsity_level = 4;
    cfg.max_outer_iterations = 10;
    const auto qk = qkmeans(data.X, cfg, init);
    const auto km = lloyd_kmeans(data.X, 4, init, 1e-6, 10);
    CHECK(qk.assignments == km.assignments);
    CHECK(qk.objective_trace.back() == doctest::Approx(km.objective_trace.back()).epsilon(1e-9));
  }

  TEST_CASE("hierarchical flag and caller-provided operator") {
    const Dataset data = blobs(200, 8, 4, 1.0, 4);
    const MatrixXd init = sample_initial_centroids(data.X, 4, 4);
    QkConfig cfg;
    cfg.K = 4;
    cfg.sparsity_level = 2;
    cfg.max_outer_iterations = 3;
    cfg.palm.max_iterations = 30;
    cfg.use_hierarchical = true;
    const auto h = qkmeans(data.X, cfg, init);
    CHECK(h.kind == CentroidKind::Factorized);
    CHECK(h.centroids_op.rows() == 4);
    CHECK(h.centroids_op.cols() == 8);
    cfg.use_hierarchical = false;
    const auto op = random_feasible_operator<double>(4, 8, 2, 2, 1);
    const auto w = qkmeans<double>(data.X, cfg, init, op);
    CHECK(non_increasing(w.objective_trace));
    CHECK_THROWS_AS(qkmeans<double>(data.X, cfg, init, random_feasible_operator<double>(4, 6, 2, 2, 1)), DimensionMismatch);
  }

  TEST_CASE("config errors") {
    const MatrixXd X = oracle::random_matrix(10, 3, 1);
    QkConfig cfg;
    cfg.K = 1;
    CHECK_THROWS_AS(qkmeans(X, cfg, MatrixXd(X.topRows(1))), InvalidConfig);
    cfg.K = 2;
    CHECK_THROWS_AS(qkmeans(X, cfg, MatrixXd(X.topRows(3))), DimensionMismatch);
    cfg.sparsity_level = 0;
    CHECK_THROWS_AS(qkmeans(X, cfg, MatrixXd(X.topRows(2))), InvalidConfig);
  }

  TEST_CASE("default factor count") {
    CHECK(default_factor_count(32, 64) == 5);
    CHECK(default_factor_count(100, 100) == 6);
    CHECK(default_factor_count(2, 50) == 1);
  }
}
