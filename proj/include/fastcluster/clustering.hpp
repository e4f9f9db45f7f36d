#pragma once

#include "fastcluster/palm4msa.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace fastcluster {

enum class CentroidKind { Dense, Factorized };

struct IterationStats {
  std::uint64_t assign_ops = 0;
  double assign_ms = 0;
  double factorize_ms = 0;
  Index nnz_total = 0;
  int reseeded = 0;  // empty clusters refilled this iteration
};

template <typename Scalar>
struct Assignment {
  std::vector<Index> labels;
  Vector<Scalar> distances;  // squared distance of each point to its chosen centroid
};

template <typename Scalar>
struct CentroidUpdate {
  Matrix<Scalar> centroids;
  std::vector<Index> sizes;
  int reseeded = 0;
};

template <typename Scalar>
struct ClusteringModel {
  CentroidKind kind = CentroidKind::Dense;
  Matrix<Scalar> centroids_dense;
  FastOperator<Scalar> centroids_op;
  std::vector<Index> assignments;
  std::vector<Index> cluster_sizes;
  std::vector<Scalar> objective_trace;
  std::vector<IterationStats> stats;
  int iteration_count = 0;

  Index n_clusters() const {
    return kind == CentroidKind::Dense ? centroids_dense.rows() : centroids_op.rows();
  }
  Matrix<Scalar> centroid_matrix() const {
    return kind == CentroidKind::Dense ? centroids_dense : materialize(centroids_op);
  }
};

struct QkConfig {
  Index K = 2;
  int Q = 0;  // 0 selects floor(log2(min(K, D)))
  Index sparsity_level = 5;
  double tolerance = 1e-6;
  int max_outer_iterations = 20;
  PalmConfig palm{};
  bool use_hierarchical = false;
  std::uint64_t seed = 0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

// argmin_k norms(k) - 2 scores(k, n); smallest k wins ties.
template <typename Scalar, typename Scores>
Assignment<Scalar> argmin_assign(const Matrix<Scalar>& X, const Vector<Scalar>& centroid_sq_norms,
                                 const Scores& scores) {
  const Index N = X.rows(), K = centroid_sq_norms.size();
  Assignment<Scalar> out;
  out.labels.resize(static_cast<std::size_t>(N));
  out.distances.resize(N);
  for (Index n = 0; n < N; ++n) {
    Index best = 0;
    Scalar best_value = std::numeric_limits<Scalar>::infinity();
    for (Index k = 0; k < K; ++k) {
      const Scalar v = centroid_sq_norms(k) - Scalar(2) * scores(k, n);
      if (v < best_value) {
        best_value = v;
        best = k;
      }
    }
    out.labels[static_cast<std::size_t>(n)] = best;
    out.distances(n) = std::max(Scalar(0), X.row(n).squaredNorm() + best_value);
  }
  return out;
}

}  // namespace detail

/// Nearest centroid of every row of X (N x D) among the rows of U (K x D).
/// The counter is advanced by the N*K*D multiply-adds of the Gram product.
template <typename Scalar>
Assignment<Scalar> assign_dense(const Matrix<Scalar>& X, const Matrix<Scalar>& U, OpCounter* counter = nullptr) {
  if (X.cols() != U.cols())
    throw DimensionMismatch("assign_dense: data has " + std::to_string(X.cols()) + " features, centroids have " +
                            std::to_string(U.cols()));
  if (U.rows() < 1) throw DimensionMismatch("assign_dense: no centroids");
  const Matrix<Scalar> scores = U * X.transpose();  // K x N
  if (counter)
    counter->add(static_cast<std::uint64_t>(X.rows()) * static_cast<std::uint64_t>(U.rows()) *
                 static_cast<std::uint64_t>(U.cols()));
  const Vector<Scalar> norms = U.rowwise().squaredNorm();
  return detail::argmin_assign<Scalar>(X, norms, scores);
}

/// Same as assign_dense against materialize(V), with inner products computed
/// through the factor chain. Centroid norms come from the materialized rows and
/// are not counted; the counter sees only the N * sum_q nnz(S_q) product work.
template <typename Scalar>
Assignment<Scalar> assign_fast(const Matrix<Scalar>& X, const FastOperator<Scalar>& V, OpCounter* counter = nullptr) {
  if (X.cols() != V.cols())
    throw DimensionMismatch("assign_fast: data has " + std::to_string(X.cols()) + " features, operator expects " +
                            std::to_string(V.cols()));
  const Matrix<Scalar> scores = fast_apply(V, X.transpose(), counter);  // K x N
  const Vector<Scalar> norms = materialize(V).rowwise().squaredNorm();
  return detail::argmin_assign<Scalar>(X, norms, scores);
}

/// Cluster means. An empty cluster takes the point farthest from its assigned
/// centroid (among clusters with more than one point), which moves into it.
/// `distances` are those of the assignment step; when absent, distances to the
/// freshly computed means are used.
template <typename Scalar>
CentroidUpdate<Scalar> update_centroids(const Matrix<Scalar>& X, std::vector<Index>& labels, Index K,
                                        const Vector<Scalar>* distances = nullptr) {
  const Index N = X.rows();
  if (static_cast<Index>(labels.size()) != N) throw DimensionMismatch("update_centroids: label count != rows");
  if (K < 1) throw InvalidConfig("update_centroids: K must be >= 1");
  CentroidUpdate<Scalar> out;
  out.sizes.assign(static_cast<std::size_t>(K), 0);
  for (Index t : labels) {
    if (t < 0 || t >= K) throw IndexOutOfRange("update_centroids: label " + std::to_string(t) + " outside [0, K)");
    out.sizes[static_cast<std::size_t>(t)]++;
  }

  auto compute_means = [&]() {
    Matrix<Scalar> sums = Matrix<Scalar>::Zero(K, X.cols());
    for (Index n = 0; n < N; ++n) sums.row(labels[static_cast<std::size_t>(n)]) += X.row(n);
    for (Index k = 0; k < K; ++k)
      if (out.sizes[static_cast<std::size_t>(k)] > 0) sums.row(k) /= static_cast<Scalar>(out.sizes[static_cast<std::size_t>(k)]);
    return sums;
  };

  const bool any_empty = std::find(out.sizes.begin(), out.sizes.end(), Index(0)) != out.sizes.end();
  if (any_empty) {
    if (K > N) throw InvalidConfig("update_centroids: more clusters than points");
    Vector<Scalar> dist;
    if (distances) {
      dist = *distances;
    } else {
      const Matrix<Scalar> means = compute_means();
      dist.resize(N);
      for (Index n = 0; n < N; ++n) dist(n) = (X.row(n) - means.row(labels[static_cast<std::size_t>(n)])).squaredNorm();
    }
    for (Index k = 0; k < K; ++k) {
      if (out.sizes[static_cast<std::size_t>(k)] != 0) continue;
      Index far = -1;
      for (Index n = 0; n < N; ++n) {
        if (out.sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(n)])] < 2) continue;
        if (far < 0 || dist(n) > dist(far)) far = n;
      }
      out.sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])]--;
      labels[static_cast<std::size_t>(far)] = k;
      out.sizes[static_cast<std::size_t>(k)] = 1;
      dist(far) = Scalar(0);
      out.reseeded++;
    }
  }
  out.centroids = compute_means();
  return out;
}

/// Sum of squared distances of every point to its centroid row.
template <typename Scalar>
Scalar clustering_objective(const Matrix<Scalar>& X, const std::vector<Index>& labels, const Matrix<Scalar>& centroids) {
  Scalar total(0);
  for (Index n = 0; n < X.rows(); ++n)
    total += (X.row(n) - centroids.row(labels[static_cast<std::size_t>(n)])).squaredNorm();
  return total;
}

/// K-means objective with factorized centroids: sum_n ||x_n - v_{t_n}||^2.
template <typename Scalar>
Scalar objective_eq5(const Matrix<Scalar>& X, const std::vector<Index>& labels, const FastOperator<Scalar>& V) {
  return clustering_objective(X, labels, materialize(V));
}

/// Both sides of sum ||x - v||^2 = sum ||x - u||^2 + sum_k n_k ||u_k - v_k||^2,
/// where U holds the means of the clusters given by `labels`.
template <typename Scalar>
std::pair<Scalar, Scalar> decomposition_identity_check(const Matrix<Scalar>& X, const std::vector<Index>& labels,
                                                       const Matrix<Scalar>& U, const Matrix<Scalar>& V) {
  const Scalar lhs = clustering_objective(X, labels, V);
  Scalar rhs = clustering_objective(X, labels, U);
  std::vector<Index> sizes(static_cast<std::size_t>(U.rows()), 0);
  for (Index t : labels) sizes[static_cast<std::size_t>(t)]++;
  for (Index k = 0; k < U.rows(); ++k)
    rhs += static_cast<Scalar>(sizes[static_cast<std::size_t>(k)]) * (U.row(k) - V.row(k)).squaredNorm();
  return {lhs, rhs};
}

/// Row k scaled by sqrt(n_k).
template <typename Scalar>
Matrix<Scalar> weighted_target(const Matrix<Scalar>& U, const std::vector<Index>& sizes) {
  if (static_cast<Index>(sizes.size()) != U.rows()) throw DimensionMismatch("weighted_target: sizes length != rows");
  Matrix<Scalar> A = U;
  for (Index k = 0; k < U.rows(); ++k) A.row(k) *= std::sqrt(static_cast<Scalar>(sizes[static_cast<std::size_t>(k)]));
  return A;
}

/// K distinct rows of X drawn with the given seed. Runs sharing a seed share
/// their initial centroids.
template <typename Scalar>
Matrix<Scalar> sample_initial_centroids(const Matrix<Scalar>& X, Index K, std::uint64_t seed) {
  if (K < 1 || K > X.rows())
    throw InvalidConfig("sample_initial_centroids: K=" + std::to_string(K) + " with " + std::to_string(X.rows()) +
                        " points");
  std::vector<Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), Index(0));
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < K; ++i) {
    std::uniform_int_distribution<Index> pick(i, X.rows() - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  Matrix<Scalar> U(K, X.cols());
  for (Index k = 0; k < K; ++k) U.row(k) = X.row(order[static_cast<std::size_t>(k)]);
  return U;
}

/// Lloyd's algorithm. The trace holds the objective after every re-estimation.
template <typename Scalar>
ClusteringModel<Scalar> lloyd_kmeans(const Matrix<Scalar>& X, Index K, const Matrix<Scalar>& init_centroids,
                                     double tolerance = 1e-6, int max_iterations = 20) {
  if (init_centroids.rows() != K || init_centroids.cols() != X.cols())
    throw DimensionMismatch("lloyd_kmeans: initial centroids must be K x D");
  if (max_iterations < 1) throw InvalidConfig("lloyd_kmeans: max_iterations must be >= 1");
  ClusteringModel<Scalar> model;
  model.kind = CentroidKind::Dense;
  model.centroids_dense = init_centroids;
  for (int it = 0; it < max_iterations; ++it) {
    IterationStats stats;
    OpCounter counter;
    const auto start = detail::Clock::now();
    Assignment<Scalar> assignment = assign_dense(X, model.centroids_dense, &counter);
    stats.assign_ms = detail::elapsed_ms(start);
    stats.assign_ops = counter.multiply_adds();
    stats.nnz_total = K * X.cols();

    CentroidUpdate<Scalar> update = update_centroids(X, assignment.labels, K, &assignment.distances);
    stats.reseeded = update.reseeded;
    model.centroids_dense = std::move(update.centroids);
    model.cluster_sizes = std::move(update.sizes);
    model.assignments = std::move(assignment.labels);
    const Scalar objective = clustering_objective(X, model.assignments, model.centroids_dense);
    model.objective_trace.push_back(objective);
    model.stats.push_back(stats);
    model.iteration_count = it + 1;
    if (model.objective_trace.size() > 1) {
      const Scalar previous = model.objective_trace[model.objective_trace.size() - 2];
      if (previous == Scalar(0) || std::abs(previous - objective) / previous < static_cast<Scalar>(tolerance)) break;
    }
  }
  return model;
}

inline int default_factor_count(Index K, Index D) {
  const Index A = std::min(K, D);
  int q = 0;
  while ((Index(2) << q) <= A) ++q;
  return std::max(q, 1);
}

/// Lloyd-style alternation in which the centroid matrix is a product of sparse
/// factors. Each re-estimation factorizes D_sqrt(n) U with a fixed leading
/// D_sqrt(n) factor, warm-started from the previous factors.
///
/// objective_trace[0] is the objective of the initial operator under the first
/// assignment; entry tau is the objective after iteration tau.
template <typename Scalar>
ClusteringModel<Scalar> qkmeans(const Matrix<Scalar>& X, const QkConfig& config, const Matrix<Scalar>& init_centroids,
                                std::optional<FastOperator<Scalar>> init_operator = std::nullopt) {
  const Index K = config.K, D = X.cols();
  if (K < 2) throw InvalidConfig("qkmeans: K must be >= 2");
  if (init_centroids.rows() != K || init_centroids.cols() != D)
    throw DimensionMismatch("qkmeans: initial centroids must be K x D");
  if (config.max_outer_iterations < 1) throw InvalidConfig("qkmeans: max_outer_iterations must be >= 1");
  const int Q = config.Q > 0 ? config.Q : default_factor_count(K, D);
  if (config.use_hierarchical && Q < 2) throw InvalidConfig("qkmeans: hierarchical factorization needs Q >= 2");
  const auto constraints = fast_operator_constraints<Scalar>(K, D, Q, config.sparsity_level);

  ClusteringModel<Scalar> model;
  model.kind = CentroidKind::Factorized;

  IterationStats init_stats;
  {
    const auto start = detail::Clock::now();
    if (init_operator) {
      if (init_operator->rows() != K || init_operator->cols() != D)
        throw DimensionMismatch("qkmeans: initial operator must be K x D");
      model.centroids_op = init_operator->folded();
    } else if (config.use_hierarchical) {
      model.centroids_op = FastOperator<Scalar>(
          hierarchical_palm4msa<Scalar>(init_centroids, Q, config.sparsity_level, config.palm).factors);
    } else {
      model.centroids_op = FastOperator<Scalar>(palm4msa<Scalar>(init_centroids, constraints, config.palm).factors);
    }
    init_stats.factorize_ms = detail::elapsed_ms(start);
  }

  auto timed_assign = [&](IterationStats& stats) {
    OpCounter counter;
    const auto start = detail::Clock::now();
    Assignment<Scalar> a = assign_fast(X, model.centroids_op, &counter);
    stats.assign_ms = detail::elapsed_ms(start);
    stats.assign_ops = counter.multiply_adds();
    return a;
  };

  Assignment<Scalar> assignment = timed_assign(init_stats);
  init_stats.nnz_total = model.centroids_op.nnz();
  model.assignments = assignment.labels;
  model.objective_trace.push_back(objective_eq5(X, model.assignments, model.centroids_op));
  model.stats.push_back(init_stats);

  for (int tau = 1; tau <= config.max_outer_iterations; ++tau) {
    IterationStats stats;
    if (tau > 1) assignment = timed_assign(stats);

    CentroidUpdate<Scalar> update = update_centroids(X, assignment.labels, K, &assignment.distances);
    stats.reseeded = update.reseeded;
    for (Index n_k : update.sizes)
      if (n_k == 0) throw SingularWeight("qkmeans: empty cluster survived re-seeding");
    const Matrix<Scalar> target = weighted_target(update.centroids, update.sizes);
    Vector<Scalar> sqrt_sizes(K);
    for (Index k = 0; k < K; ++k) sqrt_sizes(k) = std::sqrt(static_cast<Scalar>(update.sizes[static_cast<std::size_t>(k)]));
    const SparseFactor<Scalar> weights = SparseFactor<Scalar>::diagonal(sqrt_sizes);

    const auto start = detail::Clock::now();
    if (config.use_hierarchical) {
      // Not warm-started: factorize the weighted target, then undo the weights
      // on the leftmost factor.
      PalmState<Scalar> state = hierarchical_palm4msa<Scalar>(target, Q, config.sparsity_level, config.palm);
      const SparseFactor<Scalar> unweight = SparseFactor<Scalar>::diagonal(sqrt_sizes.cwiseInverse());
      state.factors.front() = spmm_sparse(unweight, state.factors.front());
      model.centroids_op = FastOperator<Scalar>(std::move(state.factors));
    } else {
      std::vector<SparsityConstraint<Scalar>> full{SparsityConstraint<Scalar>::fixed(weights)};
      full.insert(full.end(), constraints.begin(), constraints.end());
      std::vector<SparseFactor<Scalar>> init{weights};
      const auto previous = model.centroids_op.factors();
      init.insert(init.end(), previous.begin(), previous.end());
      PalmState<Scalar> state = palm4msa<Scalar>(target, full, std::move(init), config.palm);
      model.centroids_op = FastOperator<Scalar>(
          std::vector<SparseFactor<Scalar>>(state.factors.begin() + 1, state.factors.end()));
    }
    stats.factorize_ms = detail::elapsed_ms(start);
    stats.nnz_total = model.centroids_op.nnz();

    model.assignments = assignment.labels;
    model.cluster_sizes = update.sizes;
    const Scalar objective = objective_eq5(X, model.assignments, model.centroids_op);
    const Scalar previous = model.objective_trace.back();
    model.objective_trace.push_back(objective);
    model.stats.push_back(stats);
    model.iteration_count = tau;
    if (previous == Scalar(0) || std::abs(previous - objective) / previous < static_cast<Scalar>(config.tolerance))
      break;
  }
  return model;
}

}  // namespace fastcluster
