#pragma once

#include "fastcluster/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace fastcluster {

template <typename Scalar>
struct Neighbor {
  Index index = -1;
  Scalar distance = Scalar(0);  // Euclidean, not squared
};

/// Points of the indexed data grouped by the cluster they were assigned to.
/// Holds a pointer to the data, which must outlive the index.
template <typename Scalar>
struct ClusterIndex {
  ClusteringModel<Scalar> model;
  std::vector<std::vector<Index>> buckets;
  const Matrix<Scalar>* data = nullptr;
  Vector<Scalar> centroid_sq_norms;

  Index size() const { return data ? data->rows() : 0; }
};

namespace detail {

// ||u_k||^2 - 2 <u_k, x> for every centroid; the argmin is the nearest one.
template <typename Scalar>
Vector<Scalar> routing_keys(const ClusteringModel<Scalar>& model, const Vector<Scalar>& sq_norms,
                            const Vector<Scalar>& x, OpCounter* counter) {
  Vector<Scalar> scores;
  if (model.kind == CentroidKind::Factorized) {
    scores = fast_apply(model.centroids_op, x, counter);
  } else {
    scores = model.centroids_dense * x;
    if (counter) counter->add(static_cast<std::uint64_t>(model.centroids_dense.size()));
  }
  return sq_norms - Scalar(2) * scores;
}

}  // namespace detail

/// Buckets the data by nearest centroid, computed exactly as queries are
/// routed. The model's assignments are checked, then replaced by these labels:
/// the last assignment of a run was made against the previous centroids.
template <typename Scalar>
ClusterIndex<Scalar> build_index(const Matrix<Scalar>& data, ClusteringModel<Scalar> model) {
  if (static_cast<Index>(model.assignments.size()) != data.rows())
    throw DimensionMismatch("build_index: model has " + std::to_string(model.assignments.size()) +
                            " assignments for " + std::to_string(data.rows()) + " points");
  const Index K = model.n_clusters();
  for (Index k : model.assignments)
    if (k < 0 || k >= K) throw IndexOutOfRange("build_index: assignment " + std::to_string(k) + " out of range");
  if (data.rows() > 0 && data.cols() != model.centroid_matrix().cols())
    throw DimensionMismatch("build_index: data has " + std::to_string(data.cols()) + " features, centroids have " +
                            std::to_string(model.centroid_matrix().cols()));

  ClusterIndex<Scalar> index;
  index.centroid_sq_norms = model.centroid_matrix().rowwise().squaredNorm();
  index.buckets.resize(static_cast<std::size_t>(K));
  model.cluster_sizes.assign(static_cast<std::size_t>(K), 0);
  for (Index n = 0; n < data.rows(); ++n) {
    const Vector<Scalar> keys = detail::routing_keys(model, index.centroid_sq_norms, Vector<Scalar>(data.row(n).transpose()), nullptr);
    Index k = 0;
    keys.minCoeff(&k);  // first minimum, same as the stable sort in query_1nn
    model.assignments[static_cast<std::size_t>(n)] = k;
    model.cluster_sizes[static_cast<std::size_t>(k)]++;
    index.buckets[static_cast<std::size_t>(k)].push_back(n);
  }
  index.model = std::move(model);
  index.data = &data;
  return index;
}

namespace detail {

template <typename Scalar, typename Derived>
Neighbor<Scalar> scan_bucket(const Matrix<Scalar>& data, const std::vector<Index>& bucket,
                             const Eigen::MatrixBase<Derived>& q, OpCounter* counter) {
  Neighbor<Scalar> best{-1, std::numeric_limits<Scalar>::infinity()};
  for (Index n : bucket) {
    const Scalar d = (data.row(n) - q.transpose()).squaredNorm();
    if (d < best.distance || (d == best.distance && n < best.index)) best = {n, d};
  }
  if (counter) counter->add(static_cast<std::uint64_t>(bucket.size()) * static_cast<std::uint64_t>(data.cols()));
  best.distance = std::sqrt(best.distance);
  return best;
}

}  // namespace detail

/// Routes q to its nearest centroid (through the factor chain for a
/// factorized model) and searches that cluster exactly. An empty cluster
/// hands the query to the next-nearest centroid that has points.
template <typename Scalar, typename Derived>
Neighbor<Scalar> query_1nn(const ClusterIndex<Scalar>& index, const Eigen::MatrixBase<Derived>& q,
                           OpCounter* counter = nullptr) {
  if (!index.data || index.data->rows() == 0) throw EmptyIndex("query_1nn: index holds no points");
  if (q.size() != index.data->cols())
    throw DimensionMismatch("query_1nn: query has " + std::to_string(q.size()) + " entries, data has " +
                            std::to_string(index.data->cols()) + " features");
  const Vector<Scalar> x = q.derived();
  const Vector<Scalar> keys = detail::routing_keys(index.model, index.centroid_sq_norms, x, counter);
  const Index K = keys.size();
  std::vector<Index> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return keys(a) < keys(b); });
  for (Index k : order) {
    const auto& bucket = index.buckets[static_cast<std::size_t>(k)];
    if (!bucket.empty()) return detail::scan_bucket(*index.data, bucket, x, counter);
  }
  throw EmptyIndex("query_1nn: every bucket is empty");
}

/// Exact nearest row of data; ties go to the smallest index.
template <typename Scalar, typename Derived>
Neighbor<Scalar> brute_force_1nn(const Matrix<Scalar>& data, const Eigen::MatrixBase<Derived>& q,
                                 OpCounter* counter = nullptr) {
  if (data.rows() == 0) throw EmptyIndex("brute_force_1nn: no points");
  if (q.size() != data.cols()) throw DimensionMismatch("brute_force_1nn: query dimension mismatch");
  std::vector<Index> all(static_cast<std::size_t>(data.rows()));
  std::iota(all.begin(), all.end(), Index(0));
  return detail::scan_bucket(data, all, Vector<Scalar>(q.derived()), counter);
}

struct Classification {
  std::vector<int> predicted;
  double accuracy = 0;
  std::uint64_t ops = 0;
};

namespace detail {

inline Classification score_predictions(std::vector<int> predicted, const std::vector<int>& truth,
                                        std::uint64_t ops) {
  if (predicted.size() != truth.size()) throw DimensionMismatch("classify_1nn: label count != query count");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  const double acc = truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
  return {std::move(predicted), acc, ops};
}

}  // namespace detail

/// Labels every query with the label of its routed nearest neighbour.
template <typename Scalar>
Classification classify_1nn(const ClusterIndex<Scalar>& index, const std::vector<int>& train_labels,
                            const Matrix<Scalar>& queries, const std::vector<int>& query_labels) {
  if (static_cast<Index>(train_labels.size()) != index.size())
    throw DimensionMismatch("classify_1nn: train label count != indexed points");
  OpCounter counter;
  std::vector<int> predicted(static_cast<std::size_t>(queries.rows()));
  for (Index i = 0; i < queries.rows(); ++i)
    predicted[static_cast<std::size_t>(i)] =
        train_labels[static_cast<std::size_t>(query_1nn(index, queries.row(i).transpose(), &counter).index)];
  return detail::score_predictions(std::move(predicted), query_labels, counter.multiply_adds());
}

template <typename Scalar>
Classification classify_1nn(const Matrix<Scalar>& train, const std::vector<int>& train_labels,
                            const Matrix<Scalar>& queries, const std::vector<int>& query_labels) {
  if (static_cast<Index>(train_labels.size()) != train.rows())
    throw DimensionMismatch("classify_1nn: train label count != rows");
  OpCounter counter;
  std::vector<int> predicted(static_cast<std::size_t>(queries.rows()));
  for (Index i = 0; i < queries.rows(); ++i)
    predicted[static_cast<std::size_t>(i)] =
        train_labels[static_cast<std::size_t>(brute_force_1nn(train, queries.row(i).transpose(), &counter).index)];
  return detail::score_predictions(std::move(predicted), query_labels, counter.multiply_adds());
}

}  // namespace fastcluster
