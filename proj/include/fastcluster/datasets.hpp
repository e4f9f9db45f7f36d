#pragma once

#include "fastcluster/common.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fastcluster {

/// Row-per-sample data with optional integer labels (empty when unlabeled).
struct Dataset {
  MatrixXd X;
  std::vector<int> labels;

  Index size() const { return X.rows(); }
  Index dim() const { return X.cols(); }
  bool labeled() const { return !labels.empty(); }
};

struct BlobsSpec {
  Index n_samples = 1000;
  Index n_features = 2;
  Index n_centers = 3;
  double center_std = 1.0;
  double box_half_width = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Centers uniform in the box, points = center + N(0, std^2 I). Samples are split
/// as evenly as possible between centers (the first n_samples % n_centers
/// centers get one extra) and the rows are then shuffled. Labels are center ids.
Dataset make_blobs(const BlobsSpec& spec);

/// With `label_last`, the final column is parsed as an integer label.
Dataset load_csv(const std::string& path, bool label_last = false);
void save_csv(const std::string& path, const Dataset& data, bool label_last = false);
void save_matrix_csv(const std::string& path, const MatrixXd& M);

/// IDX images (magic 0x803) and labels (magic 0x801); pixels scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Seeded permutation; the first ceil(test_fraction * N) permuted rows are the test set.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Dense matrix from either a triplet file ("rows cols nnz" header) or a CSV.
MatrixXd load_matrix(const std::string& path);

}  // namespace fastcluster
