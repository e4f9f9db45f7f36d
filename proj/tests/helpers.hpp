#pragma once

#include "fastcluster/fastcluster.hpp"
#include "oracles.hpp"

#include <doctest.h>

namespace testing_support {

using namespace fastcluster;

inline SparseFactor<double> factor_from(long rows, long cols, const std::vector<std::tuple<long, long, double>>& entries) {
  std::vector<Triplet<double>> t;
  for (const auto& [r, c, v] : entries) t.push_back({r, c, v});
  return SparseFactor<double>::from_triplets(rows, cols, std::move(t));
}

// The exact 2^p Hadamard as p butterfly factors.
inline std::vector<SparseFactor<double>> hadamard_butterfly(int p) {
  std::vector<SparseFactor<double>> factors;
  const long n = 1L << p;
  for (int s = p - 1; s >= 0; --s) factors.push_back(factor_from(n, n, oracle::butterfly_stage(p, s)));
  return factors;
}

inline double max_abs(const MatrixXd& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

inline Dataset blobs(Index n, Index d, Index centers, double std, std::uint64_t seed) {
  BlobsSpec spec;
  spec.n_samples = n;
  spec.n_features = d;
  spec.n_centers = centers;
  spec.center_std = std;
  spec.seed = seed;
  return make_blobs(spec);
}

}  // namespace testing_support
