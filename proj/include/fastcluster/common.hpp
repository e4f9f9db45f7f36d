#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fastcluster {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using IndexVector = Eigen::Matrix<Index, Eigen::Dynamic, 1>;

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FASTCLUSTER_DEFINE_ERROR(Name)        \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

FASTCLUSTER_DEFINE_ERROR(DimensionMismatch);
FASTCLUSTER_DEFINE_ERROR(IndexOutOfRange);
FASTCLUSTER_DEFINE_ERROR(DuplicateEntry);
FASTCLUSTER_DEFINE_ERROR(LevelTooLarge);
FASTCLUSTER_DEFINE_ERROR(ZeroMatrix);
FASTCLUSTER_DEFINE_ERROR(InfeasibleInit);
FASTCLUSTER_DEFINE_ERROR(ShapeChainMismatch);
FASTCLUSTER_DEFINE_ERROR(SingularWeight);
FASTCLUSTER_DEFINE_ERROR(DegenerateLandmarks);
FASTCLUSTER_DEFINE_ERROR(EmptyIndex);
FASTCLUSTER_DEFINE_ERROR(BadMagic);
FASTCLUSTER_DEFINE_ERROR(TruncatedFile);
FASTCLUSTER_DEFINE_ERROR(InvalidConfig);
FASTCLUSTER_DEFINE_ERROR(ParseError);

#undef FASTCLUSTER_DEFINE_ERROR

/// Multiply-add accumulator. Each concurrent task owns its own counter.
class OpCounter {
 public:
  void add(std::uint64_t n) noexcept { multiply_adds_ += n; }
  std::uint64_t multiply_adds() const noexcept { return multiply_adds_; }
  void reset() noexcept { multiply_adds_ = 0; }

 private:
  std::uint64_t multiply_adds_ = 0;
};

}  // namespace fastcluster
