#pragma once

#include "fastcluster/fast_operator.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

namespace fastcluster {

enum class ConstraintKind { ProjectedSparse, FixedSingleton };

/// One constraint set E_q: either "at least `level` nonzeros per row and per
/// column, unit Frobenius norm" or a single fixed matrix.
template <typename Scalar>
struct SparsityConstraint {
  ConstraintKind kind = ConstraintKind::ProjectedSparse;
  Index rows = 0;
  Index cols = 0;
  Index level = 1;
  SparseFactor<Scalar> fixed_matrix;
  bool unit_frobenius = true;

  static SparsityConstraint projected(Index rows, Index cols, Index level) {
    if (rows <= 0 || cols <= 0) throw InvalidConfig("SparsityConstraint: shape must be positive");
    if (level < 1) throw InvalidConfig("SparsityConstraint: sparsity level must be >= 1");
    if (level > std::min(rows, cols))
      throw LevelTooLarge("SparsityConstraint: level " + std::to_string(level) + " exceeds " +
                          std::to_string(rows) + "x" + std::to_string(cols) + " capacity");
    return {ConstraintKind::ProjectedSparse, rows, cols, level, {}, true};
  }

  static SparsityConstraint fixed(SparseFactor<Scalar> matrix) {
    const Index r = matrix.rows(), c = matrix.cols();
    return {ConstraintKind::FixedSingleton, r, c, 0, std::move(matrix), false};
  }

  bool is_fixed() const noexcept { return kind == ConstraintKind::FixedSingleton; }
};

struct PalmConfig {
  int max_iterations = 300;
  double tolerance = 1e-6;
  double step_safety = 1.001;
  int power_iters = 30;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iterations < 1) throw InvalidConfig("PalmConfig: max_iterations must be >= 1");
    if (!(tolerance > 0)) throw InvalidConfig("PalmConfig: tolerance must be > 0");
    if (!(step_safety > 1)) throw InvalidConfig("PalmConfig: step_safety must be > 1");
    if (power_iters < 1) throw InvalidConfig("PalmConfig: power_iters must be >= 1");
  }
};

/// Result of a factorization. `factors` already carry lambda (folded into the
/// leftmost non-fixed factor); `lambda` records the folded value.
template <typename Scalar>
struct PalmState {
  std::vector<SparseFactor<Scalar>> factors;
  Scalar lambda = Scalar(1);
  std::vector<Scalar> objective_trace;
  int iterations = 0;

  Matrix<Scalar> product() const { return chain_product<Scalar>(std::span<const SparseFactor<Scalar>>(factors)); }
};

namespace detail {

template <typename Scalar>
struct RankedEntry {
  Scalar magnitude;
  Index other;  // column for row scans, row for column scans
};

// Largest magnitude first; ties go to the smaller index.
template <typename Scalar>
void keep_top(std::vector<RankedEntry<Scalar>>& entries, Index level) {
  const auto keep = std::min<std::size_t>(entries.size(), static_cast<std::size_t>(level));
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep), entries.end(),
                    [](const auto& a, const auto& b) {
                      if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
                      return a.other < b.other;
                    });
  entries.resize(keep);
}

}  // namespace detail

/// Support = union of the `level` largest-magnitude entries of every row and of
/// every column; kept values are copied unchanged (no normalization here).
template <typename Derived>
SparseFactor<typename Derived::Scalar> project_sparse(const Eigen::MatrixBase<Derived>& D, Index level) {
  using Scalar = typename Derived::Scalar;
  if (level < 1) throw InvalidConfig("project_sparse: level must be >= 1");
  if (level > std::min(D.rows(), D.cols()))
    throw LevelTooLarge("project_sparse: level " + std::to_string(level) + " exceeds " + std::to_string(D.rows()) +
                        "x" + std::to_string(D.cols()) + " capacity");
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(D.rows(), D.cols(), false);
  std::vector<detail::RankedEntry<Scalar>> entries;
  for (Index r = 0; r < D.rows(); ++r) {
    entries.clear();
    for (Index c = 0; c < D.cols(); ++c)
      if (D(r, c) != Scalar(0)) entries.push_back({std::abs(D(r, c)), c});
    detail::keep_top(entries, level);
    for (const auto& e : entries) keep(r, e.other) = true;
  }
  for (Index c = 0; c < D.cols(); ++c) {
    entries.clear();
    for (Index r = 0; r < D.rows(); ++r)
      if (D(r, c) != Scalar(0)) entries.push_back({std::abs(D(r, c)), r});
    detail::keep_top(entries, level);
    for (const auto& e : entries) keep(e.other, c) = true;
  }
  return SparseFactor<Scalar>::from_dense(keep.select(D.derived(), Matrix<Scalar>::Zero(D.rows(), D.cols())));
}

/// Returns S / ||S||_F together with ||S||_F.
template <typename Scalar>
std::pair<SparseFactor<Scalar>, Scalar> normalize_frobenius(const SparseFactor<Scalar>& S) {
  const Scalar norm = S.frobenius_norm();
  if (norm == Scalar(0)) throw ZeroMatrix("normalize_frobenius: matrix is zero");
  return {S.scaled(Scalar(1) / norm), norm};
}

/// Largest singular value of the chain product, by power iteration on op^T op
/// through the factors. Deterministic for a given seed. Empty chain -> 1.
///
/// The iterates are kept orthonormal and the estimate is the top Rayleigh-Ritz
/// value over their span (Lanczos), which never exceeds the true value and
/// beats the last-iterate estimate when the top singular values are close.
namespace detail {

// y = S x and y = S^T x into caller-owned storage.
template <typename Scalar>
void spmv_into(const SparseFactor<Scalar>& S, const Scalar* x, Scalar* y) {
  const auto cols = S.col_indices();
  const auto vals = S.values();
  for (Index r = 0; r < S.rows(); ++r) {
    Scalar acc(0);
    for (Index k = S.row_begin(r); k < S.row_end(r); ++k) acc += vals[k] * x[cols[k]];
    y[r] = acc;
  }
}

template <typename Scalar>
void spmv_transposed_into(const SparseFactor<Scalar>& S, const Scalar* x, Scalar* y) {
  const auto cols = S.col_indices();
  const auto vals = S.values();
  std::fill(y, y + S.cols(), Scalar(0));
  for (Index r = 0; r < S.rows(); ++r)
    for (Index k = S.row_begin(r); k < S.row_end(r); ++k) y[cols[k]] += vals[k] * x[r];
}

// Largest eigenvalue of the symmetric tridiagonal (diag, sub) by Sturm
// bisection. Returns the lower end of the final bracket. `floor` must be a
// known lower bound (a Ritz value from a leading block works).
template <typename Scalar>
Scalar tridiagonal_max_eigenvalue(Eigen::Ref<const Vector<Scalar>> diag, Eigen::Ref<const Vector<Scalar>> sub,
                                  Scalar floor = -std::numeric_limits<Scalar>::infinity()) {
  const Index m = diag.size();
  if (m == 1) return diag(0);
  Scalar lo = std::max(diag.maxCoeff(), floor), hi = diag.maxCoeff();
  for (Index i = 0; i < m; ++i) {
    Scalar radius(0);
    if (i > 0) radius += std::abs(sub(i - 1));
    if (i + 1 < m) radius += std::abs(sub(i));
    hi = std::max(hi, diag(i) + radius);
  }
  hi = std::max(hi, lo);
  // count of eigenvalues below x
  auto below = [&](Scalar x) {
    Index count = 0;
    Scalar d(1);
    for (Index i = 0; i < m; ++i) {
      d = diag(i) - x - (i > 0 ? sub(i - 1) * sub(i - 1) / d : Scalar(0));
      if (d == Scalar(0)) d = -std::numeric_limits<Scalar>::min();
      if (d < Scalar(0)) ++count;
    }
    return count;
  };
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  for (int it = 0; it < 200 && hi - lo > Scalar(4) * eps * std::max(std::abs(lo), std::abs(hi)); ++it) {
    const Scalar mid = lo + (hi - lo) / 2;
    if (below(mid) == m) hi = mid;
    else lo = mid;
  }
  return lo;
}

}  // namespace detail

template <typename Scalar>
Scalar spectral_norm_power(std::span<const SparseFactor<Scalar>> chain, int iters, std::uint64_t seed) {
  if (chain.empty()) return Scalar(1);
  const Index n = chain.back().cols();
  Index width = n;
  for (const auto& f : chain) width = std::max(width, f.rows());
  const Index steps = std::min<Index>(std::max(iters, 1), n);

  Matrix<Scalar> basis(n, steps);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (Index i = 0; i < n; ++i) basis(i, 0) = static_cast<Scalar>(normal(rng));
  if (basis.col(0).norm() == Scalar(0)) basis.col(0).setOnes();
  basis.col(0).normalize();

  // op^T op q, ping-ponging through two buffers
  Vector<Scalar> buf_a(width), buf_b(width), w(n), coeff(steps);
  auto gram = [&](Index j) {
    const Scalar* src = basis.col(j).data();
    Scalar* bufs[2] = {buf_a.data(), buf_b.data()};
    int cur = 0;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it, cur ^= 1) {
      detail::spmv_into(*it, src, bufs[cur]);
      src = bufs[cur];
    }
    for (std::size_t i = 0; i < chain.size(); ++i, cur ^= 1) {
      Scalar* dst = i + 1 == chain.size() ? w.data() : bufs[cur];
      detail::spmv_transposed_into(chain[i], src, dst);
      src = dst;
    }
  };

  Vector<Scalar> alpha(steps), beta(steps);
  Index m = 0;
  Scalar top(0);
  auto top_ritz = [&]() -> Scalar {
    return detail::tridiagonal_max_eigenvalue<Scalar>(alpha.head(m), beta.head(m - 1), top);
  };
  while (m < steps) {
    gram(m);
    alpha(m) = basis.col(m).dot(w);
    ++m;
    if (m % 5 == 0 && m + 5 <= steps) {
      const Scalar previous = top;
      top = top_ritz();
      if (m > 5 && top - previous <= Scalar(1e-12) * top) break;
    }
    if (m == steps) break;
    const Scalar scale = w.norm();
    for (int pass = 0; pass < 2; ++pass) {
      coeff.head(m).noalias() = basis.leftCols(m).transpose() * w;
      w.noalias() -= basis.leftCols(m) * coeff.head(m);
    }
    const Scalar b = w.norm();
    if (b <= Scalar(1e-10) * scale) break;
    beta(m - 1) = b;
    basis.col(m) = w / b;
  }
  top = top_ritz();
  return top > Scalar(0) ? std::sqrt(top) : Scalar(0);
}

/// Data term ||U - prod S_q||_F^2 of a factorization (lambda already folded).
template <typename Scalar>
Scalar objective_eq4(const Matrix<Scalar>& U, const PalmState<Scalar>& state) {
  return (U - state.product()).squaredNorm();
}

/// Deterministic feasible start: square factors start at identity, the
/// rectangular one is zero except its leading diagonal, fixed factors are themselves.
template <typename Scalar>
std::vector<SparseFactor<Scalar>> default_init(const std::vector<SparsityConstraint<Scalar>>& constraints) {
  std::vector<SparseFactor<Scalar>> init;
  init.reserve(constraints.size());
  for (const auto& c : constraints) {
    if (c.is_fixed()) {
      init.push_back(c.fixed_matrix);
      continue;
    }
    std::vector<Triplet<Scalar>> diag;
    for (Index i = 0; i < std::min(c.rows, c.cols); ++i) diag.push_back({i, i, Scalar(1)});
    init.push_back(SparseFactor<Scalar>::from_triplets(c.rows, c.cols, std::move(diag)));
  }
  return init;
}

/// Constraint layout for a K x D operator with Q factors: every factor is
/// A x A (A = min(K, D)) except the leftmost (K x A, when K > D) or the
/// rightmost (A x D, when D > K). Levels are clamped to each factor's capacity.
template <typename Scalar>
std::vector<SparsityConstraint<Scalar>> fast_operator_constraints(Index K, Index D, int Q, Index level) {
  if (K < 1 || D < 1) throw InvalidConfig("fast_operator_constraints: shape must be positive");
  if (Q < 1) throw InvalidConfig("fast_operator_constraints: need at least one factor");
  if (level < 1) throw InvalidConfig("fast_operator_constraints: sparsity level must be >= 1");
  const Index A = std::min(K, D);
  std::vector<SparsityConstraint<Scalar>> out;
  for (int q = 0; q < Q; ++q) {
    Index rows = A, cols = A;
    if (q == 0) rows = K;
    if (q == Q - 1) cols = D;
    out.push_back(SparsityConstraint<Scalar>::projected(rows, cols, std::min({level, rows, cols})));
  }
  return out;
}

/// Operator with the fast_operator_constraints layout whose factors are
/// projected, unit-norm Gaussian matrices.
template <typename Scalar>
FastOperator<Scalar> random_feasible_operator(Index K, Index D, int Q, Index level, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<SparseFactor<Scalar>> factors;
  for (const auto& c : fast_operator_constraints<Scalar>(K, D, Q, level)) {
    Matrix<Scalar> G(c.rows, c.cols);
    for (Index j = 0; j < c.cols; ++j)
      for (Index i = 0; i < c.rows; ++i) G(i, j) = static_cast<Scalar>(normal(rng));
    factors.push_back(normalize_frobenius(project_sparse(G, c.level)).first);
  }
  return FastOperator<Scalar>(std::move(factors));
}

namespace detail {

template <typename Scalar>
void check_palm_inputs(const Matrix<Scalar>& U, const std::vector<SparsityConstraint<Scalar>>& constraints,
                       const std::vector<SparseFactor<Scalar>>& init) {
  if (constraints.empty()) throw InvalidConfig("palm4msa: no factors requested");
  if (constraints.size() != init.size())
    throw ShapeChainMismatch("palm4msa: " + std::to_string(constraints.size()) + " constraints but " +
                             std::to_string(init.size()) + " initial factors");
  if (init.front().rows() != U.rows() || init.back().cols() != U.cols())
    throw ShapeChainMismatch("palm4msa: initial chain does not produce a " + std::to_string(U.rows()) + "x" +
                             std::to_string(U.cols()) + " matrix");
  for (std::size_t q = 0; q + 1 < init.size(); ++q)
    if (init[q].cols() != init[q + 1].rows())
      throw ShapeChainMismatch("palm4msa: initial factors " + std::to_string(q) + " and " + std::to_string(q + 1) +
                               " do not chain");
  bool any_free = false;
  for (std::size_t q = 0; q < init.size(); ++q) {
    const auto& c = constraints[q];
    if (init[q].rows() != c.rows || init[q].cols() != c.cols)
      throw InfeasibleInit("palm4msa: factor " + std::to_string(q) + " shape differs from its constraint");
    if (c.is_fixed()) {
      if (!(init[q] == c.fixed_matrix))
        throw InfeasibleInit("palm4msa: factor " + std::to_string(q) + " differs from its fixed matrix");
    } else {
      any_free = true;
      if (c.level < 1 || c.level > std::min(c.rows, c.cols))
        throw LevelTooLarge("palm4msa: factor " + std::to_string(q) + " level exceeds capacity");
      if (init[q].nnz() == 0) throw InfeasibleInit("palm4msa: factor " + std::to_string(q) + " is zero");
    }
  }
  if (!any_free) throw InvalidConfig("palm4msa: every factor is fixed");
}

template <typename Scalar>
Scalar frobenius_inner(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  return a.cwiseProduct(b).sum();
}

// Magnitude-selected support, unit norm. A zero result keeps the current factor.
template <typename Scalar>
SparseFactor<Scalar> project_free(const Matrix<Scalar>& D, const SparseFactor<Scalar>& current, Index level) {
  const SparseFactor<Scalar> selected = project_sparse(D, level);
  if (selected.nnz() == 0) return current;
  return normalize_frobenius(selected).first;
}

// Unit-norm projection of the gradient point D. The magnitude-selected support
// is used unless D restricted to the current support lands closer to D; the
// current factor is itself feasible, so the step never moves farther from D
// than staying put would.
template <typename Scalar>
SparseFactor<Scalar> project_step(const Matrix<Scalar>& D, const SparseFactor<Scalar>& current, Index level) {
  const SparseFactor<Scalar> selected = project_sparse(D, level);
  // ||D - P/||P|| ||^2 = ||D||^2 - 2 ||P|| + 1 for P = D restricted to a support.
  const Scalar selected_norm = selected.frobenius_norm();

  std::vector<Triplet<Scalar>> kept;
  kept.reserve(static_cast<std::size_t>(current.nnz()));
  for (Index r = 0; r < current.rows(); ++r)
    for (Index k = current.row_begin(r); k < current.row_end(r); ++k)
      kept.push_back({r, current.col_at(k), D(r, current.col_at(k))});
  SparseFactor<Scalar> restricted = SparseFactor<Scalar>::from_triplets(D.rows(), D.cols(), std::move(kept));
  const Scalar restricted_norm = restricted.frobenius_norm();

  if (selected_norm == Scalar(0) && restricted_norm == Scalar(0)) return current;
  if (restricted_norm > selected_norm) return normalize_frobenius(restricted).first;
  return normalize_frobenius(selected).first;
}

}  // namespace detail

/// Proximal alternating linearized minimization of ||U - lambda * prod S_q||_F^2
/// over factors constrained to their sets. Factors are swept right to left;
/// every product involving the neighbours of S_q goes through the sparse chains.
template <typename Scalar>
PalmState<Scalar> palm4msa(const Matrix<Scalar>& U, const std::vector<SparsityConstraint<Scalar>>& constraints,
                           std::vector<SparseFactor<Scalar>> init, const PalmConfig& config) {
  config.validate();
  detail::check_palm_inputs(U, constraints, init);
  const std::size_t Q = constraints.size();
  std::size_t first_free = 0;
  while (constraints[first_free].is_fixed()) ++first_free;

  PalmState<Scalar> state;
  state.factors = std::move(init);

  // Unit-norm every free factor and carry the norms in lambda, then pick the
  // best lambda for the starting support.
  Scalar lambda(1);
  for (std::size_t q = 0; q < Q; ++q) {
    if (constraints[q].is_fixed()) continue;
    auto [unit, norm] = normalize_frobenius(state.factors[q]);
    state.factors[q] = std::move(unit);
    lambda *= norm;
  }

  auto finish = [&](Scalar final_lambda) {
    state.lambda = final_lambda;
    state.factors[first_free] = state.factors[first_free].scaled(final_lambda);
    return state;
  };

  if (U.squaredNorm() == Scalar(0)) {
    state.objective_trace.push_back(Scalar(0));
    return finish(Scalar(0));
  }

  Scalar objective(0);
  {
    const Matrix<Scalar> Uhat = chain_product<Scalar>(std::span<const SparseFactor<Scalar>>(state.factors));
    const Scalar denom = Uhat.squaredNorm();
    const Scalar best = denom > Scalar(0) ? detail::frobenius_inner(U, Uhat) / denom : Scalar(0);
    // A start orthogonal to U would freeze every gradient at lambda = 0; keep the norms then.
    if (best != Scalar(0)) lambda = best;
    objective = (U - lambda * Uhat).squaredNorm();
  }
  state.objective_trace.push_back(objective);

  // One right-to-left pass over the free factors followed by the lambda update.
  // `guarded` restricts every projection so that it is never farther from the
  // gradient point than the current factor (plain PALM sufficient decrease).
  auto sweep = [&](std::vector<SparseFactor<Scalar>> factors, bool guarded) {
    const std::span<const SparseFactor<Scalar>> chain(factors);
    for (std::size_t q = Q; q-- > 0;) {
      const auto& constraint = constraints[q];
      if (constraint.is_fixed()) continue;
      const auto left = chain.subspan(0, q);
      const auto right = chain.subspan(q + 1);
      const Scalar sigma_left = spectral_norm_power<Scalar>(left, config.power_iters, config.seed);
      const Scalar sigma_right = spectral_norm_power<Scalar>(right, config.power_iters, config.seed + 1);
      const Scalar bound = lambda * lambda * sigma_left * sigma_left * sigma_right * sigma_right;

      Matrix<Scalar> D = factors[q].to_dense();
      if (bound > Scalar(0)) {
        const Scalar c = static_cast<Scalar>(config.step_safety) * bound;
        // S R, then L S R, without forming L or R.
        const Matrix<Scalar> SR = apply_chain_transposed<Scalar>(right, D.transpose()).transpose();
        Matrix<Scalar> residual = apply_chain<Scalar>(left, SR);
        residual *= lambda;
        residual -= U;
        const Matrix<Scalar> LtE = apply_chain_transposed<Scalar>(left, residual);
        const Matrix<Scalar> grad = apply_chain<Scalar>(right, LtE.transpose()).transpose();
        D -= (lambda / c) * grad;
      }
      factors[q] = guarded ? detail::project_step(D, factors[q], constraint.level)
                           : detail::project_free(D, factors[q], constraint.level);
    }
    Matrix<Scalar> product = chain_product<Scalar>(chain);
    const Scalar denom = product.squaredNorm();
    Scalar new_lambda = lambda;
    if (denom > Scalar(0)) new_lambda = detail::frobenius_inner(U, product) / denom;
    const Scalar value = (U - new_lambda * product).squaredNorm();
    return std::make_tuple(std::move(factors), new_lambda, value);
  };

  for (int it = 0; it < config.max_iterations; ++it) {
    auto [factors, new_lambda, value] = sweep(state.factors, false);
    if (value > objective) std::tie(factors, new_lambda, value) = sweep(state.factors, true);
    // The power-iteration bound can undershoot the true Lipschitz constant.
    if (value > objective) break;
    state.factors = std::move(factors);
    lambda = new_lambda;
    const Scalar previous = objective;
    objective = value;
    state.objective_trace.push_back(objective);
    state.iterations = it + 1;
    if (previous == Scalar(0) || std::abs(previous - objective) / previous < static_cast<Scalar>(config.tolerance))
      break;
  }
  return finish(lambda);
}

/// palm4msa from the deterministic default start.
template <typename Scalar>
PalmState<Scalar> palm4msa(const Matrix<Scalar>& U, const std::vector<SparsityConstraint<Scalar>>& constraints,
                           const PalmConfig& config) {
  return palm4msa(U, constraints, default_init(constraints), config);
}

/// Residual level used at split j (1-based) of the hierarchical variant.
inline Index hierarchical_residual_level(Index level, Index A, int split) {
  const Index denom = Index(1) << std::min(split, 62);
  return std::max(level, (A + denom - 1) / denom);
}

/// Hierarchical variant: peels factors off the right end of a residual one at a
/// time, each split followed by a global refinement over everything found so
/// far plus the residual (2 (Q - 1) palm4msa runs).
template <typename Scalar>
PalmState<Scalar> hierarchical_palm4msa(const Matrix<Scalar>& U, int Q, Index level, const PalmConfig& config) {
  if (Q < 2) throw InvalidConfig("hierarchical_palm4msa: needs Q >= 2");
  const Index K = U.rows(), D = U.cols();
  const Index A = std::min(K, D);
  const auto finals = fast_operator_constraints<Scalar>(K, D, Q, level);

  Matrix<Scalar> residual = U;
  std::vector<SparseFactor<Scalar>> peeled;  // factors p..Q-1, left to right
  PalmState<Scalar> out;
  for (int split = 1; split < Q; ++split) {
    const auto p = static_cast<std::size_t>(Q - split);
    const auto& right_constraint = finals[p];
    const Index resid_cols = right_constraint.rows;
    const auto resid_constraint =
        split == Q - 1 ? finals[0]
                       : SparsityConstraint<Scalar>::projected(
                             K, resid_cols, std::min({hierarchical_residual_level(level, A, split), K, resid_cols}));

    std::vector<SparsityConstraint<Scalar>> local{resid_constraint, right_constraint};
    PalmState<Scalar> split_state = palm4msa<Scalar>(residual, local, config);

    std::vector<SparsityConstraint<Scalar>> global{resid_constraint, right_constraint};
    std::vector<SparseFactor<Scalar>> global_init = split_state.factors;
    for (std::size_t i = 0; i < peeled.size(); ++i) {
      global.push_back(finals[p + 1 + i]);
      global_init.push_back(peeled[i]);
    }
    PalmState<Scalar> refined = palm4msa<Scalar>(U, global, std::move(global_init), config);

    residual = refined.factors.front().to_dense();
    peeled.assign(refined.factors.begin() + 1, refined.factors.end());
    out.objective_trace.insert(out.objective_trace.end(), refined.objective_trace.begin(),
                               refined.objective_trace.end());
    out.iterations += split_state.iterations + refined.iterations;
    out.lambda = refined.lambda;
    if (split == Q - 1) out.factors = std::move(refined.factors);
  }
  return out;
}

}  // namespace fastcluster
