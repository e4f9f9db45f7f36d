#include "helpers.hpp"

#include <algorithm>
#include <set>

using namespace fastcluster;
using namespace testing_support;

namespace {

std::set<std::pair<Index, Index>> support_of(const SparseFactor<double>& S) {
  std::set<std::pair<Index, Index>> out;
  for (const auto& t : S.triplets()) out.insert({t.row, t.col});
  return out;
}

// Indices of the `level` largest |entries| of a row or column, ties to the smaller index.
std::vector<Index> top_by_sort(const VectorXd& line, Index level) {
  std::vector<Index> idx;
  for (Index i = 0; i < line.size(); ++i)
    if (line(i) != 0) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    const double ma = std::abs(line(a)), mb = std::abs(line(b));
    return ma != mb ? ma > mb : a < b;
  });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(level)));
  return idx;
}

void check_feasible(const std::vector<SparseFactor<double>>& factors,
                    const std::vector<SparsityConstraint<double>>& constraints, bool unit_norm) {
  REQUIRE(factors.size() == constraints.size());
  for (std::size_t q = 0; q < factors.size(); ++q) {
    const auto& S = factors[q];
    const auto& c = constraints[q];
    CHECK(S.rows() == c.rows);
    CHECK(S.cols() == c.cols);
    if (c.is_fixed()) continue;
    if (unit_norm) CHECK(std::abs(S.frobenius_norm() - 1.0) <= 1e-12);
    const auto cols = S.col_nnz();
    for (Index r = 0; r < S.rows(); ++r) CHECK(S.row_nnz(r) >= std::min(c.level, S.cols()));
    for (Index n : cols) CHECK(n >= std::min(c.level, S.rows()));
  }
}

double relative_error(const MatrixXd& U, const PalmState<double>& s) { return std::sqrt(objective_eq4(U, s) / U.squaredNorm()); }

}  // namespace

TEST_SUITE("projection") {
  TEST_CASE("support already at the level is kept") {
    const auto S = factor_from(16, 16, oracle::butterfly_stage(4, 2));
    const auto P = project_sparse(S.to_dense(), 2);
    CHECK(P == S);
  }

  TEST_CASE("3x3 row and column maxima") {
    MatrixXd D(3, 3);
    D << 3, 1, 0, 0, 2, 0, 0, 0, 1;
    const auto P = project_sparse(D, 1);
    CHECK(support_of(P) == std::set<std::pair<Index, Index>>{{0, 0}, {1, 1}, {2, 2}});
    CHECK(P.coeff(0, 0) == 3.0);
  }

  TEST_CASE("random 8x8 level 2 against sorting") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const MatrixXd D = oracle::random_matrix(8, 8, seed);
      const auto P = project_sparse(D, 2);
      std::set<std::pair<Index, Index>> expect;
      for (Index r = 0; r < 8; ++r)
        for (Index c : top_by_sort(D.row(r).transpose(), 2)) expect.insert({r, c});
      for (Index c = 0; c < 8; ++c)
        for (Index r : top_by_sort(D.col(c), 2)) expect.insert({r, c});
      CHECK(support_of(P) == expect);
      for (const auto& t : P.triplets()) CHECK(t.value == D(t.row, t.col));
    }
  }

  TEST_CASE("ties resolve to the smaller index") {
    const auto P = project_sparse(MatrixXd::Ones(3, 3), 1);
    CHECK(support_of(P) == std::set<std::pair<Index, Index>>{{0, 0}, {1, 0}, {2, 0}, {0, 1}, {0, 2}});
  }

  TEST_CASE("idempotent") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto P = project_sparse(oracle::random_matrix(9, 7, seed), 3);
      CHECK(project_sparse(P.to_dense(), 3) == P);
    }
  }

  TEST_CASE("level checks") {
    CHECK_THROWS_AS(project_sparse(MatrixXd::Ones(3, 4), 4), LevelTooLarge);
    CHECK_THROWS_AS(project_sparse(MatrixXd::Ones(3, 4), 0), InvalidConfig);
    CHECK_THROWS_AS(SparsityConstraint<double>::projected(4, 2, 3), LevelTooLarge);
  }

  TEST_CASE("normalize") {
    const auto [unit, scale] = normalize_frobenius(SparseFactor<double>::identity(4));
    CHECK(scale == 2.0);
    CHECK(unit.to_dense() == 0.5 * MatrixXd::Identity(4, 4));
    CHECK_THROWS_AS(normalize_frobenius(SparseFactor<double>(3, 3)), ZeroMatrix);
    const auto entries = oracle::random_entries(6, 5, 11, 4);
    const auto [u2, s2] = normalize_frobenius(factor_from(6, 5, entries));
    double direct = 0;
    for (const auto& e : entries) direct += std::get<2>(e) * std::get<2>(e);
    CHECK(std::abs(s2 - std::sqrt(direct)) <= 1e-12);
    CHECK(std::abs(u2.frobenius_norm() - 1.0) <= 1e-12);
  }
}

TEST_SUITE("spectral_norm_power") {
  TEST_CASE("identity and diagonal") {
    const std::vector<SparseFactor<double>> id{SparseFactor<double>::identity(5), SparseFactor<double>::identity(5)};
    CHECK(std::abs(spectral_norm_power<double>(id, 30, 0) - 1.0) <= 1e-6);
    const std::vector<SparseFactor<double>> diag{SparseFactor<double>::diagonal(Eigen::Vector3d(3, -1, 0.5))};
    CHECK(std::abs(spectral_norm_power<double>(diag, 30, 0) - 3.0) <= 1e-6);
    const std::vector<SparseFactor<double>> zero{SparseFactor<double>(4, 4)};
    CHECK(spectral_norm_power<double>(zero, 30, 0) == 0.0);
    CHECK(spectral_norm_power<double>({}, 30, 0) == 1.0);
  }

  TEST_CASE("two-factor 10x10 against dense power iteration") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto a = oracle::random_entries(10, 10, 30, seed), b = oracle::random_entries(10, 10, 30, seed + 7);
      const std::vector<SparseFactor<double>> chain{factor_from(10, 10, a), factor_from(10, 10, b)};
      const double expect =
          oracle::dense_power_norm(oracle::matmul(oracle::dense_from_entries(10, 10, a), oracle::dense_from_entries(10, 10, b)));
      const double est = spectral_norm_power<double>(chain, 1000, seed);
      CHECK(std::abs(est - expect) <= 1e-6 * expect);
    }
  }

  TEST_CASE("default iteration count is close from below") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const long r = 2 + static_cast<long>(rng() % 31), c = 2 + static_cast<long>(rng() % 31);
      const auto entries = oracle::random_entries(r, c, r * c / 2, rng());
      const std::vector<SparseFactor<double>> chain{factor_from(r, c, entries)};
      const double expect = oracle::dense_power_norm(oracle::dense_from_entries(r, c, entries));
      const double est = spectral_norm_power<double>(chain, 30, 0);
      CHECK(est <= expect * (1 + 1e-12));
      CHECK(est >= (1 - 1e-4) * expect);
    }
  }

  TEST_CASE("deterministic for a seed") {
    const std::vector<SparseFactor<double>> chain{factor_from(12, 9, oracle::random_entries(12, 9, 40, 1))};
    CHECK(spectral_norm_power<double>(chain, 7, 42) == spectral_norm_power<double>(chain, 7, 42));
  }
}

TEST_SUITE("palm4msa") {
  TEST_CASE("identity target is a fixed point") {
    const auto constraints = fast_operator_constraints<double>(8, 8, 3, 2);
    const std::vector<SparseFactor<double>> init(3, SparseFactor<double>::identity(8));
    const auto state = palm4msa<double>(MatrixXd::Identity(8, 8), constraints, init, PalmConfig{});
    for (double v : state.objective_trace) CHECK(v <= 1e-24);
    CHECK(objective_eq4(MatrixXd(MatrixXd::Identity(8, 8)), state) <= 1e-24);
  }

  TEST_CASE("exact Hadamard butterfly stays exact") {
    const MatrixXd H = oracle::sylvester_hadamard(16);
    const auto constraints = fast_operator_constraints<double>(16, 16, 4, 2);
    std::vector<SparseFactor<double>> init;
    for (const auto& f : hadamard_butterfly(4)) init.push_back(normalize_frobenius(f).first);
    const auto state = palm4msa<double>(H, constraints, init, PalmConfig{});
    for (double v : state.objective_trace) CHECK(v <= 1e-10);
    CHECK(objective_eq4(H, state) <= 1e-10);
  }

  TEST_CASE("random 32x16 target improves on its start") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const MatrixXd U = oracle::random_matrix(32, 16, seed);
      const auto constraints = fast_operator_constraints<double>(32, 16, 4, 4);
      const auto start = random_feasible_operator<double>(32, 16, 4, 4, seed + 10);
      std::vector<SparseFactor<double>> init(start.factors().begin(), start.factors().end());
      const double init_objective = (U - materialize(start)).squaredNorm();
      const auto state = palm4msa<double>(U, constraints, init, PalmConfig{});
      CHECK(objective_eq4(U, state) < init_objective);
      CHECK(objective_eq4(U, state) < U.squaredNorm());
      CHECK(std::abs(objective_eq4(U, state) - state.objective_trace.back()) <= 1e-9 * U.squaredNorm());
    }
  }

  TEST_CASE("constraints hold and the trace never rises") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const MatrixXd U = oracle::random_matrix(16, 16, 100 + seed);
      const auto constraints = fast_operator_constraints<double>(16, 16, 4, 2);
      PalmConfig cfg;
      cfg.max_iterations = 60;
      auto state = palm4msa<double>(U, constraints, cfg);
      for (std::size_t t = 1; t < state.objective_trace.size(); ++t)
        CHECK(state.objective_trace[t] <= state.objective_trace[t - 1] * (1 + 1e-9));
      // Undo the folded lambda before checking the unit-norm constraint.
      state.factors.front() = state.factors.front().scaled(1.0 / state.lambda);
      check_feasible(state.factors, constraints, true);
    }
  }

  TEST_CASE("fixed leading factor is untouched") {
    const MatrixXd U = oracle::random_matrix(8, 8, 5);
    VectorXd w(8);
    w << 1, 2, 3, 4, 1, 2, 3, 4;
    const auto fixed = SparseFactor<double>::diagonal(w.cwiseSqrt());
    auto constraints = fast_operator_constraints<double>(8, 8, 3, 2);
    constraints.insert(constraints.begin(), SparsityConstraint<double>::fixed(fixed));
    auto init = default_init(constraints);
    PalmConfig cfg;
    cfg.max_iterations = 20;
    const auto state = palm4msa<double>(U, constraints, init, cfg);
    CHECK(state.factors.front() == fixed);
    for (std::size_t t = 1; t < state.objective_trace.size(); ++t)
      CHECK(state.objective_trace[t] <= state.objective_trace[t - 1] * (1 + 1e-9));
  }

  TEST_CASE("zero target") {
    const auto state = palm4msa<double>(MatrixXd::Zero(4, 4), fast_operator_constraints<double>(4, 4, 2, 1), PalmConfig{});
    CHECK(state.lambda == 0.0);
    CHECK(materialize(FastOperator<double>(state.factors)) == MatrixXd::Zero(4, 4));
  }

  TEST_CASE("input errors") {
    const MatrixXd U = MatrixXd::Ones(4, 4);
    const auto constraints = fast_operator_constraints<double>(4, 4, 2, 1);
    CHECK_THROWS_AS(palm4msa<double>(U, constraints, {SparseFactor<double>::identity(4)}, PalmConfig{}), ShapeChainMismatch);
    CHECK_THROWS_AS(palm4msa<double>(U, constraints, {SparseFactor<double>::identity(4), SparseFactor<double>(4, 4)},
                                     PalmConfig{}),
                    InfeasibleInit);
    CHECK_THROWS_AS(palm4msa<double>(MatrixXd::Ones(4, 5), constraints, default_init(constraints), PalmConfig{}),
                    ShapeChainMismatch);
    PalmConfig bad;
    bad.step_safety = 1.0;
    CHECK_THROWS_AS(palm4msa<double>(U, constraints, bad), InvalidConfig);
  }

  TEST_CASE("rectangular layouts") {
    const auto wide = fast_operator_constraints<double>(4, 16, 2, 3);
    CHECK(wide.front().rows == 4);
    CHECK(wide.front().cols == 4);
    CHECK(wide.back().cols == 16);
    const auto tall = fast_operator_constraints<double>(16, 4, 3, 5);
    CHECK(tall.front().rows == 16);
    CHECK(tall.front().cols == 4);
    CHECK(tall.back().level == 4);
  }
}

TEST_SUITE("hierarchical_palm4msa") {
  TEST_CASE("identity with two factors") {
    const auto state = hierarchical_palm4msa<double>(MatrixXd::Identity(4, 4), 2, 1, PalmConfig{});
    CHECK(objective_eq4(MatrixXd(MatrixXd::Identity(4, 4)), state) <= 1e-20);
    CHECK_THROWS_AS(hierarchical_palm4msa<double>(MatrixXd::Identity(4, 4), 1, 1, PalmConfig{}), InvalidConfig);
  }

  TEST_CASE("random 8x8 output satisfies the final constraints") {
    const MatrixXd U = oracle::random_matrix(8, 8, 2);
    auto state = hierarchical_palm4msa<double>(U, 3, 2, PalmConfig{});
    state.factors.front() = state.factors.front().scaled(1.0 / state.lambda);
    check_feasible(state.factors, fast_operator_constraints<double>(8, 8, 3, 2), true);
  }

  TEST_CASE("Hadamard: hierarchical beats single-shot from random starts") {
    const MatrixXd H = oracle::sylvester_hadamard(16);
    const auto constraints = fast_operator_constraints<double>(16, 16, 4, 2);
    std::vector<double> hier, single;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      PalmConfig cfg;
      cfg.seed = seed;
      hier.push_back(relative_error(H, hierarchical_palm4msa<double>(H, 4, 2, cfg)));
      const auto start = random_feasible_operator<double>(16, 16, 4, 2, seed);
      single.push_back(relative_error(
          H, palm4msa<double>(H, constraints, {start.factors().begin(), start.factors().end()}, cfg)));
    }
    std::sort(hier.begin(), hier.end());
    std::sort(single.begin(), single.end());
    MESSAGE("median relative error: hierarchical " << hier[2] << ", single-shot " << single[2]);
    CHECK(hier[2] <= single[2]);
  }

  TEST_CASE("residual schedule") {
    CHECK(hierarchical_residual_level(2, 16, 1) == 8);
    CHECK(hierarchical_residual_level(2, 16, 3) == 2);
    CHECK(hierarchical_residual_level(5, 16, 2) == 5);
  }
}
