#include "fastcluster/bench.hpp"

#include "fastcluster/ann_search.hpp"
#include "fastcluster/clustering.hpp"
#include "fastcluster/datasets.hpp"
#include "fastcluster/nystrom.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>
#include <tuple>

namespace fastcluster {

namespace {

const std::pair<ExperimentKind, const char*> kExperimentNames[] = {
    {ExperimentKind::ApplyTiming, "fig1_apply_timing"},
    {ExperimentKind::ObjectiveCurves, "fig2_objective_curves"},
    {ExperimentKind::AssignmentTiming, "fig3_assignment_timing"},
    {ExperimentKind::Nystrom, "fig4_nystrom"},
    {ExperimentKind::Knn, "tab_knn"},
};

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct GridPoint {
  Index D = 0;
  Index K = 0;
  Index sparsity = 0;
};

// Rows produced by one task are tagged with the grid point they belong to.
struct Emitter {
  std::string experiment;
  GridPoint point;
  std::int64_t seed;
  std::vector<ResultRow> rows;

  void add(const std::string& method, const std::string& metric, double value, std::uint64_t ops, double wall_ms,
           int iter = -1, Index sparsity = -1) {
    rows.push_back({experiment, point.D, point.K, sparsity < 0 ? point.sparsity : sparsity, method, iter, seed, metric,
                    value, 0.0, ops, wall_ms});
  }
};

Dataset blobs_for(const ExperimentSpec& spec, Index D, Index centers, std::uint64_t seed) {
  BlobsSpec b;
  b.n_samples = spec.n_samples;
  b.n_features = D;
  b.n_centers = centers;
  b.center_std = spec.center_std;
  b.seed = seed;
  return make_blobs(b);
}

QkConfig qk_config(const ExperimentSpec& spec, Index K, Index sparsity, std::uint64_t seed) {
  QkConfig cfg;
  cfg.K = K;
  cfg.sparsity_level = sparsity;
  cfg.max_outer_iterations = spec.max_outer_iterations;
  cfg.palm.max_iterations = spec.palm_iterations;
  cfg.palm.seed = seed;
  cfg.seed = seed;
  return cfg;
}

void apply_timing(const ExperimentSpec& spec, std::uint64_t seed, Emitter& out) {
  const Index D = out.point.D;
  const int Q = default_factor_count(D, D);
  const FastOperator<double> V = random_feasible_operator<double>(D, D, Q, out.point.sparsity, seed);
  const MatrixXd dense = materialize(V);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> normal;
  MatrixXd X(D, spec.n_vectors);
  for (Index j = 0; j < X.cols(); ++j)
    for (Index i = 0; i < D; ++i) X(i, j) = normal(rng);
  const double per_vector = static_cast<double>(spec.n_vectors);

  OpCounter dense_ops;
  auto start = Clock::now();
  const MatrixXd Yd = dense * X;
  const double dense_ms = ms_since(start);
  dense_ops.add(static_cast<std::uint64_t>(dense.size()) * static_cast<std::uint64_t>(X.cols()));

  OpCounter fast_ops;
  start = Clock::now();
  const MatrixXd Yf = fast_apply(V, X, &fast_ops);
  const double fast_ms = ms_since(start);

  out.add("dense", "ops_per_vector", static_cast<double>(dense_ops.multiply_adds()) / per_vector,
          dense_ops.multiply_adds(), dense_ms);
  out.add("fast", "ops_per_vector", static_cast<double>(fast_ops.multiply_adds()) / per_vector,
          fast_ops.multiply_adds(), fast_ms);
  out.add("fast", "max_abs_deviation", (Yd - Yf).cwiseAbs().maxCoeff(), 0, 0);
}

void objective_curves(const ExperimentSpec& spec, std::uint64_t seed, Emitter& out) {
  const Index D = out.point.D, K = out.point.K;
  const Dataset data = blobs_for(spec, D, K, seed);
  const MatrixXd init = sample_initial_centroids(data.X, K, seed);

  auto start = Clock::now();
  const ClusteringModel<double> km = lloyd_kmeans(data.X, K, init, 1e-6, spec.max_outer_iterations);
  const double km_ms = ms_since(start);
  for (std::size_t t = 0; t < km.objective_trace.size(); ++t)
    out.add("kmeans", "objective", km.objective_trace[t], km.stats[t].assign_ops,
            km.stats[t].assign_ms + km.stats[t].factorize_ms, static_cast<int>(t), 0);
  out.add("kmeans", "wall_total", km_ms, 0, km_ms, -1, 0);

  for (Index s : spec.sparsities) {
    const QkConfig cfg = qk_config(spec, K, std::min(s, std::min(K, D)), seed);
    start = Clock::now();
    const ClusteringModel<double> qk = qkmeans(data.X, cfg, init);
    const double qk_ms = ms_since(start);
    for (std::size_t t = 0; t < qk.objective_trace.size(); ++t)
      out.add("qkmeans", "objective", qk.objective_trace[t], qk.stats[t].assign_ops,
              qk.stats[t].assign_ms + qk.stats[t].factorize_ms, static_cast<int>(t), s);
    out.add("qkmeans", "nnz_total", static_cast<double>(qk.centroids_op.nnz()), 0, 0, -1, s);
    out.add("qkmeans", "final_ratio", qk.objective_trace.back() / km.objective_trace.back(), 0, 0, -1, s);
    out.add("qkmeans", "wall_total", qk_ms, 0, qk_ms, -1, s);
  }
}

void assignment_timing(const ExperimentSpec& spec, std::uint64_t seed, Emitter& out) {
  const Index D = out.point.D, K = out.point.K;
  const Dataset data = blobs_for(spec, D, std::min(K, spec.n_samples), seed);
  const MatrixXd centroids = sample_initial_centroids(data.X, K, seed);
  PalmConfig palm;
  palm.max_iterations = spec.palm_iterations;
  palm.seed = seed;
  const int Q = default_factor_count(K, D);
  auto start = Clock::now();
  const FastOperator<double> V(
      palm4msa<double>(centroids, fast_operator_constraints<double>(K, D, Q, out.point.sparsity), palm).factors);
  const double factorize_ms = ms_since(start);
  const double N = static_cast<double>(data.size());

  OpCounter dense_ops;
  start = Clock::now();
  assign_dense(data.X, centroids, &dense_ops);
  const double dense_ms = ms_since(start);
  OpCounter fast_ops;
  start = Clock::now();
  assign_fast(data.X, V, &fast_ops);
  const double fast_ms = ms_since(start);

  out.add("dense", "ops_per_point", static_cast<double>(dense_ops.multiply_adds()) / N, dense_ops.multiply_adds(),
          dense_ms);
  out.add("fast", "ops_per_point", static_cast<double>(fast_ops.multiply_adds()) / N, fast_ops.multiply_adds(),
          fast_ms);
  out.add("fast", "nnz_total", static_cast<double>(V.nnz()), 0, factorize_ms);
}

void nystrom_errors(const ExperimentSpec& spec, std::uint64_t seed, Emitter& out) {
  const Index D = out.point.D, K = out.point.K;
  const Dataset data = blobs_for(spec, D, K, seed);
  const KernelSpec kernel{default_gamma(data.X)};
  const MatrixXd uniform = sample_initial_centroids(data.X, K, seed);

  auto record = [&](const std::string& method, Landmarks<double> landmarks, Index sparsity) {
    const NystromModel<double> model = fit_nystrom(data.X, std::move(landmarks), kernel);
    const double error = reconstruction_error(model, data.X);
    OpCounter ops;
    const auto start = Clock::now();
    kernel_rows(model, data.X, &ops);
    const double ms = ms_since(start);
    const double N = static_cast<double>(data.size());
    out.add(method, "reconstruction_error", error, 0, 0, -1, sparsity);
    out.add(method, "ops_per_row", static_cast<double>(ops.multiply_adds()) / N, ops.multiply_adds(), ms, -1,
            sparsity);
  };

  record("uniform", uniform, 0);
  const ClusteringModel<double> km = lloyd_kmeans(data.X, K, uniform, 1e-6, spec.max_outer_iterations);
  record("kmeans", km.centroids_dense, 0);
  for (Index s : spec.sparsities) {
    const ClusteringModel<double> qk = qkmeans(data.X, qk_config(spec, K, std::min(s, std::min(K, D)), seed), uniform);
    record("qkmeans", qk.centroids_op, s);
  }
}

void knn_table(const ExperimentSpec& spec, std::uint64_t seed, Emitter& out) {
  const Index D = out.point.D, K = out.point.K;
  const Dataset data = blobs_for(spec, D, K, seed);
  const auto [train, test] = train_test_split(data, 0.2, seed);
  const double n_queries = static_cast<double>(test.size());

  auto start = Clock::now();
  const Classification brute = classify_1nn(train.X, train.labels, test.X, test.labels);
  const double brute_ms = ms_since(start);
  out.add("brute", "accuracy", brute.accuracy, brute.ops, brute_ms, -1, 0);
  out.add("brute", "ops_per_query", static_cast<double>(brute.ops) / n_queries, brute.ops, brute_ms, -1, 0);

  auto evaluate = [&](const std::string& method, ClusteringModel<double> model, Index sparsity) {
    const ClusterIndex<double> index = build_index(train.X, std::move(model));
    const auto t0 = Clock::now();
    const Classification routed = classify_1nn(index, train.labels, test.X, test.labels);
    const double ms = ms_since(t0);
    std::size_t agree = 0;
    for (Index i = 0; i < test.size(); ++i)
      agree += query_1nn(index, test.X.row(i).transpose()).index == brute_force_1nn(train.X, test.X.row(i).transpose()).index;
    out.add(method, "accuracy", routed.accuracy, routed.ops, ms, -1, sparsity);
    out.add(method, "ops_per_query", static_cast<double>(routed.ops) / n_queries, routed.ops, ms, -1, sparsity);
    out.add(method, "recall_at_1", static_cast<double>(agree) / n_queries, 0, 0, -1, sparsity);
  };

  const MatrixXd init = sample_initial_centroids(train.X, K, seed);
  evaluate("kmeans", lloyd_kmeans(train.X, K, init, 1e-6, spec.max_outer_iterations), 0);
  for (Index s : spec.sparsities)
    evaluate("qkmeans", qkmeans(train.X, qk_config(spec, K, std::min(s, std::min(K, D)), seed), init), s);
}

std::vector<GridPoint> grid_of(const ExperimentSpec& spec) {
  std::vector<GridPoint> grid;
  switch (spec.kind) {
    case ExperimentKind::ApplyTiming:
      for (Index D : spec.dims)
        for (Index s : spec.sparsities) grid.push_back({D, D, s});
      break;
    case ExperimentKind::AssignmentTiming:
      for (Index D : spec.dims)
        for (Index K : spec.Ks)
          for (Index s : spec.sparsities) grid.push_back({D, K, s});
      break;
    default:  // sparsity is swept inside the task
      for (Index D : spec.dims)
        for (Index K : spec.Ks) grid.push_back({D, K, 0});
  }
  return grid;
}

void run_task(const ExperimentSpec& spec, std::uint64_t seed, Emitter& out) {
  switch (spec.kind) {
    case ExperimentKind::ApplyTiming: return apply_timing(spec, seed, out);
    case ExperimentKind::ObjectiveCurves: return objective_curves(spec, seed, out);
    case ExperimentKind::AssignmentTiming: return assignment_timing(spec, seed, out);
    case ExperimentKind::Nystrom: return nystrom_errors(spec, seed, out);
    case ExperimentKind::Knn: return knn_table(spec, seed, out);
  }
}

// Mean and standard deviation over seeds of every (method, sparsity, iter, metric).
std::vector<ResultRow> aggregate(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, Index, int, std::string>;
  std::map<Key, std::vector<const ResultRow*>> groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    Key key{r.method, r.sparsity, r.iter, r.metric};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<ResultRow> out;
  for (const auto& key : order) {
    const auto& members = groups[key];
    ResultRow agg = *members.front();
    agg.seed = -1;
    double sum = 0, ops = 0, wall = 0;
    for (const auto* r : members) {
      sum += r->value;
      ops += static_cast<double>(r->ops);
      wall += r->wall_ms;
    }
    const double n = static_cast<double>(members.size());
    agg.value = sum / n;
    double var = 0;
    for (const auto* r : members) var += (r->value - agg.value) * (r->value - agg.value);
    agg.std = std::sqrt(var / n);
    agg.ops = static_cast<std::uint64_t>(std::llround(ops / n));
    agg.wall_ms = wall / n;
    out.push_back(std::move(agg));
  }
  return out;
}

}  // namespace

ExperimentKind parse_experiment(const std::string& name) {
  for (const auto& [kind, text] : kExperimentNames)
    if (name == text) return kind;
  throw InvalidConfig("unknown experiment '" + name + "'");
}

std::string experiment_name(ExperimentKind kind) {
  for (const auto& [k, text] : kExperimentNames)
    if (k == kind) return text;
  return "unknown";
}

void ExperimentSpec::validate() const {
  if (dims.empty() || Ks.empty() || sparsities.empty()) throw InvalidConfig("experiment: grids must be non-empty");
  if (n_repeats < 1) throw InvalidConfig("experiment: n_repeats must be >= 1");
  for (Index v : dims)
    if (v < 1) throw InvalidConfig("experiment: dimensions must be positive");
  for (Index v : Ks)
    if (v < 2) throw InvalidConfig("experiment: K must be >= 2");
  for (Index v : sparsities)
    if (v < 1) throw InvalidConfig("experiment: sparsity levels must be >= 1");
  if (n_samples < 2) throw InvalidConfig("experiment: n_samples must be >= 2");
  if (palm_iterations < 1 || max_outer_iterations < 1) throw InvalidConfig("experiment: iteration caps must be >= 1");
  if (n_vectors < 1) throw InvalidConfig("experiment: n_vectors must be >= 1");
  if (threads < 0) throw InvalidConfig("experiment: threads must be >= 0");
  if (kind != ExperimentKind::ApplyTiming)
    for (Index K : Ks)
      if (K > n_samples) throw InvalidConfig("experiment: K exceeds n_samples");
  if (kind == ExperimentKind::ApplyTiming || kind == ExperimentKind::AssignmentTiming)
    for (Index D : dims)
      for (Index s : sparsities)
        for (Index K : kind == ExperimentKind::ApplyTiming ? std::vector<Index>{D} : Ks)
          if (s > std::min(K, D))
            throw LevelTooLarge("experiment: sparsity " + std::to_string(s) + " exceeds min(K, D) = " +
                                std::to_string(std::min(K, D)));
}

std::vector<std::uint64_t> ExperimentSpec::effective_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out(static_cast<std::size_t>(n_repeats));
  for (int i = 0; i < n_repeats; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
  return out;
}

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const std::vector<GridPoint> grid = grid_of(spec);
  const std::vector<std::uint64_t> seeds = spec.effective_seeds();
  const std::string name = experiment_name(spec.kind);
  const std::size_t n_tasks = grid.size() * seeds.size();

  std::vector<Emitter> results(n_tasks);
  std::vector<char> done(n_tasks, 0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::string first_error;

  auto worker = [&]() {
    while (!failed.load()) {
      const std::size_t t = next.fetch_add(1);
      if (t >= n_tasks) return;
      const GridPoint& point = grid[t / seeds.size()];
      const std::uint64_t seed = seeds[t % seeds.size()];
      results[t] = Emitter{name, point, static_cast<std::int64_t>(seed), {}};
      try {
        run_task(spec, seed, results[t]);
        done[t] = 1;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };

  unsigned n_threads = spec.threads > 0 ? static_cast<unsigned>(spec.threads) : std::thread::hardware_concurrency();
  n_threads = std::max(1u, std::min<unsigned>(n_threads, static_cast<unsigned>(n_tasks)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::vector<ResultRow> rows;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<ResultRow> point_rows;
    bool complete = true;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const std::size_t t = g * seeds.size() + s;
      if (!done[t]) {
        complete = false;
        continue;
      }
      point_rows.insert(point_rows.end(), results[t].rows.begin(), results[t].rows.end());
    }
    std::vector<ResultRow> summary;
    if (complete) summary = aggregate(point_rows);
    rows.insert(rows.end(), point_rows.begin(), point_rows.end());
    rows.insert(rows.end(), summary.begin(), summary.end());
  }
  if (failed) throw ExperimentAborted(name + ": " + first_error, std::move(rows));
  return rows;
}

OutputFormat parse_format(const std::string& name) {
  if (name == "csv") return OutputFormat::Csv;
  if (name == "jsonl") return OutputFormat::Jsonl;
  throw InvalidConfig("unknown format '" + name + "' (expected csv or jsonl)");
}

void emit_results(std::ostream& out, const std::vector<ResultRow>& rows, OutputFormat format) {
  if (format == OutputFormat::Csv) {
    out << "experiment,D,K,sparsity,method,iter,seed,metric,value,std,ops,wall_ms\n";
    out << std::setprecision(17);
    for (const auto& r : rows)
      out << r.experiment << ',' << r.D << ',' << r.K << ',' << r.sparsity << ',' << r.method << ',' << r.iter << ','
          << r.seed << ',' << r.metric << ',' << r.value << ',' << r.std << ',' << r.ops << ',' << r.wall_ms << '\n';
    return;
  }
  for (const auto& r : rows) {
    const nlohmann::ordered_json j = {
        {"experiment", r.experiment}, {"D", r.D},         {"K", r.K},           {"sparsity", r.sparsity},
        {"method", r.method},         {"iter", r.iter},   {"seed", r.seed},     {"metric", r.metric},
        {"value", r.value},           {"std", r.std},     {"ops", r.ops},       {"wall_ms", r.wall_ms}};
    out << j.dump() << '\n';
  }
}

void emit_results(const std::string& path, const std::vector<ResultRow>& rows, OutputFormat format) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  emit_results(out, rows, format);
}

TraceComparison compare_traces(const std::vector<double>& trace_a, const std::vector<double>& trace_b) {
  if (trace_a.empty() || trace_b.empty()) throw InvalidConfig("compare_traces: traces must be non-empty");
  TraceComparison out;
  out.final_a = trace_a.back();
  out.final_b = trace_b.back();
  out.ratio = out.final_a != 0 ? out.final_b / out.final_a : (out.final_b == 0 ? 1.0 : INFINITY);
  out.iterations_a = trace_a.size();
  out.iterations_b = trace_b.size();
  auto deltas = [](const std::vector<double>& t, std::vector<double>& d, double& worst) {
    for (std::size_t i = 1; i < t.size(); ++i) {
      d.push_back(t[i] - t[i - 1]);
      if (t[i - 1] > 0) worst = std::max(worst, (t[i] - t[i - 1]) / t[i - 1]);
    }
  };
  deltas(trace_a, out.deltas_a, out.max_relative_increase_a);
  deltas(trace_b, out.deltas_b, out.max_relative_increase_b);
  return out;
}

}  // namespace fastcluster
