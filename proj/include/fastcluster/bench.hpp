#pragma once

#include "fastcluster/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fastcluster {

enum class ExperimentKind { ApplyTiming, ObjectiveCurves, AssignmentTiming, Nystrom, Knn };

/// Parses fig1_apply_timing, fig2_objective_curves, fig3_assignment_timing, fig4_nystrom or tab_knn.
ExperimentKind parse_experiment(const std::string& name);
std::string experiment_name(ExperimentKind kind);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::ApplyTiming;
  std::vector<Index> dims{64, 128, 256, 512};
  std::vector<Index> Ks{32, 64, 128};
  std::vector<Index> sparsities{2, 3, 5};
  int n_repeats = 5;
  std::vector<std::uint64_t> seeds;  // empty: 0 .. n_repeats-1
  Index n_samples = 1000;
  double center_std = 2.0;
  int palm_iterations = 300;
  int max_outer_iterations = 10;
  Index n_vectors = 100;  // apply timing batch
  int threads = 1;

  void validate() const;
  std::vector<std::uint64_t> effective_seeds() const;
};

struct ResultRow {
  std::string experiment;
  Index D = 0;
  Index K = 0;
  Index sparsity = 0;
  std::string method;
  int iter = -1;           // -1 when the row is not part of an iteration trace
  std::int64_t seed = 0;   // -1 on rows aggregated over seeds
  std::string metric;
  double value = 0;
  double std = 0;
  std::uint64_t ops = 0;
  double wall_ms = 0;
};

/// Raised when a grid point fails; carries every row finished before it.
class ExperimentAborted : public Error {
 public:
  ExperimentAborted(const std::string& what, std::vector<ResultRow> partial)
      : Error(what), partial_(std::move(partial)) {}
  const std::vector<ResultRow>& partial() const noexcept { return partial_; }

 private:
  std::vector<ResultRow> partial_;
};

/// Runs every (grid point, seed) task on a worker pool and returns rows in
/// grid-major, seed-minor order. Each grid point ends with mean/std rows
/// (seed -1) over its seeds.
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec);

enum class OutputFormat { Csv, Jsonl };
OutputFormat parse_format(const std::string& name);

void emit_results(std::ostream& out, const std::vector<ResultRow>& rows, OutputFormat format);
void emit_results(const std::string& path, const std::vector<ResultRow>& rows, OutputFormat format);

struct TraceComparison {
  double final_a = 0;
  double final_b = 0;
  double ratio = 0;  // final_b / final_a
  std::size_t iterations_a = 0;
  std::size_t iterations_b = 0;
  std::vector<double> deltas_a;  // trace[t] - trace[t-1]
  std::vector<double> deltas_b;
  double max_relative_increase_a = 0;
  double max_relative_increase_b = 0;
};

TraceComparison compare_traces(const std::vector<double>& trace_a, const std::vector<double>& trace_b);

}  // namespace fastcluster
