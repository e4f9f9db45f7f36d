#include "fastcluster/cli.hpp"

#include "fastcluster/fastcluster.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>

namespace fastcluster {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double us_since(Clock::time_point start) {
  return std::chrono::duration<double, std::micro>(Clock::now() - start).count();
}

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string format = "csv";
  int threads = 0;
};

struct ClusterArgs {
  std::string data;
  bool labeled = false;
  Index K = 8;
  int max_iter = 20;
  double tol = 1e-6;
  Index sparsity = 5;
  int Q = 0;
  int palm_iter = 300;
  bool hierarchical = false;
};

std::ofstream open_output(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  const fs::path path = fs::path(g.out_dir) / name;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

void write_assignments(const Globals& g, const std::vector<Index>& labels) {
  std::ofstream out = open_output(g, "assignments.csv");
  for (Index k : labels) out << k << '\n';
}

void write_trace(const Globals& g, const ClusteringModel<double>& model) {
  std::ofstream out = open_output(g, "trace.csv");
  out << "iter,objective,assign_ops,assign_ms,factorize_ms,nnz_total\n";
  for (std::size_t t = 0; t < model.objective_trace.size(); ++t) {
    const auto& s = model.stats[t];
    out << t << ',' << model.objective_trace[t] << ',' << s.assign_ops << ',' << s.assign_ms << ','
        << s.factorize_ms << ',' << s.nnz_total << '\n';
  }
}

void write_factors(const Globals& g, std::span<const SparseFactor<double>> factors) {
  for (std::size_t q = 0; q < factors.size(); ++q) {
    std::ofstream out = open_output(g, "factor_" + std::to_string(q) + ".txt");
    write_triplets(out, factors[q]);
  }
}

MatrixXd initial_centroids(const MatrixXd& X, Index K, std::uint64_t seed) {
  if (K < 2) throw InvalidConfig("--k must be >= 2");
  if (K > X.rows()) throw InvalidConfig("--k exceeds the number of samples");
  return sample_initial_centroids(X, K, seed);
}

QkConfig qk_config(const ClusterArgs& a, const Globals& g) {
  QkConfig cfg;
  cfg.K = a.K;
  cfg.Q = a.Q;
  cfg.sparsity_level = a.sparsity;
  cfg.tolerance = a.tol;
  cfg.max_outer_iterations = a.max_iter;
  cfg.palm.max_iterations = a.palm_iter;
  cfg.palm.seed = g.seed;
  cfg.palm.validate();
  cfg.use_hierarchical = a.hierarchical;
  cfg.seed = g.seed;
  return cfg;
}

ClusteringModel<double> fit_qkmeans(const MatrixXd& X, const ClusterArgs& a, const Globals& g) {
  const QkConfig cfg = qk_config(a, g);
  if (a.sparsity > std::min(a.K, X.cols()))
    throw LevelTooLarge("--sparsity " + std::to_string(a.sparsity) + " exceeds min(K, D)");
  return qkmeans(X, cfg, initial_centroids(X, a.K, g.seed));
}

void add_cluster_options(CLI::App* cmd, ClusterArgs& a, bool factorized) {
  cmd->add_option("--data", a.data, "CSV data file, one sample per row")->required()->check(CLI::ExistingFile);
  cmd->add_flag("--labeled", a.labeled, "last CSV column is a label and is ignored");
  cmd->add_option("--k", a.K, "number of clusters")->capture_default_str();
  cmd->add_option("--max-iter", a.max_iter, "outer iteration cap")->capture_default_str();
  cmd->add_option("--tol", a.tol, "relative objective tolerance")->capture_default_str();
  if (!factorized) return;
  cmd->add_option("--sparsity", a.sparsity, "nonzeros per row and column of each factor")->capture_default_str();
  cmd->add_option("--factors", a.Q, "number of factors (0: floor(log2 min(K, D)))")->capture_default_str();
  cmd->add_option("--palm-iter", a.palm_iter, "palm4MSA iteration cap")->capture_default_str();
  cmd->add_flag("--hierarchical", a.hierarchical, "use hierarchical palm4MSA");
}

Landmarks<double> choose_landmarks(const MatrixXd& X, const std::string& scheme, const ClusterArgs& a,
                                   const Globals& g) {
  const MatrixXd uniform = initial_centroids(X, a.K, g.seed);
  if (scheme == "uniform") return uniform;
  if (scheme == "kmeans") return lloyd_kmeans(X, a.K, uniform, a.tol, a.max_iter).centroids_dense;
  return fit_qkmeans(X, a, g).centroids_op;
}

int env_threads() {
  const char* value = std::getenv("FASTCLUSTER_THREADS");
  if (!value || !*value) return 0;
  try {
    const int n = std::stoi(value);
    if (n < 0) throw InvalidConfig("FASTCLUSTER_THREADS must be >= 0");
    return n;
  } catch (const std::logic_error&) {
    throw InvalidConfig(std::string("FASTCLUSTER_THREADS is not an integer: ") + value);
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse-factorized K-means, Nystrom landmarks and cluster-routed 1-NN search"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "directory for output files")->capture_default_str();
  app.add_option("--format", g.format, "bench output format")->check(CLI::IsMember({"csv", "jsonl"}))
      ->capture_default_str();
  auto* threads_opt = app.add_option("--threads", g.threads, "worker threads (0: all cores)");

  BlobsSpec blobs;
  auto* gen = app.add_subcommand("generate-blobs", "write a labeled Gaussian blobs CSV");
  gen->add_option("--n", blobs.n_samples, "number of samples")->capture_default_str();
  gen->add_option("--d", blobs.n_features, "number of features")->capture_default_str();
  gen->add_option("--centers", blobs.n_centers, "number of centers")->capture_default_str();
  gen->add_option("--std", blobs.center_std, "standard deviation around each center")->capture_default_str();
  gen->add_option("--box", blobs.box_half_width, "half width of the center box")->capture_default_str();
  std::string gen_out = "blobs.csv";
  gen->add_option("--out", gen_out, "file name inside --out-dir")->capture_default_str();

  ClusterArgs km_args;
  auto* km = app.add_subcommand("kmeans", "Lloyd K-means with dense centroids");
  add_cluster_options(km, km_args, false);

  ClusterArgs qk_args;
  auto* qk = app.add_subcommand("qkmeans", "K-means with sparse-factorized centroids");
  add_cluster_options(qk, qk_args, true);

  std::string matrix_path;
  ClusterArgs fac_args;
  fac_args.Q = 2;
  auto* fac = app.add_subcommand("factorize", "approximate a matrix by a product of sparse factors");
  fac->add_option("--target", matrix_path, "CSV or triplet file")->required()->check(CLI::ExistingFile);
  fac->add_option("--factors", fac_args.Q, "number of factors")->capture_default_str();
  fac->add_option("--sparsity", fac_args.sparsity, "nonzeros per row and column")->capture_default_str();
  fac->add_option("--max-iter", fac_args.palm_iter, "iteration cap")->capture_default_str();
  fac->add_option("--tol", fac_args.tol, "relative objective tolerance")->capture_default_str();
  fac->add_flag("--hierarchical", fac_args.hierarchical, "use hierarchical palm4MSA");

  ClusterArgs ny_args;
  std::string scheme = "uniform";
  double gamma = 0;
  bool features = false;
  auto* ny = app.add_subcommand("nystrom", "Nystrom kernel approximation from landmark points");
  add_cluster_options(ny, ny_args, true);
  ny->add_option("--landmarks", scheme, "landmark scheme")
      ->check(CLI::IsMember({"uniform", "kmeans", "qkmeans"}))
      ->capture_default_str();
  ny->add_option("--gamma", gamma, "Gaussian kernel width (0: 1 / (D Var X))")->capture_default_str();
  ny->add_flag("--features", features, "also write features.csv");

  ClusterArgs knn_args;
  std::string train_path, test_path, method = "brute";
  auto* knn = app.add_subcommand("knn", "1-nearest-neighbour classification");
  knn->add_option("--train", train_path, "labeled training CSV")->required()->check(CLI::ExistingFile);
  knn->add_option("--test", test_path, "labeled test CSV")->required()->check(CLI::ExistingFile);
  knn->add_option("--method", method, "search method")
      ->check(CLI::IsMember({"brute", "kmeans", "qkmeans"}))
      ->capture_default_str();
  knn->add_option("--k", knn_args.K, "number of clusters")->capture_default_str();
  knn->add_option("--sparsity", knn_args.sparsity, "nonzeros per row and column")->capture_default_str();
  knn->add_option("--max-iter", knn_args.max_iter, "outer iteration cap")->capture_default_str();
  knn->add_option("--palm-iter", knn_args.palm_iter, "palm4MSA iteration cap")->capture_default_str();

  ExperimentSpec spec;
  std::string experiment = "fig1_apply_timing";
  auto* bench = app.add_subcommand("bench", "run a desk-scale experiment grid");
  bench->add_option("--experiment", experiment, "experiment name")
      ->check(CLI::IsMember({"fig1_apply_timing", "fig2_objective_curves", "fig3_assignment_timing", "fig4_nystrom",
                             "tab_knn"}))
      ->capture_default_str();
  bench->add_option("--dims", spec.dims, "dimension grid");
  bench->add_option("--ks", spec.Ks, "cluster-count grid");
  bench->add_option("--sparsities", spec.sparsities, "sparsity grid");
  bench->add_option("--repeats", spec.n_repeats, "seeds per grid point")->capture_default_str();
  bench->add_option("--n-samples", spec.n_samples, "blobs size")->capture_default_str();
  bench->add_option("--blob-std", spec.center_std, "blobs standard deviation")->capture_default_str();
  bench->add_option("--palm-iter", spec.palm_iterations, "palm4MSA iteration cap")->capture_default_str();
  bench->add_option("--max-iter", spec.max_outer_iterations, "clustering iteration cap")->capture_default_str();
  bench->add_option("--n-vectors", spec.n_vectors, "apply-timing batch size")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (threads_opt->count() == 0) g.threads = env_threads();
    if (g.threads < 0) throw InvalidConfig("--threads must be >= 0");

    if (gen->parsed()) {
      blobs.seed = g.seed;
      const Dataset data = make_blobs(blobs);
      fs::create_directories(g.out_dir);
      save_csv((fs::path(g.out_dir) / gen_out).string(), data, true);
    } else if (km->parsed()) {
      const Dataset data = load_csv(km_args.data, km_args.labeled);
      const ClusteringModel<double> model = lloyd_kmeans(
          data.X, km_args.K, initial_centroids(data.X, km_args.K, g.seed), km_args.tol, km_args.max_iter);
      write_assignments(g, model.assignments);
      save_matrix_csv((fs::path(g.out_dir) / "centroids.csv").string(), model.centroids_dense);
      write_trace(g, model);
    } else if (qk->parsed()) {
      const Dataset data = load_csv(qk_args.data, qk_args.labeled);
      const ClusteringModel<double> model = fit_qkmeans(data.X, qk_args, g);
      write_assignments(g, model.assignments);
      write_factors(g, model.centroids_op.factors());
      write_trace(g, model);
    } else if (fac->parsed()) {
      const MatrixXd U = load_matrix(matrix_path);
      PalmConfig palm;
      palm.max_iterations = fac_args.palm_iter;
      palm.tolerance = fac_args.tol;
      palm.seed = g.seed;
      palm.validate();
      const Index K = U.rows(), D = U.cols();
      if (fac_args.Q < 1) throw InvalidConfig("--factors must be >= 1");
      if (fac_args.sparsity > std::min(K, D)) throw LevelTooLarge("--sparsity exceeds min(rows, cols)");
      const PalmState<double> state =
          fac_args.hierarchical
              ? hierarchical_palm4msa<double>(U, fac_args.Q, fac_args.sparsity, palm)
              : palm4msa<double>(U, fast_operator_constraints<double>(K, D, fac_args.Q, fac_args.sparsity), palm);
      write_factors(g, state.factors);
      std::ofstream trace = open_output(g, "trace.jsonl");
      const double norm = U.squaredNorm();
      for (std::size_t t = 0; t < state.objective_trace.size(); ++t) {
        const nlohmann::ordered_json row = {{"iter", t},
                                            {"objective", state.objective_trace[t]},
                                            {"relative_error", norm > 0 ? std::sqrt(state.objective_trace[t] / norm) : 0.0}};
        trace << row.dump() << '\n';
      }
    } else if (ny->parsed()) {
      const Dataset data = load_csv(ny_args.data, ny_args.labeled);
      const KernelSpec kernel{gamma > 0 ? gamma : default_gamma(data.X)};
      if (scheme == "qkmeans" && ny_args.sparsity > std::min(ny_args.K, data.dim()))
        throw LevelTooLarge("--sparsity exceeds min(K, D)");
      const NystromModel<double> model = fit_nystrom(data.X, choose_landmarks(data.X, scheme, ny_args, g), kernel);
      const double error = reconstruction_error(model, data.X);

      OpCounter ops;
      auto start = Clock::now();
      for (Index n = 0; n < data.size(); ++n) kernel_row(model, data.X.row(n).transpose(), &ops);
      const double row_us = us_since(start) / static_cast<double>(data.size());
      start = Clock::now();
      for (Index n = 0; n < data.size(); ++n) approx_kernel_row(model, data.X.row(n).transpose());
      const double approx_us = us_since(start) / static_cast<double>(data.size());

      std::ofstream csv = open_output(g, "nystrom_error.csv");
      csv << "scheme,K,error,row_time_us,ops_per_row,approx_row_time_us\n";
      csv << scheme << ',' << ny_args.K << ',' << error << ',' << row_us << ','
          << static_cast<double>(ops.multiply_adds()) / static_cast<double>(data.size()) << ',' << approx_us << '\n';
      if (features) save_matrix_csv((fs::path(g.out_dir) / "features.csv").string(), nystrom_features(model, data.X));
    } else if (knn->parsed()) {
      const Dataset train = load_csv(train_path, true);
      const Dataset test = load_csv(test_path, true);
      if (train.dim() != test.dim()) throw DimensionMismatch("knn: train and test differ in dimension");
      Classification result;
      double query_us = 0;
      if (method == "brute") {
        const auto start = Clock::now();
        result = classify_1nn(train.X, train.labels, test.X, test.labels);
        query_us = us_since(start);
      } else {
        ClusteringModel<double> model =
            method == "kmeans"
                ? lloyd_kmeans(train.X, knn_args.K, initial_centroids(train.X, knn_args.K, g.seed), knn_args.tol,
                               knn_args.max_iter)
                : fit_qkmeans(train.X, knn_args, g);
        const ClusterIndex<double> index = build_index(train.X, std::move(model));
        const auto start = Clock::now();
        result = classify_1nn(index, train.labels, test.X, test.labels);
        query_us = us_since(start);
      }
      const double mean_us = query_us / static_cast<double>(test.size());
      std::ofstream csv = open_output(g, "knn_results.csv");
      csv << "method,K,accuracy,mean_query_us,ops_per_query\n";
      csv << method << ',' << (method == "brute" ? 0 : knn_args.K) << ',' << result.accuracy << ',' << mean_us << ','
          << static_cast<double>(result.ops) / static_cast<double>(test.size()) << '\n';
    } else if (bench->parsed()) {
      spec.kind = parse_experiment(experiment);
      spec.threads = g.threads;
      spec.seeds.clear();
      for (int r = 0; r < spec.n_repeats; ++r) spec.seeds.push_back(g.seed + static_cast<std::uint64_t>(r));
      const OutputFormat format = parse_format(g.format);
      fs::create_directories(g.out_dir);
      const std::string path = (fs::path(g.out_dir) / (experiment + (format == OutputFormat::Csv ? ".csv" : ".jsonl"))).string();
      try {
        emit_results(path, run_experiment(spec), format);
      } catch (const ExperimentAborted& e) {
        emit_results(path, e.partial(), format);
        throw;
      }
    }
  } catch (const InvalidConfig& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const LevelTooLarge& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace fastcluster
