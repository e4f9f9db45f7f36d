#include "fastcluster/datasets.hpp"

#include "fastcluster/sparse_factor.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace fastcluster {

void BlobsSpec::validate() const {
  if (n_samples < 1) throw InvalidConfig("blobs: n_samples must be >= 1");
  if (n_features < 1) throw InvalidConfig("blobs: n_features must be >= 1");
  if (n_centers < 1 || n_centers > n_samples) throw InvalidConfig("blobs: need 1 <= n_centers <= n_samples");
  if (!(center_std >= 0) || !std::isfinite(center_std)) throw InvalidConfig("blobs: center_std must be >= 0");
  if (!(box_half_width > 0) || !std::isfinite(box_half_width))
    throw InvalidConfig("blobs: box_half_width must be positive");
}

Dataset make_blobs(const BlobsSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> box(-spec.box_half_width, spec.box_half_width);
  std::normal_distribution<double> noise(0.0, 1.0);

  MatrixXd centers(spec.n_centers, spec.n_features);
  for (Index c = 0; c < spec.n_centers; ++c)
    for (Index d = 0; d < spec.n_features; ++d) centers(c, d) = box(rng);

  std::vector<int> labels(static_cast<std::size_t>(spec.n_samples));
  for (Index n = 0; n < spec.n_samples; ++n) labels[static_cast<std::size_t>(n)] = static_cast<int>(n % spec.n_centers);
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset out;
  out.X.resize(spec.n_samples, spec.n_features);
  for (Index n = 0; n < spec.n_samples; ++n) {
    const Index c = labels[static_cast<std::size_t>(n)];
    for (Index d = 0; d < spec.n_features; ++d) out.X(n, d) = centers(c, d) + spec.center_std * noise(rng);
  }
  out.labels = std::move(labels);
  return out;
}

namespace {

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ParseError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << std::setprecision(17);
  return out;
}

bool parse_double(std::string_view field, double& value) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  if (field.empty()) return false;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  return ec == std::errc() && ptr == field.data() + field.size();
}

std::vector<double> parse_row(const std::string& line, bool& ok) {
  std::vector<double> row;
  std::size_t start = 0;
  ok = true;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const std::string_view field(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
    double v = 0;
    if (!parse_double(field, v)) {
      ok = false;
      return row;
    }
    row.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return row;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

Dataset load_csv(const std::string& path, bool label_last) {
  std::ifstream in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    bool ok = false;
    std::vector<double> row = parse_row(line, ok);
    if (!ok) {
      if (rows.empty() && line_no == 1) continue;  // header
      throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(rows.front().size()) +
                       " fields, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");
  const Index width = static_cast<Index>(rows.front().size());
  const Index D = label_last ? width - 1 : width;
  if (D < 1) throw ParseError(path + ": no feature columns");

  Dataset out;
  out.X.resize(static_cast<Index>(rows.size()), D);
  if (label_last) out.labels.resize(rows.size());
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (Index d = 0; d < D; ++d) {
      const double v = rows[n][static_cast<std::size_t>(d)];
      if (!std::isfinite(v)) throw ParseError(path + ": non-finite value in row " + std::to_string(n));
      out.X(static_cast<Index>(n), d) = v;
    }
    if (label_last) {
      const double label = rows[n].back();
      if (label != std::floor(label)) throw ParseError(path + ": label is not an integer in row " + std::to_string(n));
      out.labels[n] = static_cast<int>(label);
    }
  }
  return out;
}

void save_csv(const std::string& path, const Dataset& data, bool label_last) {
  if (label_last && static_cast<Index>(data.labels.size()) != data.size())
    throw DimensionMismatch("save_csv: label count != rows");
  std::ofstream out = open_out(path);
  for (Index n = 0; n < data.size(); ++n) {
    for (Index d = 0; d < data.dim(); ++d) out << (d ? "," : "") << data.X(n, d);
    if (label_last) out << ',' << data.labels[static_cast<std::size_t>(n)];
    out << '\n';
  }
}

void save_matrix_csv(const std::string& path, const MatrixXd& M) { save_csv(path, Dataset{M, {}}, false); }

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw TruncatedFile(path + ": header ends early");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t count, const std::string& path) {
  std::vector<unsigned char> bytes(count);
  if (count && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count)))
    throw TruncatedFile(path + ": expected " + std::to_string(count) + " payload bytes, got " +
                        std::to_string(in.gcount()));
  return bytes;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images = open_in(images_path, std::ios::binary);
  const std::uint32_t magic = read_be32(images, images_path);
  if (magic != 0x00000803u) throw BadMagic(images_path + ": image magic is not 0x00000803");
  const std::uint32_t n = read_be32(images, images_path);
  const std::uint32_t rows = read_be32(images, images_path);
  const std::uint32_t cols = read_be32(images, images_path);
  const std::size_t D = std::size_t(rows) * cols;
  const std::vector<unsigned char> pixels = read_payload(images, std::size_t(n) * D, images_path);

  std::ifstream labels = open_in(labels_path, std::ios::binary);
  if (read_be32(labels, labels_path) != 0x00000801u) throw BadMagic(labels_path + ": label magic is not 0x00000801");
  const std::uint32_t n_labels = read_be32(labels, labels_path);
  if (n_labels != n)
    throw DimensionMismatch("load_idx: " + std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
  const std::vector<unsigned char> tags = read_payload(labels, n_labels, labels_path);

  Dataset out;
  out.X.resize(static_cast<Index>(n), static_cast<Index>(D));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < D; ++d)
      out.X(static_cast<Index>(i), static_cast<Index>(d)) = pixels[i * D + d] / 255.0;
  out.labels.assign(tags.begin(), tags.end());
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0 && test_fraction < 1)) throw InvalidConfig("train_test_split: fraction must be in (0, 1)");
  const Index N = data.size();
  const Index n_test = static_cast<Index>(std::ceil(test_fraction * static_cast<double>(N)));
  if (n_test < 1 || n_test >= N) throw InvalidConfig("train_test_split: split leaves an empty side");
  std::vector<Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto take = [&](std::size_t from, std::size_t to) {
    Dataset part;
    part.X.resize(static_cast<Index>(to - from), data.dim());
    for (std::size_t i = from; i < to; ++i) {
      part.X.row(static_cast<Index>(i - from)) = data.X.row(order[i]);
      if (data.labeled()) part.labels.push_back(data.labels[static_cast<std::size_t>(order[i])]);
    }
    return part;
  };
  Dataset test = take(0, static_cast<std::size_t>(n_test));
  Dataset train = take(static_cast<std::size_t>(n_test), order.size());
  return {std::move(train), std::move(test)};
}

MatrixXd load_matrix(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string first;
  while (std::getline(in, first) && blank(first)) {
  }
  std::istringstream header(first);
  long long a = 0, b = 0, c = 0;
  std::string rest;
  const bool triplet = first.find(',') == std::string::npos && (header >> a >> b >> c) && !(header >> rest);
  if (triplet) {
    in.clear();
    in.seekg(0);
    return read_triplets<double>(in).to_dense();
  }
  return load_csv(path, false).X;
}

}  // namespace fastcluster
