#include "ddic/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "ddic/error.hpp"

namespace ddic {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::filesystem::path& path) {
  if (buf.size() < offset + 4) throw FormatError(path.string() + ": truncated IDX header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void check_magic(std::uint32_t found, std::uint32_t expected, const std::filesystem::path& path) {
  if (found != expected) {
    char msg[96];
    std::snprintf(msg, sizeof(msg), ": IDX magic 0x%08x, expected 0x%08x", found, expected);
    throw FormatError(path.string() + msg);
  }
}

void put_be32(std::vector<char>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

bool is_nan_literal(std::string_view s) {
  return s.empty() || (s.size() == 3 && (s[0] == 'n' || s[0] == 'N') && (s[1] == 'a' || s[1] == 'A') &&
                       (s[2] == 'n' || s[2] == 'N'));
}

}  // namespace

void Dataset::validate() const {
  if (labels.size() != features.rows()) {
    throw ConsistencyError(name + ": " + std::to_string(labels.size()) + " labels for " +
                           std::to_string(features.rows()) + " samples");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= class_count) {
      throw ConsistencyError(name + ": label " + std::to_string(l) + " outside [0, " + std::to_string(class_count) + ")");
    }
  }
}

std::size_t remap_labels(std::vector<int>& labels) {
  std::map<int, int> ids;
  for (int l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [label, id] : ids) id = next++;
  for (int& l : labels) l = ids[l];
  return ids.size();
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  check_magic(read_be32(img, 0, images), kIdxImages, images);
  check_magic(read_be32(lab, 0, labels), kIdxLabels, labels);
  const std::size_t n = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t n_labels = read_be32(lab, 4, labels);
  if (n != n_labels) {
    throw ConsistencyError(images.string() + " holds " + std::to_string(n) + " images but " + labels.string() +
                           " holds " + std::to_string(n_labels) + " labels");
  }
  const std::size_t width = rows * cols;
  if (img.size() - 16 < n * width) throw FormatError(images.string() + ": truncated pixel data");
  if (lab.size() - 8 < n) throw FormatError(labels.string() + ": truncated label data");

  Dataset ds;
  ds.name = images.stem().string();
  ds.features = Matrix(n, width);
  for (std::size_t k = 0; k < n * width; ++k) ds.features.values()[k] = img[16 + k];
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = lab[8 + i];
  ds.class_count = remap_labels(ds.labels);
  return ds;
}

void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  if (rows * cols != ds.cols()) {
    throw ShapeError("write_idx: " + std::to_string(rows) + "x" + std::to_string(cols) + " images for width " +
                     std::to_string(ds.cols()));
  }
  if (ds.labels.size() != ds.rows()) throw ConsistencyError("write_idx: label count differs from rows");
  std::vector<char> img;
  img.reserve(16 + ds.features.size());
  put_be32(img, kIdxImages);
  put_be32(img, static_cast<std::uint32_t>(ds.rows()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : ds.features.values()) {
    if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) throw ContractError("write_idx: features must be bytes");
    img.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  std::vector<char> lab;
  put_be32(lab, kIdxLabels);
  put_be32(lab, static_cast<std::uint32_t>(ds.rows()));
  for (int l : ds.labels) {
    if (l < 0 || l > 255) throw ContractError("write_idx: labels must fit in a byte");
    lab.push_back(static_cast<char>(static_cast<unsigned char>(l)));
  }
  write_file(images, img);
  write_file(labels, lab);
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  std::size_t label_col = 0;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  if (options.header) {
    if (!next_line()) throw FormatError(path.string() + ": empty file");
    const auto names = split(line, options.delimiter);
    const auto it = std::find(names.begin(), names.end(), options.label_column);
    if (it == names.end()) {
      throw ConfigError(path.string() + ": no column named '" + options.label_column + "'");
    }
    label_col = static_cast<std::size_t>(it - names.begin());
    width = names.size();
  } else {
    const auto& s = options.label_column;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), label_col);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("load_csv: without a header the label column must be an index, got '" + s + "'");
    }
  }

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  while (next_line()) {
    const auto cells = split(line, options.delimiter);
    if (width == 0) {
      width = cells.size();
      if (label_col >= width) {
        throw ConfigError(path.string() + ": label column " + std::to_string(label_col) + " but rows have " +
                          std::to_string(width) + " cells");
      }
    }
    if (cells.size() != width) {
      throw FormatError(path.string() + ": row at line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " + std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_col) {
        raw_labels.emplace_back(cells[c]);
        continue;
      }
      const auto cell = cells[c];
      if (is_nan_literal(cell)) {
        values.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw FormatError(path.string() + ": line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                          ": not a number: '" + std::string(cell) + "'");
      }
      values.push_back(v);
    }
  }

  Dataset ds;
  ds.name = path.stem().string();
  const std::size_t n = raw_labels.size();
  ds.features = Matrix(n, n == 0 ? 0 : width - 1, std::move(values));
  // Integer labels sort numerically, anything else lexicographically.
  bool numeric = true;
  std::vector<long long> as_int(n);
  for (std::size_t i = 0; i < n && numeric; ++i) {
    const auto& s = raw_labels[i];
    const auto res = std::from_chars(s.data(), s.data() + s.size(), as_int[i]);
    numeric = res.ec == std::errc() && res.ptr == s.data() + s.size();
  }
  ds.labels.resize(n);
  if (numeric) {
    std::map<long long, int> ids;
    for (auto v : as_int) ids.emplace(v, 0);
    int next = 0;
    for (auto& [v, id] : ids) id = next++;
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = ids[as_int[i]];
    ds.class_count = ids.size();
  } else {
    std::map<std::string, int> ids;
    for (const auto& s : raw_labels) ids.emplace(s, 0);
    int next = 0;
    for (auto& [s, id] : ids) id = next++;
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = ids[raw_labels[i]];
    ds.class_count = ids.size();
  }
  return ds;
}

Matrix normalize_unit(const Matrix& x) {
  double top = 0.0;
  for (double v : x.values()) {
    if (!std::isnan(v)) top = std::max(top, std::abs(v));
  }
  Matrix out = x;
  if (top == 0.0) return out;
  for (double& v : out.values()) {
    if (!std::isnan(v)) v /= top;
  }
  return out;
}

Dataset make_blobs(std::size_t n, std::size_t d, std::size_t k, double separation, double cluster_std,
                   std::uint64_t seed) {
  if (k == 0 || n < k) throw ContractError("make_blobs: need n >= k >= 1");
  if (d == 0) throw ContractError("make_blobs: need d >= 1");
  if (!(separation > 0.0) || !(cluster_std >= 0.0)) {
    throw ContractError("make_blobs: separation must be > 0 and cluster_std >= 0");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto random_directions = [&]() {
    Matrix u(k, d);
    for (std::size_t c = 0; c < k; ++c) {
      double norm = 0.0;
      while (norm == 0.0) {
        norm = 0.0;
        for (double& v : u.row(c)) {
          v = normal(rng);
          norm += v * v;
        }
      }
      norm = std::sqrt(norm);
      for (double& v : u.row(c)) v /= norm;
    }
    return u;
  };
  auto min_gap = [&](const Matrix& u) {
    double gap = std::numeric_limits<double>::infinity();
    const Matrix dist = pairwise_sq_dists(u, u);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) gap = std::min(gap, dist(a, b));
    return gap;
  };
  constexpr int kCandidates = 32;
  Matrix dirs = random_directions();
  double best = min_gap(dirs);
  for (int c = 1; c < kCandidates; ++c) {
    Matrix cand = random_directions();
    const double gap = min_gap(cand);
    if (gap > best) {
      best = gap;
      dirs = std::move(cand);
    }
  }

  Dataset ds;
  ds.name = "blobs";
  ds.class_count = k;
  ds.features = Matrix(n, d);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k;
    ds.labels[i] = static_cast<int>(c);
    auto row = ds.features.row(i);
    for (std::size_t t = 0; t < d; ++t) row[t] = separation * dirs(c, t) + cluster_std * normal(rng);
  }
  return ds;
}

Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.rows()) {
    throw ContractError("subset: " + std::to_string(n) + " rows requested from " + std::to_string(ds.rows()));
  }
  std::vector<std::size_t> order(ds.rows());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (order.size() - i));
    std::swap(order[i], order[j]);
  }
  order.resize(n);
  std::sort(order.begin(), order.end());
  Dataset out;
  out.name = ds.name;
  out.class_count = ds.class_count;
  out.features = select_rows(ds.features, order);
  for (std::size_t i : order) out.labels.push_back(ds.labels[i]);
  return out;
}

}  // namespace ddic
