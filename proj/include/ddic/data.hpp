#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddic/matrix.hpp"

namespace ddic {

struct Dataset {
  Matrix features;  // may carry NaN for missing entries
  std::vector<int> labels;  // dense, in [0, class_count)
  std::string name;
  std::size_t class_count = 0;

  std::size_t rows() const { return features.rows(); }
  std::size_t cols() const { return features.cols(); }
  // Throws ConsistencyError on label count or range problems.
  void validate() const;
};

// Maps arbitrary labels to 0..c-1 in increasing order; returns c.
std::size_t remap_labels(std::vector<int>& labels);

// IDX image file (magic 0x00000803) plus IDX label file (0x00000801). Pixel
// bytes become features unscaled, one flattened row per image.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Inverse of load_idx for byte-valued features; rows * cols must equal the
// feature width.
void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols, const std::filesystem::path& images,
               const std::filesystem::path& labels);

struct CsvOptions {
  bool header = true;
  // Header name of the label column; without a header, its 0-based index.
  std::string label_column = "label";
  char delimiter = ',';
};

// Numeric table; `NaN` (any case) or an empty cell marks a missing value.
// Labels may be any text and are remapped densely in sorted order.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

// Divides every non-NaN entry by the largest absolute non-NaN entry.
Matrix normalize_unit(const Matrix& x);

// k isotropic Gaussian clusters around means separation * u_c, where the
// unit directions u_c are the most spread of several random draws. Labels
// cycle 0..k-1, so cluster sizes differ by at most one.
Dataset make_blobs(std::size_t n, std::size_t d, std::size_t k, double separation, double cluster_std,
                   std::uint64_t seed);

// Uniformly chosen rows, in their original order.
Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed);

}  // namespace ddic
