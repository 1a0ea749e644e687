#include "ddic/incomplete.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ddic/error.hpp"

namespace ddic {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Column means over observed entries; 0 where a column has none.
std::vector<double> observed_column_means(const MaskedDataset& ds) {
  std::vector<double> total(ds.cols(), 0.0);
  std::vector<std::size_t> count(ds.cols(), 0);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      if (ds.mask.observed(i, j)) {
        total[j] += ds.observed(i, j);
        ++count[j];
      }
    }
  }
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    total[j] = count[j] > 0 ? total[j] / static_cast<double>(count[j]) : 0.0;
  }
  return total;
}

}  // namespace

MaskMatrix::MaskMatrix(Matrix mask) : mask_(std::move(mask)) {
  for (double v : mask_.values()) {
    if (v != 0.0 && v != 1.0) throw ContractError("mask entries must be exactly 0 or 1");
  }
}

MaskMatrix MaskMatrix::all_observed(std::size_t rows, std::size_t cols) {
  return MaskMatrix(Matrix(rows, cols, 1.0));
}

double MaskMatrix::observed_fraction() const {
  if (mask_.empty()) return 1.0;
  return sum(mask_) / static_cast<double>(mask_.size());
}

MaskMatrix generate_mask(std::size_t n, std::size_t d, double missing_ratio, std::uint64_t seed) {
  if (!(missing_ratio >= 0.0 && missing_ratio <= 1.0)) {
    throw ContractError("generate_mask: missing ratio must lie in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  Matrix m(n, d);
  for (double& v : m.values()) {
    // 53-bit uniform in [0, 1); p = 1 drops everything, p = 0 nothing.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = u < missing_ratio ? 0.0 : 1.0;
  }
  return MaskMatrix(std::move(m));
}

MaskedDataset apply_mask(const Matrix& x, const MaskMatrix& mask, std::optional<std::vector<int>> labels) {
  require_same_shape(x, mask.matrix(), "apply_mask");
  if (labels && labels->size() != x.rows()) throw ShapeError("apply_mask: label count differs from rows");
  MaskedDataset ds{x, mask, std::move(labels)};
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (!mask.observed(i, j)) {
        ds.observed(i, j) = kNaN;
      } else if (!std::isfinite(x(i, j))) {
        throw ContractError("apply_mask: observed entries must be finite");
      }
    }
  }
  return ds;
}

MaskedDataset from_observed(Matrix observed, std::optional<std::vector<int>> labels) {
  Matrix mask(observed.rows(), observed.cols());
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const double v = observed.values()[k];
    if (std::isnan(v)) continue;
    if (!std::isfinite(v)) throw ContractError("from_observed: infinite entry");
    mask.values()[k] = 1.0;
  }
  if (labels && labels->size() != observed.rows()) {
    throw ShapeError("from_observed: label count differs from rows");
  }
  return MaskedDataset{std::move(observed), MaskMatrix(std::move(mask)), std::move(labels)};
}

Matrix zero_fill(const MaskedDataset& ds) {
  Matrix out = ds.observed;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      if (!ds.mask.observed(i, j)) out(i, j) = 0.0;
    }
  }
  return out;
}

Matrix mean_fill(const MaskedDataset& ds) {
  const auto means = observed_column_means(ds);
  Matrix out = ds.observed;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      if (!ds.mask.observed(i, j)) out(i, j) = means[j];
    }
  }
  return out;
}

Matrix knn_fill(const MaskedDataset& ds, std::size_t k) {
  const std::size_t n = ds.rows();
  const std::size_t d = ds.cols();
  if (k == 0) throw ContractError("knn_fill: k must be >= 1");
  if (k >= n) throw ContractError("knn_fill: k must be smaller than the number of rows");

  const auto means = observed_column_means(ds);
  Matrix out = ds.observed;
  std::vector<std::pair<double, std::size_t>> neighbours;
  neighbours.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    bool any_missing = false;
    for (std::size_t j = 0; j < d && !any_missing; ++j) any_missing = !ds.mask.observed(i, j);
    if (!any_missing) continue;

    neighbours.clear();
    for (std::size_t r = 0; r < n; ++r) {
      if (r == i) continue;
      double acc = 0.0;
      std::size_t shared = 0;
      for (std::size_t t = 0; t < d; ++t) {
        if (ds.mask.observed(i, t) && ds.mask.observed(r, t)) {
          const double diff = ds.observed(i, t) - ds.observed(r, t);
          acc += diff * diff;
          ++shared;
        }
      }
      if (shared > 0) neighbours.emplace_back(acc / static_cast<double>(shared), r);
    }
    std::sort(neighbours.begin(), neighbours.end());

    for (std::size_t j = 0; j < d; ++j) {
      if (ds.mask.observed(i, j)) continue;
      double total = 0.0;
      std::size_t used = 0;
      for (const auto& [dist, r] : neighbours) {
        if (!ds.mask.observed(r, j)) continue;
        total += ds.observed(r, j);
        if (++used == k) break;
      }
      out(i, j) = used > 0 ? total / static_cast<double>(used) : means[j];
    }
  }
  return out;
}

double fully_observed_prob(double p, std::size_t d) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("fully_observed_prob: p must lie in [0, 1]");
  return std::pow(1.0 - p, static_cast<double>(d));
}

Matrix impute_from_reconstruction(const MaskedDataset& ds, const Matrix& reconstruction) {
  require_same_shape(ds.observed, reconstruction, "impute_from_reconstruction");
  Matrix out = reconstruction;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      if (ds.mask.observed(i, j)) out(i, j) = ds.observed(i, j);
    }
  }
  return out;
}

}  // namespace ddic
