#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ddic/matrix.hpp"

// Missing-data formalism: observation masks, NaN-bearing observed matrices
// and the statistical fills used as baselines and as network inputs.
namespace ddic {

// Binary indicator of observed entries (1 = observed).
class MaskMatrix {
 public:
  MaskMatrix() = default;
  // Throws ContractError if any entry is not exactly 0 or 1.
  explicit MaskMatrix(Matrix mask);

  static MaskMatrix all_observed(std::size_t rows, std::size_t cols);

  const Matrix& matrix() const { return mask_; }
  std::size_t rows() const { return mask_.rows(); }
  std::size_t cols() const { return mask_.cols(); }
  bool observed(std::size_t r, std::size_t c) const { return mask_(r, c) != 0.0; }
  double observed_fraction() const;

 private:
  Matrix mask_;
};

// Observed data with NaN exactly where the mask is 0.
struct MaskedDataset {
  Matrix observed;
  MaskMatrix mask;
  std::optional<std::vector<int>> labels;  // ground truth, evaluation only

  std::size_t rows() const { return observed.rows(); }
  std::size_t cols() const { return observed.cols(); }
};

// MCAR mask: each entry missing independently with probability p.
MaskMatrix generate_mask(std::size_t n, std::size_t d, double missing_ratio, std::uint64_t seed);

MaskedDataset apply_mask(const Matrix& x, const MaskMatrix& mask,
                         std::optional<std::vector<int>> labels = std::nullopt);

// Builds a dataset from a matrix that already carries NaN sentinels.
MaskedDataset from_observed(Matrix observed, std::optional<std::vector<int>> labels = std::nullopt);

Matrix zero_fill(const MaskedDataset& ds);

// Column mean of observed entries; columns with nothing observed get 0.
Matrix mean_fill(const MaskedDataset& ds);

// Each missing (i, j) takes the mean of entry j over the k rows nearest to
// row i that observe j. Distance is the mean squared difference over the
// features both rows observe; ties go to the lower row index. Falls back to
// the column mean when no such neighbour exists.
Matrix knn_fill(const MaskedDataset& ds, std::size_t k);

// Probability that a d-dimensional sample is fully observed at ratio p.
double fully_observed_prob(double p, std::size_t d);

// M o X + (1 - M) o X_hat
Matrix impute_from_reconstruction(const MaskedDataset& ds, const Matrix& reconstruction);

}  // namespace ddic
