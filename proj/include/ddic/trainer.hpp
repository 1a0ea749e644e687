#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ddic/dec.hpp"
#include "ddic/incomplete.hpp"
#include "ddic/kmeans.hpp"
#include "ddic/matrix.hpp"

// Pretraining, centroid initialization and joint fine-tuning of the model.
namespace ddic {

enum class FillStrategy { Mean, Zero };

struct TrainConfig {
  double gamma = 100.0;
  double eps = 0.01;
  double lr = 0.001;
  std::size_t batch_size = 256;
  std::size_t max_iter = 200;  // fine-tuning epochs
  double delta = 0.001;        // stop when fewer than this fraction of labels change
  std::size_t pretrain_epochs = 50;
  std::size_t sinkhorn_unroll = 200;
  std::uint64_t seed = 0;
  FillStrategy fill = FillStrategy::Mean;
  std::size_t cluster_count = 0;
  std::vector<std::size_t> hidden_dims{500, 500, 1000};
  std::size_t embedding_dim = 10;
  LossMode loss_mode = LossMode::Joint;
  std::size_t kmeans_restarts = 10;

  // Throws ConfigError naming the first offending field.
  void validate() const;
  ArchitectureSpec architecture(std::size_t input_dim) const;
  LossOptions loss_options() const;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

// One bias-corrected Adam update of every tensor. The state sizes itself on
// the first call.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr);

struct PretrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean L_s over the batches of each epoch
};

// Minibatch Adam on L_s alone. Centroids are left untouched.
PretrainResult pretrain(ModelParams params, const Matrix& x_filled, const TrainConfig& config);

// k-means on the embeddings of x_filled.
KMeansResult init_centroids(const ModelParams& params, const Matrix& x_filled, std::size_t k, std::uint64_t seed,
                            std::size_t restarts = 10);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based fine-tuning epoch
  double reconstruction = 0.0;
  double clustering = 0.0;
  double total = 0.0;
  double label_change = 0.0;  // fraction of samples whose label moved
};

enum class StopReason { Delta, MaxIter };

struct FitResult {
  std::vector<int> labels;
  std::vector<int> initial_labels;  // k-means on the pretrained embeddings
  ModelParams model;
  Matrix filled;   // network input
  Matrix imputed;  // observed entries kept, missing ones from the decoder
  std::size_t epochs_run = 0;
  StopReason stopped_by = StopReason::MaxIter;
  std::vector<double> pretrain_loss;
  std::vector<EpochRecord> loss_history;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

Matrix fill(const MaskedDataset& ds, FillStrategy strategy);

// Fill, pretrain, initialize centroids, then fine-tune on L_s + gamma L_c
// until the label-change fraction drops below delta or max_iter epochs pass.
// Deterministic for a given (ds, config).
FitResult fit(const MaskedDataset& ds, const TrainConfig& config, const ProgressFn& progress = {});

}  // namespace ddic
