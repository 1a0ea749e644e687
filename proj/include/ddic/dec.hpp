#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ddic/autodiff.hpp"
#include "ddic/matrix.hpp"
#include "ddic/ot.hpp"

// Autoencoder with a clustering head: MLP encoder, mirrored decoder and
// Student-t soft assignment against learnable centroids.
namespace ddic {

struct ArchitectureSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{500, 500, 1000};
  std::size_t embedding_dim = 10;
  std::size_t cluster_count = 0;

  // Throws ConfigError if any dimension is 0.
  void validate() const;
  // Encoder layer widths from input to embedding, e.g. {d, 500, 500, 1000, 10}.
  std::vector<std::size_t> encoder_widths() const;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

// x W + b with W in_dim x out_dim and b 1 x out_dim.
struct DenseLayer {
  Matrix weight;
  Matrix bias;
};

struct ModelParams {
  ArchitectureSpec arch;
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;
  Matrix centroids;  // cluster_count x embedding_dim

  // Every trainable matrix: encoder (W, b) pairs, decoder pairs, centroids.
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;

  // Throws ShapeError on layer shapes that disagree with arch, ContractError
  // on non-finite entries.
  void validate() const;
};

// Glorot-uniform weights, zero biases, zero centroids.
ModelParams init_params(const ArchitectureSpec& arch, std::uint64_t seed);

// ReLU on hidden layers, linear on the last one.
Matrix encode(const ModelParams& params, const Matrix& x);
Matrix decode(const ModelParams& params, const Matrix& z);

// Student-t (one degree of freedom) similarity, rows normalized.
Matrix soft_assign(const Matrix& z, const Matrix& centroids);
// q_ij proportional to p_ij^2 / f_j with f_j the column sums of P.
Matrix target_dist(const Matrix& p);
// KL(Q || P) summed over all rows.
double kl_loss(const Matrix& p, const Matrix& q);
// Row argmax; ties go to the lowest column.
std::vector<int> hard_assign(const Matrix& p);

// Graph handles for every parameter, laid out like ModelParams.
struct ModelVars {
  struct Layer {
    ad::Var weight;
    ad::Var bias;
  };
  std::vector<Layer> encoder;
  std::vector<Layer> decoder;
  ad::Var centroids;

  // Same order as ModelParams::tensors().
  std::vector<ad::Var> tensors() const;
};

ModelVars bind_parameters(const ModelParams& params);
ModelVars bind_constants(const ModelParams& params);

ad::Var encode_node(const ModelVars& vars, const ad::Var& x);
ad::Var decode_node(const ModelVars& vars, const ad::Var& z);
// log P as a node (n x k).
ad::Var log_soft_assign_node(const ad::Var& z, const ad::Var& centroids);

enum class LossMode { Joint, ReconstructionOnly, ClusteringOnly };

struct LossTerms {
  ad::Var total;
  double reconstruction = 0.0;  // L_s
  double clustering = 0.0;      // L_c
};

struct LossOptions {
  double eps = 0.01;
  double gamma = 100.0;
  std::size_t sinkhorn_unroll = ot::kDefaultUnrollIters;
  LossMode mode = LossMode::Joint;
  // Replaces target_dist(P) when set; must match the batch's P in shape.
  std::optional<Matrix> target;
};

// L = L_s + gamma L_c on one batch. L_s is the Sinkhorn divergence between
// the batch and its reconstruction; L_c is KL(Q || P) with Q taken from the
// batch's own P and held constant. A term excluded by the mode is reported
// as 0 and not built.
LossTerms total_loss(const ModelVars& vars, const Matrix& x_batch, const LossOptions& options);

}  // namespace ddic
