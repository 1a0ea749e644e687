#include "ddic/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "ddic/error.hpp"
#include "ddic/random.hpp"

namespace ddic {

namespace {

enum Stream : std::uint64_t { kInitStream = 1, kPretrainStream, kKMeansStream, kFineTuneStream };

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with explicit draws; std::shuffle's sequence varies between
  // standard libraries.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

struct EpochSums {
  double reconstruction = 0.0;
  double clustering = 0.0;
  double total = 0.0;
  std::size_t batches = 0;
};

// One pass over x in shuffled minibatches, one Adam step per batch.
EpochSums run_epoch(ModelParams& params, AdamState& adam, const Matrix& x, const TrainConfig& config,
                    const LossOptions& options, bool train_centroids, std::mt19937_64& rng, const char* phase,
                    std::size_t epoch) {
  const auto order = shuffled(x.rows(), rng);
  EpochSums sums;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t stop = std::min(order.size(), start + config.batch_size);
    const Matrix batch = select_rows(x, std::span(order).subspan(start, stop - start));

    const ModelVars vars = bind_parameters(params);
    const LossTerms terms = total_loss(vars, batch, options);
    const double loss = terms.total.scalar();
    if (!std::isfinite(loss)) {
      throw TrainingError(std::string(phase) + " epoch " + std::to_string(epoch) + " batch " +
                          std::to_string(sums.batches) + ": non-finite loss");
    }
    ad::backward(terms.total);

    std::vector<Matrix*> targets = params.tensors();
    std::vector<Matrix> grads;
    grads.reserve(targets.size());
    for (const ad::Var& v : vars.tensors()) grads.push_back(v.grad());
    if (!train_centroids) {
      targets.pop_back();
      grads.pop_back();
    }
    adam_step(targets, grads, adam, config.lr);

    sums.reconstruction += terms.reconstruction;
    sums.clustering += terms.clustering;
    sums.total += loss;
    ++sums.batches;
  }
  return sums;
}

double change_fraction(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t moved = 0;
  for (std::size_t i = 0; i < a.size(); ++i) moved += a[i] != b[i];
  return a.empty() ? 0.0 : static_cast<double>(moved) / static_cast<double>(a.size());
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be > 0");
  };
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be >= 0");
  positive(eps, "eps");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be >= 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in [0, 1]");
  if (sinkhorn_unroll == 0) throw ConfigError("sinkhorn_unroll must be >= 1");
  if (cluster_count == 0) throw ConfigError("cluster_count must be >= 1");
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be >= 1");
  if (kmeans_restarts == 0) throw ConfigError("kmeans_restarts must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("hidden layer widths must be >= 1");
  }
}

ArchitectureSpec TrainConfig::architecture(std::size_t input_dim) const {
  ArchitectureSpec a;
  a.input_dim = input_dim;
  a.hidden_dims = hidden_dims;
  a.embedding_dim = embedding_dim;
  a.cluster_count = cluster_count;
  return a;
}

LossOptions TrainConfig::loss_options() const {
  LossOptions o;
  o.eps = eps;
  o.gamma = gamma;
  o.sinkhorn_unroll = sinkhorn_unroll;
  o.mode = loss_mode;
  return o;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
  for (std::size_t t = 0; t < params.size(); ++t) require_same_shape(*params[t], grads[t], "adam_step");
  if (state.step == 0 && state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state sized for a different model");
  for (std::size_t t = 0; t < params.size(); ++t) require_same_shape(state.m[t], grads[t], "adam_step state");

  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t]->values();
    const auto g = grads[t].values();
    auto m = state.m[t].values();
    auto v = state.v[t].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEpsilon);
    }
  }
}

PretrainResult pretrain(ModelParams params, const Matrix& x_filled, const TrainConfig& config) {
  config.validate();
  if (!all_finite(x_filled)) throw ContractError("pretrain: input must be fully finite");
  if (x_filled.cols() != params.arch.input_dim) {
    throw ShapeError("pretrain: input " + shape_string(x_filled) + " for a model of width " +
                     std::to_string(params.arch.input_dim));
  }
  LossOptions options = config.loss_options();
  options.mode = LossMode::ReconstructionOnly;
  std::mt19937_64 rng(derive_seed(config.seed, kPretrainStream));
  AdamState adam;
  PretrainResult out;
  for (std::size_t epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    const EpochSums s = run_epoch(params, adam, x_filled, config, options, false, rng, "pretrain", epoch);
    out.epoch_loss.push_back(s.reconstruction / static_cast<double>(s.batches));
  }
  out.params = std::move(params);
  return out;
}

KMeansResult init_centroids(const ModelParams& params, const Matrix& x_filled, std::size_t k, std::uint64_t seed,
                            std::size_t restarts) {
  return kmeans(encode(params, x_filled), k, seed, 300, restarts);
}

Matrix fill(const MaskedDataset& ds, FillStrategy strategy) {
  return strategy == FillStrategy::Zero ? zero_fill(ds) : mean_fill(ds);
}

FitResult fit(const MaskedDataset& ds, const TrainConfig& config, const ProgressFn& progress) {
  config.validate();
  if (ds.rows() == 0 || ds.cols() == 0) throw ContractError("fit: empty dataset");
  if (config.cluster_count > ds.rows()) {
    throw ContractError("fit: " + std::to_string(config.cluster_count) + " clusters for " +
                        std::to_string(ds.rows()) + " samples");
  }

  FitResult result;
  result.filled = fill(ds, config.fill);
  const ModelParams initial = init_params(config.architecture(ds.cols()), derive_seed(config.seed, kInitStream));
  PretrainResult pre = pretrain(initial, result.filled, config);
  result.pretrain_loss = std::move(pre.epoch_loss);
  ModelParams model = std::move(pre.params);

  KMeansResult init = init_centroids(model, result.filled, config.cluster_count,
                                     derive_seed(config.seed, kKMeansStream), config.kmeans_restarts);
  model.centroids = init.centroids;
  result.initial_labels = init.labels;
  std::vector<int> labels = std::move(init.labels);

  const LossOptions options = config.loss_options();
  const bool train_centroids = config.loss_mode != LossMode::ReconstructionOnly;
  std::mt19937_64 rng(derive_seed(config.seed, kFineTuneStream));
  AdamState adam;
  for (std::size_t epoch = 1; epoch <= config.max_iter; ++epoch) {
    const EpochSums s = run_epoch(model, adam, result.filled, config, options, train_centroids, rng, "fine-tune", epoch);
    std::vector<int> next = hard_assign(soft_assign(encode(model, result.filled), model.centroids));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.reconstruction = s.reconstruction / static_cast<double>(s.batches);
    rec.clustering = s.clustering / static_cast<double>(s.batches);
    rec.total = s.total / static_cast<double>(s.batches);
    rec.label_change = change_fraction(labels, next);
    result.loss_history.push_back(rec);
    if (progress) progress(rec);

    labels = std::move(next);
    result.epochs_run = epoch;
    if (rec.label_change < config.delta) {
      result.stopped_by = StopReason::Delta;
      break;
    }
  }

  result.imputed = impute_from_reconstruction(ds, decode(model, encode(model, result.filled)));
  result.labels = std::move(labels);
  result.model = std::move(model);
  return result;
}

}  // namespace ddic
