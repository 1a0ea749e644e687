#include "ddic/dec.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ddic/error.hpp"

namespace ddic {

namespace {

DenseLayer glorot_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  DenseLayer layer{Matrix(in, out), Matrix(1, out)};
  for (double& w : layer.weight.values()) w = dist(rng);
  return layer;
}

Matrix dense_stack(const std::vector<DenseLayer>& layers, const Matrix& input, const char* what) {
  if (layers.empty()) throw ContractError(std::string(what) + ": no layers");
  if (input.cols() != layers.front().weight.rows()) {
    throw ShapeError(std::string(what) + ": input " + shape_string(input) + " for layer of " +
                     shape_string(layers.front().weight));
  }
  Matrix h = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = matmul(h, layers[l].weight);
    const auto b = layers[l].bias.row(0);
    const bool hidden = l + 1 < layers.size();
    for (std::size_t i = 0; i < h.rows(); ++i) {
      auto row = h.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double v = row[j] + b[j];
        row[j] = hidden && v < 0.0 ? 0.0 : v;
      }
    }
  }
  return h;
}

ad::Var dense_stack_node(const std::vector<ModelVars::Layer>& layers, const ad::Var& input,
                         const char* what) {
  if (layers.empty()) throw ContractError(std::string(what) + ": no layers");
  if (input.cols() != layers.front().weight.rows()) {
    throw ShapeError(std::string(what) + ": input " + shape_string(input.value()) +
                     " for layer of " + shape_string(layers.front().weight.value()));
  }
  ad::Var h = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = ad::add_row(ad::matmul(h, layers[l].weight), layers[l].bias);
    if (l + 1 < layers.size()) h = ad::relu(h);
  }
  return h;
}

void check_layers(const std::vector<DenseLayer>& layers, const std::vector<std::size_t>& widths,
                  const char* what) {
  if (layers.size() + 1 != widths.size()) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(widths.size() - 1) +
                     " layers, found " + std::to_string(layers.size()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rows() != widths[l] || layer.weight.cols() != widths[l + 1] ||
        layer.bias.rows() != 1 || layer.bias.cols() != widths[l + 1]) {
      throw ShapeError(std::string(what) + " layer " + std::to_string(l) + ": weight " +
                       shape_string(layer.weight) + ", bias " + shape_string(layer.bias));
    }
  }
}

void check_assignment(const Matrix& p, const char* what) {
  if (p.rows() == 0 || p.cols() == 0) throw ShapeError(std::string(what) + ": empty assignment matrix");
}

ModelVars bind(const ModelParams& params, ad::Var (*make)(Matrix)) {
  ModelVars vars;
  for (const auto& layer : params.encoder) vars.encoder.push_back({make(layer.weight), make(layer.bias)});
  for (const auto& layer : params.decoder) vars.decoder.push_back({make(layer.weight), make(layer.bias)});
  vars.centroids = make(params.centroids);
  return vars;
}

}  // namespace

void ArchitectureSpec::validate() const {
  if (input_dim == 0) throw ConfigError("architecture: input_dim must be >= 1");
  if (embedding_dim == 0) throw ConfigError("architecture: embedding_dim must be >= 1");
  if (cluster_count == 0) throw ConfigError("architecture: cluster_count must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("architecture: hidden layer widths must be >= 1");
  }
}

std::vector<std::size_t> ArchitectureSpec::encoder_widths() const {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
  w.push_back(embedding_dim);
  return w;
}

namespace {

template <typename Self>
auto collect_tensors(Self& self) {
  std::vector<decltype(&self.centroids)> out;
  for (auto& layer : self.encoder) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  for (auto& layer : self.decoder) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  out.push_back(&self.centroids);
  return out;
}

}  // namespace

std::vector<Matrix*> ModelParams::tensors() { return collect_tensors(*this); }

std::vector<const Matrix*> ModelParams::tensors() const { return collect_tensors(*this); }

void ModelParams::validate() const {
  arch.validate();
  auto widths = arch.encoder_widths();
  check_layers(encoder, widths, "encoder");
  std::reverse(widths.begin(), widths.end());
  check_layers(decoder, widths, "decoder");
  if (centroids.rows() != arch.cluster_count || centroids.cols() != arch.embedding_dim) {
    throw ShapeError("centroids " + shape_string(centroids) + " for " + std::to_string(arch.cluster_count) +
                     " clusters in " + std::to_string(arch.embedding_dim) + " dimensions");
  }
  for (const Matrix* m : tensors()) {
    if (!all_finite(*m)) throw ContractError("model parameters contain non-finite values");
  }
}

ModelParams init_params(const ArchitectureSpec& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.arch = arch;
  const auto widths = arch.encoder_widths();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    p.encoder.push_back(glorot_layer(widths[l], widths[l + 1], rng));
  }
  for (std::size_t l = widths.size() - 1; l > 0; --l) {
    p.decoder.push_back(glorot_layer(widths[l], widths[l - 1], rng));
  }
  p.centroids = Matrix(arch.cluster_count, arch.embedding_dim);
  return p;
}

Matrix encode(const ModelParams& params, const Matrix& x) { return dense_stack(params.encoder, x, "encode"); }

Matrix decode(const ModelParams& params, const Matrix& z) { return dense_stack(params.decoder, z, "decode"); }

Matrix soft_assign(const Matrix& z, const Matrix& centroids) {
  if (centroids.rows() == 0) throw ContractError("soft_assign: need at least one centroid");
  if (z.cols() != centroids.cols()) {
    throw ShapeError("soft_assign: embeddings " + shape_string(z) + " vs centroids " + shape_string(centroids));
  }
  Matrix p = pairwise_sq_dists(z, centroids);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto row = p.row(i);
    double total = 0.0;
    for (double& v : row) {
      v = 1.0 / (1.0 + v);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  return p;
}

Matrix target_dist(const Matrix& p) {
  check_assignment(p, "target_dist");
  const Matrix freq = col_sums(p);
  Matrix q(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      if (freq(0, j) == 0.0) continue;
      q(i, j) = p(i, j) * p(i, j) / freq(0, j);
      total += q(i, j);
    }
    if (total > 0.0) {
      for (double& v : q.row(i)) v /= total;
    }
  }
  return q;
}

double kl_loss(const Matrix& p, const Matrix& q) {
  require_same_shape(p, q, "kl_loss");
  double loss = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double qv = q.values()[k];
    const double pv = p.values()[k];
    if (qv == 0.0) continue;
    if (!(pv > 0.0)) throw ContractError("kl_loss: q > 0 where p == 0");
    loss += qv * std::log(qv / pv);
  }
  return loss;
}

std::vector<int> hard_assign(const Matrix& p) {
  std::vector<int> labels(p.rows(), 0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto row = p.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] > row[best]) best = j;
    }
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

std::vector<ad::Var> ModelVars::tensors() const {
  std::vector<ad::Var> out;
  for (const auto& layer : encoder) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  for (const auto& layer : decoder) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  out.push_back(centroids);
  return out;
}

ModelVars bind_parameters(const ModelParams& params) { return bind(params, &ad::parameter); }

ModelVars bind_constants(const ModelParams& params) { return bind(params, &ad::constant); }

ad::Var encode_node(const ModelVars& vars, const ad::Var& x) { return dense_stack_node(vars.encoder, x, "encode"); }

ad::Var decode_node(const ModelVars& vars, const ad::Var& z) { return dense_stack_node(vars.decoder, z, "decode"); }

ad::Var log_soft_assign_node(const ad::Var& z, const ad::Var& centroids) {
  if (centroids.rows() == 0) throw ContractError("soft_assign: need at least one centroid");
  // log p_ij = -log(1 + d_ij) - LSE_j'(-log(1 + d_ij'))
  ad::Var logits = ad::scale(ad::log(ad::add_scalar(ad::pairwise_sq_dists(z, centroids), 1.0)), -1.0);
  return ad::add_col(logits, ad::scale(ad::logsumexp_rows(logits), -1.0));
}

LossTerms total_loss(const ModelVars& vars, const Matrix& x_batch, const LossOptions& options) {
  if (!(options.gamma >= 0.0)) throw ContractError("total_loss: gamma must be >= 0");
  if (x_batch.rows() == 0) throw ShapeError("total_loss: empty batch");
  const ad::Var x = ad::constant(x_batch);
  const ad::Var z = encode_node(vars, x);
  const bool with_ls = options.mode != LossMode::ClusteringOnly;
  const bool with_lc = options.mode != LossMode::ReconstructionOnly;

  LossTerms terms;
  ad::Var total;
  if (with_ls) {
    const ad::Var x_hat = decode_node(vars, z);
    total = ot::sinkhorn_loss_node(x, x_hat, options.eps, options.sinkhorn_unroll);
    terms.reconstruction = total.scalar();
  }
  if (with_lc) {
    const ad::Var log_p = log_soft_assign_node(z, vars.centroids);
    Matrix p = log_p.value();
    for (double& v : p.values()) v = std::exp(v);
    const Matrix q = options.target ? *options.target : target_dist(p);
    require_same_shape(p, q, "total_loss target");
    Matrix log_q = q;
    for (double& v : log_q.values()) v = v > 0.0 ? std::log(v) : 0.0;
    // sum Q (log Q - log P), Q fixed
    const ad::Var lc = ad::sum(ad::mul(ad::constant(q), ad::sub(ad::constant(log_q), log_p)));
    terms.clustering = lc.scalar();
    if (!with_ls) {
      total = ad::scale(lc, options.gamma);
    } else if (options.gamma > 0.0) {
      total = ad::add(total, ad::scale(lc, options.gamma));
    }
  }
  terms.total = total;
  return terms;
}

}  // namespace ddic
