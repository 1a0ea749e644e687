#include <gtest/gtest.h>

#include <cmath>
#include <bit>
#include <limits>

#include "ddic/data.hpp"
#include "ddic/error.hpp"
#include "ddic/kmeans.hpp"
#include "ddic/metrics.hpp"
#include "ddic/trainer.hpp"
#include "test_util.hpp"

using ddic::Matrix;
using ddic::testing::random_matrix;

namespace {

// Lowest WCSS over every split of the rows into two nonempty groups.
double best_two_partition(const Matrix& x) {
  const std::size_t n = x.rows();
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = (mask >> i) & 1u;
    Matrix c(2, x.cols());
    std::vector<double> count(2, 0);
    for (std::size_t i = 0; i < n; ++i) {
      count[static_cast<std::size_t>(labels[i])] += 1;
      for (std::size_t t = 0; t < x.cols(); ++t) c(static_cast<std::size_t>(labels[i]), t) += x(i, t);
    }
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t t = 0; t < x.cols(); ++t) c(j, t) /= count[j];
    best = std::min(best, ddic::within_cluster_ss(x, labels, c));
  }
  return best;
}

ddic::TrainConfig tiny_config() {
  ddic::TrainConfig c;
  c.cluster_count = 3;
  c.hidden_dims = {16};
  c.embedding_dim = 3;
  c.batch_size = 32;
  c.pretrain_epochs = 5;
  c.max_iter = 5;
  c.sinkhorn_unroll = 50;
  c.eps = 0.1;
  c.kmeans_restarts = 3;
  c.seed = 1;
  return c;
}

ddic::MaskedDataset tiny_blobs(std::uint64_t seed, double ratio = 0.2) {
  const auto b = ddic::make_blobs(60, 6, 3, 6.0, 0.5, seed);
  return ddic::apply_mask(b.features, ddic::generate_mask(60, 6, ratio, seed + 1), b.labels);
}

}  // namespace

TEST(KMeans, SingleClusterIsColumnMean) {
  const Matrix x = random_matrix(20, 3, 1);
  const auto r = ddic::kmeans(x, 1, 0);
  EXPECT_EQ(r.labels, std::vector<int>(20, 0));
  EXPECT_LT(ddic::testing::max_abs_diff(r.centroids, ddic::col_means(x)), 1e-14);
}

TEST(KMeans, TwoFarBlobsSplitExactly) {
  Matrix x = random_matrix(20, 2, 2, -0.5, 0.5);
  for (std::size_t i = 10; i < 20; ++i) x(i, 0) += 100.0;
  const auto r = ddic::kmeans(x, 2, 3);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_EQ(r.labels[i], r.labels[0]);
  for (std::size_t i = 11; i < 20; ++i) EXPECT_EQ(r.labels[i], r.labels[10]);
  EXPECT_NE(r.labels[0], r.labels[10]);
}

TEST(KMeans, TinyInstanceReachesBruteForceOptimum) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = random_matrix(6, 1, seed, 0.0, 10.0);
    const auto r = ddic::kmeans(x, 2, seed);
    EXPECT_NEAR(r.inertia, best_two_partition(x), 1e-10) << seed;
    EXPECT_NEAR(r.inertia, ddic::within_cluster_ss(x, r.labels, r.centroids), 1e-12);
  }
}

TEST(KMeans, DuplicatePointsStillFillEveryCluster) {
  const Matrix x{{0}, {0}, {0}, {0}, {10}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = ddic::kmeans(x, 3, seed, 300, 1);
    std::vector<int> counts(3, 0);
    for (int l : r.labels) ++counts[static_cast<std::size_t>(l)];
    for (int c : counts) EXPECT_GT(c, 0) << seed;
  }
}

TEST(KMeans, DeterministicAndErrors) {
  const Matrix x = random_matrix(30, 4, 5);
  const auto a = ddic::kmeans(x, 4, 9);
  const auto b = ddic::kmeans(x, 4, 9);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_TRUE(ddic::bitwise_equal(a.centroids, b.centroids));
  EXPECT_THROW(ddic::kmeans(x, 31, 0), ddic::ContractError);
  EXPECT_THROW(ddic::kmeans(x, 0, 0), ddic::ContractError);
}

TEST(Adam, ZeroGradientLeavesParamsAndAdvancesState) {
  Matrix p = random_matrix(2, 3, 1);
  const Matrix before = p;
  ddic::AdamState s;
  std::vector<Matrix*> params{&p};
  std::vector<Matrix> grads{Matrix(2, 3)};
  ddic::adam_step(params, grads, s, 0.1);
  ddic::adam_step(params, grads, s, 0.1);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 2u);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  Matrix p{{1.0, -2.0, 0.5}};
  const Matrix g{{0.3, -4.0, 1e-3}};
  ddic::AdamState s;
  std::vector<Matrix*> params{&p};
  ddic::adam_step(params, std::vector<Matrix>{g}, s, 0.01);
  // m_hat = g, v_hat = g^2, step = lr g / (|g| + 1e-8)
  for (std::size_t j = 0; j < 3; ++j) {
    const double expected = 0.01 * g(0, j) / (std::abs(g(0, j)) + 1e-8);
    EXPECT_NEAR(Matrix({{1.0, -2.0, 0.5}})(0, j) - p(0, j), expected, 1e-15);
  }
}

TEST(Adam, ZeroLearningRateAndShapeErrors) {
  Matrix p = random_matrix(2, 2, 3);
  const Matrix before = p;
  ddic::AdamState s;
  std::vector<Matrix*> params{&p};
  ddic::adam_step(params, std::vector<Matrix>{random_matrix(2, 2, 4)}, s, 0.0);
  EXPECT_EQ(p, before);
  EXPECT_THROW(ddic::adam_step(params, std::vector<Matrix>{Matrix(2, 3)}, s, 0.1), ddic::ShapeError);
  EXPECT_THROW(ddic::adam_step(params, std::vector<Matrix>{}, s, 0.1), ddic::ShapeError);
}

TEST(TrainConfig, Validation) {
  auto c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ddic::ConfigError);
  c = tiny_config();
  c.delta = 1.5;
  EXPECT_THROW(c.validate(), ddic::ConfigError);
  c = tiny_config();
  c.eps = 0.0;
  EXPECT_THROW(c.validate(), ddic::ConfigError);
  c = tiny_config();
  c.cluster_count = 0;
  EXPECT_THROW(c.validate(), ddic::ConfigError);
  c = tiny_config();
  c.gamma = -1;
  EXPECT_THROW(c.validate(), ddic::ConfigError);
}

TEST(Pretrain, ZeroEpochsOrZeroRateChangeNothing) {
  auto c = tiny_config();
  const auto ds = tiny_blobs(3);
  const Matrix x = ddic::mean_fill(ds);
  const auto params = ddic::init_params(c.architecture(6), 4);
  c.pretrain_epochs = 0;
  auto r = ddic::pretrain(params, x, c);
  EXPECT_TRUE(r.epoch_loss.empty());
  for (std::size_t t = 0; t < params.tensors().size(); ++t)
    EXPECT_TRUE(ddic::bitwise_equal(*params.tensors()[t], *r.params.tensors()[t]));
  c.pretrain_epochs = 3;
  c.lr = 0.0;
  r = ddic::pretrain(params, x, c);
  EXPECT_EQ(r.epoch_loss.size(), 3u);
  for (std::size_t t = 0; t < params.tensors().size(); ++t)
    EXPECT_TRUE(ddic::bitwise_equal(*params.tensors()[t], *r.params.tensors()[t]));
}

TEST(Pretrain, ReconstructionLossDecreases) {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto c = tiny_config();
    c.pretrain_epochs = 30;
    c.seed = seed;
    c.lr = 0.005;
    const Matrix x = ddic::mean_fill(tiny_blobs(seed + 10));
    const auto r = ddic::pretrain(ddic::init_params(c.architecture(6), seed), x, c);
    improved += r.epoch_loss.back() < r.epoch_loss.front();
  }
  EXPECT_GE(improved, 9);
}

TEST(Pretrain, RejectsNonFiniteInput) {
  const auto c = tiny_config();
  Matrix x = random_matrix(10, 6, 1);
  x(0, 0) = std::nan("");
  EXPECT_THROW(ddic::pretrain(ddic::init_params(c.architecture(6), 1), x, c), ddic::ContractError);
}

TEST(InitCentroids, SingleClusterIsMeanEmbedding) {
  const auto c = tiny_config();
  const auto params = ddic::init_params(c.architecture(6), 2);
  const Matrix x = random_matrix(15, 6, 3);
  const auto r = ddic::init_centroids(params, x, 1, 0);
  EXPECT_LT(ddic::testing::max_abs_diff(r.centroids, ddic::col_means(ddic::encode(params, x))), 1e-13);
}

TEST(InitCentroids, CentroidsLandInsideSeparatedBlobs) {
  // Identity encoder: the embeddings are the inputs themselves.
  ddic::ArchitectureSpec a;
  a.input_dim = 2;
  a.hidden_dims = {};
  a.embedding_dim = 2;
  a.cluster_count = 3;
  auto params = ddic::init_params(a, 0);
  params.encoder[0].weight = Matrix::identity(2);
  Matrix x = random_matrix(30, 2, 7, 0.0, 1.0);
  for (std::size_t i = 0; i < 30; ++i) x(i, 0) += 20.0 * static_cast<double>(i % 3);
  const auto r = ddic::init_centroids(params, x, 3, 5);
  for (std::size_t j = 0; j < 3; ++j) {
    const double cx = r.centroids(j, 0);
    const double blob = std::round(cx / 20.0);
    EXPECT_GE(cx, 20.0 * blob);
    EXPECT_LE(cx, 20.0 * blob + 1.0);
    EXPECT_GE(r.centroids(j, 1), 0.0);
    EXPECT_LE(r.centroids(j, 1), 1.0);
  }
  const auto again = ddic::init_centroids(params, x, 3, 5);
  EXPECT_TRUE(ddic::bitwise_equal(r.centroids, again.centroids));
}

TEST(Fit, DeltaOneStopsAfterFirstEpoch) {
  auto c = tiny_config();
  c.delta = 1.0;
  const auto r = ddic::fit(tiny_blobs(5), c);
  EXPECT_EQ(r.epochs_run, 1u);
  EXPECT_EQ(r.stopped_by, ddic::StopReason::Delta);
  EXPECT_EQ(r.loss_history.size(), 1u);
}

TEST(Fit, ZeroMaxIterReturnsInitialClustering) {
  auto c = tiny_config();
  c.max_iter = 0;
  const auto r = ddic::fit(tiny_blobs(6), c);
  EXPECT_EQ(r.epochs_run, 0u);
  EXPECT_EQ(r.stopped_by, ddic::StopReason::MaxIter);
  EXPECT_EQ(r.labels, r.initial_labels);
  EXPECT_EQ(r.labels, ddic::hard_assign(ddic::soft_assign(ddic::encode(r.model, r.filled), r.model.centroids)));
}

TEST(Fit, DeterministicWithFiniteHistoryAndExactObservedEntries) {
  const auto ds = tiny_blobs(7, 0.3);
  auto c = tiny_config();
  c.delta = 0.0;
  std::size_t callbacks = 0;
  const auto a = ddic::fit(ds, c, [&](const ddic::EpochRecord&) { ++callbacks; });
  const auto b = ddic::fit(ds, c);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_TRUE(ddic::bitwise_equal(a.imputed, b.imputed));
  EXPECT_EQ(callbacks, a.loss_history.size());
  EXPECT_EQ(a.epochs_run, 5u);
  EXPECT_EQ(a.pretrain_loss.size(), 5u);
  for (const auto& rec : a.loss_history) {
    EXPECT_TRUE(std::isfinite(rec.total));
    EXPECT_NEAR(rec.total, rec.reconstruction + c.gamma * rec.clustering, 1e-9 * std::max(1.0, rec.total));
  }
  for (int l : a.labels) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, 3);
  }
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      EXPECT_TRUE(std::isfinite(a.imputed(i, j)));
      if (ds.mask.observed(i, j)) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(a.imputed(i, j)), std::bit_cast<std::uint64_t>(ds.observed(i, j)));
      }
    }
}

TEST(Fit, IdenticalConsecutiveLabelsStop) {
  auto c = tiny_config();
  c.lr = 0.0;
  c.delta = 1e-9;
  const auto r = ddic::fit(tiny_blobs(8), c);
  EXPECT_EQ(r.stopped_by, ddic::StopReason::Delta);
  EXPECT_EQ(r.loss_history.back().label_change, 0.0);
}

TEST(Fit, LossModesTrainDifferentParts) {
  const auto ds = tiny_blobs(9);
  auto c = tiny_config();
  c.delta = 0.0;
  c.max_iter = 2;
  c.loss_mode = ddic::LossMode::ReconstructionOnly;
  const auto rec = ddic::fit(ds, c);
  c.max_iter = 0;
  const auto base = ddic::fit(ds, c);
  EXPECT_TRUE(ddic::bitwise_equal(rec.model.centroids, base.model.centroids));
  for (const auto& e : rec.loss_history) EXPECT_EQ(e.clustering, 0.0);

  c.max_iter = 2;
  c.loss_mode = ddic::LossMode::ClusteringOnly;
  const auto clu = ddic::fit(ds, c);
  for (std::size_t l = 0; l < clu.model.decoder.size(); ++l)
    EXPECT_TRUE(ddic::bitwise_equal(clu.model.decoder[l].weight, base.model.decoder[l].weight));
  EXPECT_FALSE(ddic::bitwise_equal(clu.model.centroids, base.model.centroids));
}

TEST(Fit, Errors) {
  auto c = tiny_config();
  c.cluster_count = 61;
  EXPECT_THROW(ddic::fit(tiny_blobs(1), c), ddic::ContractError);
  c = tiny_config();
  c.batch_size = 0;
  EXPECT_THROW(ddic::fit(tiny_blobs(1), c), ddic::ConfigError);
}

TEST(Fit, SeparatedBlobsClusterWell) {
  const auto b = ddic::make_blobs(90, 8, 3, 8.0, 0.5, 21);
  const auto ds = ddic::apply_mask(b.features, ddic::generate_mask(90, 8, 0.2, 22), b.labels);
  auto c = tiny_config();
  c.pretrain_epochs = 20;
  c.max_iter = 10;
  c.lr = 0.003;
  const auto r = ddic::fit(ds, c);
  EXPECT_GE(ddic::acc(b.labels, r.labels), 0.9);
}
