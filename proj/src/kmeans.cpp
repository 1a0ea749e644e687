#include "ddic/kmeans.hpp"

#include <limits>
#include <random>

#include "ddic/error.hpp"

namespace ddic {

namespace {

// |x_i - c_j|^2 through the norm expansion, clamped at 0.
Matrix sq_dists_to(const Matrix& x, const Matrix& c, const std::vector<double>& x_norms) {
  Matrix d = matmul_nt(x, c);
  std::vector<double> c_norms(c.rows(), 0.0);
  for (std::size_t j = 0; j < c.rows(); ++j) {
    for (double v : c.row(j)) c_norms[j] += v * v;
  }
  for (std::size_t i = 0; i < d.rows(); ++i) {
    auto row = d.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double v = x_norms[i] + c_norms[j] - 2.0 * row[j];
      row[j] = v > 0.0 ? v : 0.0;
    }
  }
  return d;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += (a[t] - b[t]) * (a[t] - b[t]);
  return s;
}

Matrix plus_plus_seeds(const Matrix& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  Matrix c(k, x.cols());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t first = pick(rng);
  std::copy(x.row(first).begin(), x.row(first).end(), c.row(0).begin());

  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = sq_dist(x.row(i), c.row(0));
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (double d : closest) total += d;
    std::size_t chosen = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (closest[i] == 0.0) continue;
        target -= closest[i];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
      while (closest[chosen] == 0.0) --chosen;  // rounding at the tail
    } else {
      chosen = pick(rng);  // every point already coincides with a seed
    }
    std::copy(x.row(chosen).begin(), x.row(chosen).end(), c.row(j).begin());
    for (std::size_t i = 0; i < n; ++i) closest[i] = std::min(closest[i], sq_dist(x.row(i), c.row(j)));
  }
  return c;
}

KMeansResult lloyd(const Matrix& x, Matrix centroids, std::size_t max_iters, const std::vector<double>& x_norms) {
  const std::size_t n = x.rows();
  const std::size_t k = centroids.rows();
  KMeansResult r;
  r.labels.assign(n, -1);
  std::vector<double> dist(n);
  std::vector<std::size_t> counts(k);

  for (std::size_t it = 0; it < max_iters; ++it) {
    const Matrix d = sq_dists_to(x, centroids, x_norms);
    bool changed = false;
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = d.row(i);
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (row[j] < row[best]) best = j;
      }
      if (r.labels[i] != static_cast<int>(best)) changed = true;
      r.labels[i] = static_cast<int>(best);
      dist[i] = row[best];
      ++counts[best];
    }
    if (!changed) break;
    r.iterations = it + 1;

    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(r.labels[i])] < 2) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      if (far == n) break;  // cannot happen while k <= n
      --counts[static_cast<std::size_t>(r.labels[far])];
      r.labels[far] = static_cast<int>(j);
      counts[j] = 1;
      dist[far] = 0.0;
    }

    centroids = Matrix(k, x.cols());
    for (std::size_t i = 0; i < n; ++i) {
      auto c = centroids.row(static_cast<std::size_t>(r.labels[i]));
      const auto row = x.row(i);
      for (std::size_t t = 0; t < c.size(); ++t) c[t] += row[t];
    }
    for (std::size_t j = 0; j < k; ++j) {
      for (double& v : centroids.row(j)) v /= static_cast<double>(counts[j]);
    }
  }
  r.centroids = std::move(centroids);
  r.inertia = within_cluster_ss(x, r.labels, r.centroids);
  return r;
}

}  // namespace

double within_cluster_ss(const Matrix& x, const std::vector<int>& labels, const Matrix& centroids) {
  if (labels.size() != x.rows()) throw ShapeError("within_cluster_ss: label count differs from rows");
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto l = labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= centroids.rows()) {
      throw ContractError("within_cluster_ss: label out of range");
    }
    s += sq_dist(x.row(i), centroids.row(static_cast<std::size_t>(l)));
  }
  return s;
}

KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iters, std::size_t restarts) {
  if (k == 0) throw ContractError("kmeans: k must be >= 1");
  if (k > x.rows()) {
    throw ContractError("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(x.rows()) + " points");
  }
  if (restarts == 0) throw ContractError("kmeans: need at least one restart");
  if (!all_finite(x)) throw ContractError("kmeans: input must be finite");

  std::vector<double> x_norms(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (double v : x.row(i)) x_norms[i] += v * v;
  }
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    KMeansResult run = lloyd(x, plus_plus_seeds(x, k, rng), std::max<std::size_t>(max_iters, 1), x_norms);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

}  // namespace ddic
