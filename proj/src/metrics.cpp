#include "ddic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "ddic/error.hpp"

namespace ddic {

namespace {

void check_labels(std::span<const int> truth, std::span<const int> pred, const char* what) {
  if (truth.size() != pred.size()) {
    throw ContractError(std::string(what) + ": " + std::to_string(truth.size()) + " true labels vs " +
                        std::to_string(pred.size()) + " predictions");
  }
  if (truth.empty()) throw ContractError(std::string(what) + ": empty label vectors");
}

std::vector<std::size_t> dense_index(std::span<const int> labels, std::size_t& count) {
  std::map<int, std::size_t> ids;
  for (int l : labels) ids.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [label, id] : ids) id = next++;
  count = next;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = ids[labels[i]];
  return out;
}

double entropy(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

}  // namespace

std::vector<std::size_t> hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw ShapeError("hungarian: cost " + shape_string(cost) + " is not square");
  const std::size_t n = cost.rows();
  if (n == 0) return {};
  // Shortest augmenting paths with row/column potentials; 1-based helpers.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r0 = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost(r0 - 1, c - 1) - u[r0] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t c = 1; c <= n; ++c) assignment[match[c] - 1] = c - 1;
  return assignment;
}

Matrix contingency(std::span<const int> truth, std::span<const int> pred) {
  check_labels(truth, pred, "contingency");
  std::size_t classes = 0, clusters = 0;
  const auto t = dense_index(truth, classes);
  const auto p = dense_index(pred, clusters);
  Matrix table(clusters, classes);
  for (std::size_t i = 0; i < t.size(); ++i) table(p[i], t[i]) += 1.0;
  return table;
}

double acc(std::span<const int> truth, std::span<const int> pred) {
  const Matrix table = contingency(truth, pred);
  const std::size_t side = std::max(table.rows(), table.cols());
  double top = 0.0;
  for (double v : table.values()) top = std::max(top, v);
  // Padded square cost; maximizing matches == minimizing (top - count).
  Matrix cost(side, side, top);
  for (std::size_t r = 0; r < table.rows(); ++r)
    for (std::size_t c = 0; c < table.cols(); ++c) cost(r, c) = top - table(r, c);
  const auto assignment = hungarian(cost);
  double matched = 0.0;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (assignment[r] < table.cols()) matched += table(r, assignment[r]);
  }
  return matched / static_cast<double>(truth.size());
}

double nmi(std::span<const int> truth, std::span<const int> pred, NmiNorm norm) {
  const Matrix table = contingency(truth, pred);
  const double n = static_cast<double>(truth.size());
  std::vector<double> cluster_sizes(table.rows(), 0.0), class_sizes(table.cols(), 0.0);
  for (std::size_t r = 0; r < table.rows(); ++r)
    for (std::size_t c = 0; c < table.cols(); ++c) {
      cluster_sizes[r] += table(r, c);
      class_sizes[c] += table(r, c);
    }
  const double h_pred = entropy(cluster_sizes, n);
  const double h_true = entropy(class_sizes, n);
  if (table.rows() == 1 && table.cols() == 1) return 1.0;
  if (table.rows() == 1 || table.cols() == 1) return 0.0;

  double mi = 0.0;
  for (std::size_t r = 0; r < table.rows(); ++r)
    for (std::size_t c = 0; c < table.cols(); ++c) {
      const double nij = table(r, c);
      if (nij > 0.0) mi += (nij / n) * std::log(n * nij / (cluster_sizes[r] * class_sizes[c]));
    }
  const double denom = norm == NmiNorm::Geometric ? std::sqrt(h_true * h_pred) : 0.5 * (h_true + h_pred);
  return std::clamp(mi / denom, 0.0, 1.0);
}

double purity(std::span<const int> truth, std::span<const int> pred) {
  const Matrix table = contingency(truth, pred);
  double total = 0.0;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto row = table.row(r);
    total += *std::max_element(row.begin(), row.end());
  }
  return total / static_cast<double>(truth.size());
}

MetricStats mean_std(std::span<const double> values) {
  if (values.empty()) throw ContractError("mean_std: no values");
  MetricStats s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

AggregateRow aggregate(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ContractError("aggregate: no reports");
  AggregateRow row;
  row.dataset = reports.front().dataset;
  row.method = reports.front().method;
  row.ratio = reports.front().ratio;
  row.runs = reports.size();
  std::vector<double> a, n, p;
  for (const auto& r : reports) {
    a.push_back(r.acc);
    n.push_back(r.nmi);
    p.push_back(r.purity);
  }
  row.acc = mean_std(a);
  row.nmi = mean_std(n);
  row.purity = mean_std(p);
  return row;
}

}  // namespace ddic
