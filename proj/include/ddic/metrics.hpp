#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddic/matrix.hpp"

// External clustering metrics against ground-truth classes.
namespace ddic {

// Minimum-cost perfect matching on a square cost matrix: result[r] is the
// column assigned to row r.
std::vector<std::size_t> hungarian(const Matrix& cost);

// Rows: predicted clusters, columns: true classes, both densely re-indexed
// in increasing label order.
Matrix contingency(std::span<const int> truth, std::span<const int> pred);

// Best one-to-one cluster-to-class matching, matched / n.
double acc(std::span<const int> truth, std::span<const int> pred);

enum class NmiNorm { Geometric, Arithmetic };

// I(T; P) normalized by the mean of H(T) and H(P) (natural log). 1 when both
// partitions are single clusters, 0 when exactly one of them is.
double nmi(std::span<const int> truth, std::span<const int> pred, NmiNorm norm = NmiNorm::Geometric);

double purity(std::span<const int> truth, std::span<const int> pred);

struct MetricsReport {
  std::string dataset;
  std::string method;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::size_t run = 0;
  double acc = 0.0;
  double nmi = 0.0;
  double purity = 0.0;
  std::size_t epochs = 0;
  double wall_time_s = 0.0;
  bool failed = false;
  std::string error;
};

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
};

struct AggregateRow {
  std::string dataset;
  std::string method;
  double ratio = 0.0;
  MetricStats acc;
  MetricStats nmi;
  MetricStats purity;
  std::size_t runs = 0;
};

MetricStats mean_std(std::span<const double> values);

// Aggregates the given reports; dataset, method and ratio are copied from the
// first one.
AggregateRow aggregate(std::span<const MetricsReport> reports);

}  // namespace ddic
