#pragma once

#include <cstdint>
#include <vector>

#include "ddic/matrix.hpp"

namespace ddic {

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;  // within-cluster sum of squared distances
  std::size_t iterations = 0;  // Lloyd iterations of the kept restart
};

// Lloyd's algorithm from k-means++ seeding, best of `restarts` by inertia.
// Points go to the nearest centroid, ties to the lower index. A cluster that
// empties is re-seeded with the point farthest from its own centroid.
KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iters = 300,
                    std::size_t restarts = 10);

// Sum of squared distances from every row to the centroid of its label.
double within_cluster_ss(const Matrix& x, const std::vector<int>& labels, const Matrix& centroids);

}  // namespace ddic
