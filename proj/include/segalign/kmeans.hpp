// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/rng.hpp"
#include "segalign/types.hpp"

namespace segalign {

// Index of the row of `centers` nearest to `x` in squared Euclidean distance;
// ties go to the lowest index.
template <typename Row>
int nearest_row(const Matrix& centers, const Row& x, double* best_dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    const double d = (centers.row(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  if (best_dist) *best_dist = best_d;
  return best;
}

struct KMeansResult {
  Matrix centers;
  std::vector<int> assignment;
  double inertia = 0.0;  // sum of squared distances to the assigned center
};

// Lloyd's algorithm with k-means++ seeding and a fixed iteration count. Every
// iteration ends with a centroid update, so each center is the mean of its
// cluster (or, for a cluster that emptied, the point farthest from its center).
inline KMeansResult kmeans(const Matrix& data, int k, std::uint64_t seed, int iters) {
  const Eigen::Index n = data.rows();
  require(k >= 1, ErrorCode::Precondition, "k must be >= 1");
  require(n >= k, ErrorCode::InsufficientData,
          "k-means needs at least " + std::to_string(k) + " vectors, got " + std::to_string(n));
  require(iters >= 1, ErrorCode::Precondition, "iters must be >= 1");

  Rng rng(seed);
  KMeansResult res;
  res.centers.resize(k, data.cols());

  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
  res.centers.row(0) = data.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (data.row(i) - res.centers.row(c - 1)).squaredNorm();
      if (d < d2[i]) d2[i] = d;
      total += d2[i];
    }
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    res.centers.row(c) = data.row(pick);
  }

  res.assignment.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) res.assignment[i] = nearest_row(res.centers, data.row(i), &dist[i]);

    Matrix sums = Matrix::Zero(k, data.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.assignment[i]) += data.row(i);
      ++counts[res.assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        res.centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the worst-served point.
      Eigen::Index far = 0;
      for (Eigen::Index i = 1; i < n; ++i)
        if (dist[i] > dist[far]) far = i;
      res.centers.row(c) = data.row(far);
      dist[far] = 0.0;
    }
  }

  res.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    res.assignment[i] = nearest_row(res.centers, data.row(i), &dist[i]);
    res.inertia += dist[i];
  }
  return res;
}

}  // namespace segalign
