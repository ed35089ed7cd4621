#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "mcoco/error.hpp"
#include "mcoco/metrics.hpp"
#include "mcoco/model.hpp"
#include "mcoco/nn.hpp"
#include "mcoco/rng.hpp"

namespace mcoco {

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
  double relative_tolerance = 1e-4;
};

struct KMeansResult {
  Matrix centroids;  // [k x D]
  std::vector<std::size_t> labels;
  double wcss = 0.0;
  int iterations = 0;
};

namespace detail {

inline Eigen::VectorXd squared_distances_to(const Matrix& points, const Eigen::RowVectorXd& center) {
  return (points.rowwise() - center).rowwise().squaredNorm();
}

/// k-means++ seeding: first center uniform, the rest drawn with probability
/// proportional to squared distance to the nearest chosen center.
inline Matrix kmeanspp_seed(const Matrix& points, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  Matrix centers(static_cast<Eigen::Index>(k), points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.index(n)));
  Eigen::VectorXd nearest = squared_distances_to(points, centers.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    const double total = nearest.sum();
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= nearest(static_cast<Eigen::Index>(i));
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
      // Never pick a point already coincident with a center.
      while (nearest(static_cast<Eigen::Index>(pick)) <= 0.0) pick = (pick + n - 1) % n;
    } else {
      pick = static_cast<std::size_t>(rng.index(n));
    }
    centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    nearest = nearest.cwiseMin(squared_distances_to(points, centers.row(static_cast<Eigen::Index>(c))));
  }
  return centers;
}

inline double assign_points(const Matrix& points, const Matrix& centers, std::vector<std::size_t>& labels,
                            Eigen::VectorXd& best_dist) {
  const auto n = points.rows();
  best_dist.setConstant(n, std::numeric_limits<double>::infinity());
  labels.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const Eigen::VectorXd d = squared_distances_to(points, centers.row(c));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d(i) < best_dist(i)) {
        best_dist(i) = d(i);
        labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(c);
      }
    }
  }
  return best_dist.sum();
}

inline KMeansResult lloyd(const Matrix& points, Matrix centers, const KMeansOptions& options) {
  const auto n = points.rows();
  const auto k = centers.rows();
  KMeansResult result;
  Eigen::VectorXd best_dist;
  double previous = assign_points(points, centers, result.labels, best_dist);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = result.labels[static_cast<std::size_t>(i)];
      sums.row(static_cast<Eigen::Index>(c)) += points.row(i);
      ++counts[c];
    }
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: move it to the point farthest from its own center.
      Eigen::Index far = 0;
      double far_dist = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!taken[static_cast<std::size_t>(i)] && best_dist(i) > far_dist) {
          far_dist = best_dist(i);
          far = i;
        }
      }
      taken[static_cast<std::size_t>(far)] = true;
      centers.row(c) = points.row(far);
    }
    const double current = assign_points(points, centers, result.labels, best_dist);
    result.iterations = iter;
    const bool converged = previous - current <= options.relative_tolerance * std::max(previous, 1e-300);
    previous = current;
    if (converged) break;
  }
  result.centroids = std::move(centers);
  result.wcss = previous;
  return result;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; keeps the restart with the lowest
/// within-cluster sum of squares.
inline KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, const KMeansOptions& options = {}) {
  detail::require(k >= 1, "kmeans: k must be positive");
  detail::require(points.rows() >= 1, "kmeans: no points");
  detail::require(k <= static_cast<std::size_t>(points.rows()),
                  "kmeans: k=" + std::to_string(k) + " exceeds the number of points N=" + std::to_string(points.rows()));
  detail::require(points.allFinite(), "kmeans: points contain non-finite values");
  detail::require(options.restarts >= 1, "kmeans: restarts must be positive");
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    auto result = detail::lloyd(points, detail::kmeanspp_seed(points, k, rng), options);
    if (result.wcss < best.wcss) best = std::move(result);
  }
  return best;
}

/// Runs k-means independently on each view's latent matrix, then reorders the
/// centroid rows of views 1..m-1 so that cluster j means the same group of
/// samples in every view (maximum label overlap with view 0). The cross-view
/// KL terms compare assignments column by column, so indices must agree.
inline CentroidSet init_centroids(const std::vector<Matrix>& latents, std::size_t k, Rng& rng,
                                  const KMeansOptions& options = {}) {
  CentroidSet set;
  std::vector<std::size_t> reference;
  for (std::size_t v = 0; v < latents.size(); ++v) {
    auto result = kmeans(latents[v], k, rng, options);
    if (v == 0) {
      reference = result.labels;
      set.centroids.push_back(std::move(result.centroids));
      continue;
    }
    detail::require(result.labels.size() == reference.size(), "init_centroids: views have different sample counts");
    Matrix overlap = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < reference.size(); ++i) {
      overlap(static_cast<Eigen::Index>(result.labels[i]), static_cast<Eigen::Index>(reference[i])) -= 1.0;
    }
    const auto target = hungarian_min_cost(overlap);
    Matrix aligned(result.centroids.rows(), result.centroids.cols());
    for (std::size_t c = 0; c < k; ++c) {
      aligned.row(static_cast<Eigen::Index>(target[c])) = result.centroids.row(static_cast<Eigen::Index>(c));
    }
    set.centroids.push_back(std::move(aligned));
  }
  return set;
}

}  // namespace mcoco
