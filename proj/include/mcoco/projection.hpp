#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "mcoco/error.hpp"
#include "mcoco/nn.hpp"
#include "mcoco/rng.hpp"

namespace mcoco {

/// Projects rows onto the two leading principal axes of the centered data.
/// Each axis is signed so its largest-magnitude loading is positive.
inline Matrix pca_2d(const Matrix& points) {
  detail::require(points.rows() >= 1 && points.cols() >= 1, "pca_2d: empty input");
  const Matrix centered = points.rowwise() - points.colwise().mean();
  const Matrix cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  const auto d = cov.rows();
  Matrix axes = Matrix::Zero(d, 2);
  for (Eigen::Index a = 0; a < std::min<Eigen::Index>(2, d); ++a) {
    Eigen::VectorXd axis = solver.eigenvectors().col(d - 1 - a);  // eigenvalues ascend
    Eigen::Index lead = 0;
    axis.cwiseAbs().maxCoeff(&lead);
    if (axis(lead) < 0.0) axis = -axis;
    axes.col(a) = axis;
  }
  return centered * axes;
}

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 500;
  int exaggeration_iterations = 100;
  double exaggeration = 12.0;
  double learning_rate = 200.0;
  std::uint64_t seed = 0;
};

namespace detail {

/// Conditional affinities p_{j|i} with a per-row bandwidth found by bisection
/// so that each row's entropy matches log(perplexity).
inline Matrix conditional_affinities(const Matrix& sq_dist, double perplexity) {
  const auto n = sq_dist.rows();
  Matrix p = Matrix::Zero(n, n);
  const double target = std::log(perplexity);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 100; ++step) {
      double sum = 0.0;
      double weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = std::exp(-beta * sq_dist(i, j));
        p(i, j) = w;
        sum += w;
        weighted += w * sq_dist(i, j);
      }
      if (sum <= 0.0) {
        hi = beta;
        beta = 0.5 * (lo + hi);
        continue;
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      p.row(i) /= sum;
      if (std::abs(entropy - target) < 1e-5) break;
      if (entropy > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (lo + hi);
      } else {
        hi = beta;
        beta = 0.5 * (lo + hi);
      }
    }
  }
  return p;
}

}  // namespace detail

/// Exact-gradient t-SNE into two dimensions. Deterministic for a fixed seed.
inline Matrix tsne_2d(const Matrix& points, const TsneOptions& options = {}) {
  const auto n = points.rows();
  detail::require(n >= 2, "tsne_2d: need at least 2 points");
  const Eigen::VectorXd norms = points.rowwise().squaredNorm();
  Matrix sq_dist = ((-2.0 * points * points.transpose()).colwise() + norms).rowwise() + norms.transpose();
  sq_dist = sq_dist.cwiseMax(0.0);
  const double perplexity = std::clamp(options.perplexity, 1.0, std::max(1.0, (static_cast<double>(n) - 1.0) / 3.0));
  Matrix p = detail::conditional_affinities(sq_dist, perplexity);
  p = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  Rng rng(options.seed);
  Matrix y(n, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = 1e-4 * rng.normal();
  Matrix velocity = Matrix::Zero(n, 2);
  Matrix gains = Matrix::Ones(n, 2);

  for (int iter = 0; iter < options.iterations; ++iter) {
    const double exaggeration = iter < options.exaggeration_iterations ? options.exaggeration : 1.0;
    const double momentum = iter < options.exaggeration_iterations ? 0.5 : 0.8;
    const Eigen::VectorXd y_norms = y.rowwise().squaredNorm();
    Matrix num = ((-2.0 * y * y.transpose()).colwise() + y_norms).rowwise() + y_norms.transpose();
    num = (1.0 + num.cwiseMax(0.0).array()).inverse().matrix();
    num.diagonal().setZero();
    const double z = num.sum();
    const Matrix q = (num / z).cwiseMax(1e-12);
    const Matrix w = ((exaggeration * p - q).array() * num.array()).matrix();
    const Eigen::VectorXd row_sum = w.rowwise().sum();
    const Matrix grad = 4.0 * ((y.array().colwise() * row_sum.array()).matrix() - w * y);
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      const bool same_sign = (grad.data()[i] > 0.0) == (velocity.data()[i] > 0.0);
      gains.data()[i] = same_sign ? std::max(gains.data()[i] * 0.8, 0.01) : gains.data()[i] + 0.2;
    }
    velocity = momentum * velocity - options.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y = y.rowwise() - y.colwise().mean();
  }
  return y;
}

}  // namespace mcoco
