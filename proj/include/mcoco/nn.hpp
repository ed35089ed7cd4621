#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "mcoco/error.hpp"
#include "mcoco/rng.hpp"

namespace mcoco {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

namespace nn {

/// Fully connected layer computing x * weight + bias, weight shaped [in x out].
struct Dense {
  Matrix weight;
  RowVector bias;

  std::size_t in_features() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t out_features() const { return static_cast<std::size_t>(weight.cols()); }

  static Dense zeros(std::size_t in, std::size_t out) {
    return {Matrix::Zero(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out)),
            RowVector::Zero(static_cast<Eigen::Index>(out))};
  }

  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  static Dense fan_in_uniform(std::size_t in, std::size_t out, Rng& rng) {
    Dense layer = zeros(in, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
    return layer;
  }
};

/// Intermediate values of one forward pass, kept for backpropagation.
struct MlpCache {
  std::vector<Matrix> inputs;       // input of each layer
  std::vector<Matrix> activations;  // post-activation output of each layer
};

/// Stack of Dense layers, ReLU between them and a linear last layer.
struct Mlp {
  std::vector<Dense> layers;

  /// Layer widths [in, h1, ..., out].
  static Mlp create(const std::vector<std::size_t>& widths, Rng& rng) {
    detail::require(widths.size() >= 2, "an MLP needs at least input and output widths");
    Mlp mlp;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      detail::require(widths[i] >= 1 && widths[i + 1] >= 1, "MLP widths must be positive");
      mlp.layers.push_back(Dense::fan_in_uniform(widths[i], widths[i + 1], rng));
    }
    return mlp;
  }

  /// Same shapes, all parameters zero (used as a gradient accumulator).
  Mlp zeros_like() const {
    Mlp out;
    for (const auto& l : layers) out.layers.push_back(Dense::zeros(l.in_features(), l.out_features()));
    return out;
  }

  std::size_t in_features() const { return layers.front().in_features(); }
  std::size_t out_features() const { return layers.back().out_features(); }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{in_features()};
    for (const auto& l : layers) w.push_back(l.out_features());
    return w;
  }

  Matrix forward(const Matrix& x) const {
    Matrix h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Matrix next = (h * layers[i].weight).rowwise() + layers[i].bias;
      if (i + 1 < layers.size()) next = next.cwiseMax(0.0);
      h = std::move(next);
    }
    return h;
  }

  Matrix forward(const Matrix& x, MlpCache& cache) const {
    cache.inputs.clear();
    cache.activations.clear();
    Matrix h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      cache.inputs.push_back(h);
      Matrix next = (h * layers[i].weight).rowwise() + layers[i].bias;
      if (i + 1 < layers.size()) next = next.cwiseMax(0.0);
      cache.activations.push_back(next);
      h = std::move(next);
    }
    return h;
  }

  /// Accumulates parameter gradients into `grad` and returns dL/dx.
  Matrix backward(const MlpCache& cache, const Matrix& grad_out, Mlp& grad) const {
    Matrix g = grad_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
      if (i + 1 < layers.size()) {
        g = (cache.activations[i].array() > 0.0).select(g, 0.0);
      }
      grad.layers[i].weight.noalias() += cache.inputs[i].transpose() * g;
      grad.layers[i].bias += g.colwise().sum();
      g = g * layers[i].weight.transpose();
    }
    return g;
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    for (auto& l : layers) {
      f(l.weight);
      f(l.bias);
    }
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    for (const auto& l : layers) {
      f(l.weight);
      f(l.bias);
    }
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }
};

/// Row-wise softmax, shifted by the row max for stability.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

/// Backprop through softmax_rows given its output and dL/dout.
inline Matrix softmax_rows_backward(const Matrix& probs, const Matrix& grad_out) {
  const Eigen::VectorXd inner = (probs.array() * grad_out.array()).rowwise().sum();
  return (probs.array() * (grad_out.colwise() - inner).array()).matrix();
}

}  // namespace nn
}  // namespace mcoco
