#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "mcoco/error.hpp"
#include "mcoco/model.hpp"

namespace mcoco {

using TensorView = Eigen::Map<Eigen::VectorXd>;

/// Flat views over every tensor of the model, in a fixed order: encoders,
/// decoders, semantic generator, then centroids (when given).
inline std::vector<TensorView> tensor_views(ModelParameters& params, CentroidSet* centroids = nullptr) {
  std::vector<TensorView> views;
  params.for_each_tensor([&](auto& t) { views.emplace_back(t.data(), t.size()); });
  if (centroids) {
    for (auto& c : centroids->centroids) views.emplace_back(c.data(), c.size());
  }
  return views;
}

/// Encoder and decoder tensors only (the pretraining parameter group).
inline std::vector<TensorView> autoencoder_views(ModelParameters& params) {
  std::vector<TensorView> views;
  auto add = [&](auto& t) { views.emplace_back(t.data(), t.size()); };
  for (auto& e : params.encoders) e.for_each_tensor(add);
  for (auto& d : params.decoders) d.for_each_tensor(add);
  return views;
}

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected adaptive moment estimation over a fixed list of tensors.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamOptions options) : options_(options) {}

  const AdamOptions& options() const { return options_; }
  std::uint64_t steps() const { return step_; }
  const std::vector<Eigen::VectorXd>& first_moments() const { return m_; }
  const std::vector<Eigen::VectorXd>& second_moments() const { return v_; }

  void restore(std::uint64_t step, std::vector<Eigen::VectorXd> m, std::vector<Eigen::VectorXd> v) {
    detail::require(m.size() == v.size(), "Adam::restore: moment lists differ in length");
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
  }

  void step(std::vector<TensorView>& params, const std::vector<TensorView>& grads) {
    detail::require(params.size() == grads.size(), "Adam::step: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Eigen::VectorXd::Zero(p.size()));
        v_.push_back(Eigen::VectorXd::Zero(p.size()));
      }
    }
    detail::require(m_.size() == params.size(), "Adam::step: parameter list changed shape");
    ++step_;
    const double correction1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double correction2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      detail::require(params[i].size() == grads[i].size() && m_[i].size() == params[i].size(),
                      "Adam::step: tensor size mismatch");
      m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * grads[i];
      v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * grads[i].cwiseAbs2();
      params[i].array() -= options_.learning_rate * (m_[i].array() / correction1) /
                           ((v_[i].array() / correction2).sqrt() + options_.epsilon);
    }
  }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<Eigen::VectorXd> m_;
  std::vector<Eigen::VectorXd> v_;
};

}  // namespace mcoco
