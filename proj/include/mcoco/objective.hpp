#pragma once

#include <span>
#include <vector>

#include "mcoco/error.hpp"
#include "mcoco/losses.hpp"
#include "mcoco/model.hpp"
#include "mcoco/nn.hpp"

namespace mcoco {

/// Loss weights plus the ablation switches.
struct ObjectiveWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double tau = 0.5;
  bool use_semantic = true;             // L_Se on/off
  bool use_multilevel_semantic = true;  // KL(S'_k || Q_k) part of L_Ml on/off
  /// Also backpropagate KL(S'_k || Q_k) through S'_k = sharpen(S_k) into the
  /// semantic generator and encoders. Off: S' is a constant target.
  bool semantic_target_gradient = false;
};

/// Sharpened targets P (from Q) and S' (from S), one matrix per view. They are
/// constants as far as differentiation is concerned.
struct Targets {
  std::vector<Matrix> p;
  std::vector<Matrix> s_sharp;
};

/// Everything the forward pass produced for one batch.
struct BatchOutputs {
  std::vector<Matrix> latent;
  std::vector<Matrix> reconstruction;
  std::vector<Matrix> semantic;
  std::vector<Matrix> assignment;
  Targets targets;
  LossBreakdown loss;
  LossDiagnostics diagnostics;
};

inline Targets make_targets(std::span<const Matrix> assignment, std::span<const Matrix> semantic) {
  Targets t;
  for (const auto& q : assignment) t.p.push_back(sharpen(q));
  for (const auto& s : semantic) t.s_sharp.push_back(sharpen(s));
  return t;
}

/// Evaluates L = L_Re + lambda1 L_Se + lambda2 L_Ml on one batch (same sample
/// rows in every view). Targets are recomputed from this batch unless
/// `frozen_targets` is given. When `grad_params` / `grad_centroids` are given,
/// gradients of L are added into them.
inline BatchOutputs evaluate_objective(const ModelParameters& params, const CentroidSet& centroids,
                                       std::span<const Matrix> inputs, const ObjectiveWeights& weights,
                                       const Targets* frozen_targets = nullptr,
                                       ModelParameters* grad_params = nullptr,
                                       CentroidSet* grad_centroids = nullptr) {
  const auto m = params.encoders.size();
  detail::require(inputs.size() == m, "evaluate_objective: expected " + std::to_string(m) + " view batches");
  detail::require(centroids.centroids.size() == m, "evaluate_objective: centroid set has wrong view count");
  const bool want_grad = grad_params != nullptr || grad_centroids != nullptr;

  BatchOutputs out;
  std::vector<nn::MlpCache> enc_cache(m);
  std::vector<nn::MlpCache> dec_cache(m);
  std::vector<nn::MlpCache> sem_cache(m);
  for (std::size_t v = 0; v < m; ++v) {
    detail::check_cols(inputs[v], params.arch.view_dims[v], "view " + std::to_string(v) + " batch");
    detail::require(inputs[v].rows() == inputs.front().rows(), "evaluate_objective: views have different batch sizes");
    out.latent.push_back(params.encoders[v].forward(inputs[v], enc_cache[v]));
    out.reconstruction.push_back(params.decoders[v].forward(out.latent[v], dec_cache[v]));
    out.semantic.push_back(nn::softmax_rows(params.semantic.forward(out.latent[v], sem_cache[v])));
    out.assignment.push_back(soft_assign(out.latent[v], centroids.centroids[v], v).values);
  }
  if (inputs.front().rows() == 0) {
    out.loss = total_loss(0.0, 0.0, 0.0, weights.lambda1, weights.lambda2, weights.tau);
    return out;
  }
  out.targets = frozen_targets ? *frozen_targets : make_targets(out.assignment, out.semantic);

  const double l_re = reconstruction_loss(inputs, std::span<const Matrix>(out.reconstruction));
  std::vector<Matrix> grad_semantic;
  if (want_grad) {
    for (const auto& s : out.semantic) grad_semantic.push_back(Matrix::Zero(s.rows(), s.cols()));
  }
  const double l_se = weights.use_semantic
                          ? semantic_consistency_loss(out.semantic, weights.tau,
                                                      want_grad ? &grad_semantic : nullptr, &out.diagnostics)
                          : 0.0;
  const double l_ml = multilevel_loss(out.assignment, out.targets.p, out.targets.s_sharp,
                                      weights.use_multilevel_semantic);
  out.loss = total_loss(l_re, l_se, l_ml, weights.lambda1, weights.lambda2, weights.tau);

  if (!want_grad) return out;

  ModelParameters scratch_params;
  if (!grad_params) {
    scratch_params = params.zeros_like();
    grad_params = &scratch_params;
  }
  CentroidSet scratch_centroids;
  if (!grad_centroids) {
    scratch_centroids = centroids.zeros_like();
    grad_centroids = &scratch_centroids;
  }
  const bool through_semantic_target = weights.semantic_target_gradient && weights.use_multilevel_semantic &&
                                       weights.lambda2 != 0.0 && frozen_targets == nullptr;
  for (std::size_t v = 0; v < m; ++v) {
    const Matrix grad_recon = 2.0 * (out.reconstruction[v] - inputs[v]);
    Matrix grad_latent = params.decoders[v].backward(dec_cache[v], grad_recon, grad_params->decoders[v]);

    Matrix grad_s = weights.use_semantic ? Matrix(weights.lambda1 * grad_semantic[v])
                                         : Matrix::Zero(out.semantic[v].rows(), out.semantic[v].cols());
    if (through_semantic_target) {
      // d/dT of sum T log(T / Q) is log(T / Q) + 1.
      const Matrix& target = out.targets.s_sharp[v];
      const Matrix grad_target =
          weights.lambda2 * ((target.array().max(kLogFloor).log() - out.assignment[v].array().max(kLogFloor).log()) + 1.0)
                                .matrix();
      grad_s += sharpen_backward(out.semantic[v], grad_target);
    }
    if ((weights.use_semantic && weights.lambda1 != 0.0) || through_semantic_target) {
      const Matrix grad_logits = nn::softmax_rows_backward(out.semantic[v], grad_s);
      grad_latent += params.semantic.backward(sem_cache[v], grad_logits, grad_params->semantic);
    }
    if (weights.lambda2 != 0.0) {
      const Matrix grad_log_kernel =
          weights.lambda2 * multilevel_grad_log_kernel(out.assignment[v], out.targets.p, out.targets.s_sharp[v],
                                                       weights.use_multilevel_semantic);
      grad_latent += soft_assign_backward(out.latent[v], centroids.centroids[v], grad_log_kernel,
                                          grad_centroids->centroids[v]);
    }
    params.encoders[v].backward(enc_cache[v], grad_latent, grad_params->encoders[v]);
  }
  return out;
}

/// L_Re alone, with gradients into the encoders and decoders.
inline double reconstruction_objective(const ModelParameters& params, std::span<const Matrix> inputs,
                                       ModelParameters* grad_params = nullptr) {
  const auto m = params.encoders.size();
  detail::require(inputs.size() == m, "reconstruction_objective: expected " + std::to_string(m) + " view batches");
  double total = 0.0;
  for (std::size_t v = 0; v < m; ++v) {
    detail::check_cols(inputs[v], params.arch.view_dims[v], "view " + std::to_string(v) + " batch");
    detail::require(inputs[v].rows() == inputs.front().rows(),
                    "reconstruction_objective: views have different batch sizes");
    nn::MlpCache enc_cache;
    nn::MlpCache dec_cache;
    const Matrix z = params.encoders[v].forward(inputs[v], enc_cache);
    const Matrix recon = params.decoders[v].forward(z, dec_cache);
    const Matrix diff = recon - inputs[v];
    total += diff.squaredNorm();
    if (grad_params) {
      const Matrix grad_latent = params.decoders[v].backward(dec_cache, 2.0 * diff, grad_params->decoders[v]);
      params.encoders[v].backward(enc_cache, grad_latent, grad_params->encoders[v]);
    }
  }
  return total;
}

}  // namespace mcoco
