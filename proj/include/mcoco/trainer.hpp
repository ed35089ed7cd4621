#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcoco/data.hpp"
#include "mcoco/error.hpp"
#include "mcoco/kmeans.hpp"
#include "mcoco/losses.hpp"
#include "mcoco/metrics.hpp"
#include "mcoco/model.hpp"
#include "mcoco/objective.hpp"
#include "mcoco/optim.hpp"
#include "mcoco/rng.hpp"

namespace mcoco {

struct AblationFlags {
  bool use_semantic = true;
  bool use_multilevel_semantic = true;

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Every knob of a training run. Defaults: tau 0.5, lambda1 = lambda2 = 1,
/// Adam at 1e-3, batch 256, 50 pretraining and 100 joint epochs, encoder
/// widths D_i-500-500-2000-10 mirrored by the decoder, generator 10-256-k.
struct TrainingConfig {
  std::size_t k = 2;
  std::size_t latent_dim = 10;
  std::vector<std::size_t> hidden_widths{500, 500, 2000};
  /// Optional per-view override of hidden_widths; empty means "use the shared list".
  std::vector<std::vector<std::size_t>> view_hidden_widths;
  std::vector<std::size_t> semantic_hidden{256};
  double tau = 0.5;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  AdamOptions adam;
  std::size_t batch_size = 256;
  std::size_t pretrain_epochs = 50;
  std::size_t train_epochs = 100;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  bool full_dataset_targets = false;
  bool semantic_target_gradient = false;
  KMeansOptions kmeans;
  NmiNormalization nmi_normalization = NmiNormalization::Geometric;

  void validate() const {
    detail::require(k >= 2, "k must be at least 2");
    detail::require(latent_dim >= 1, "latent_dim must be positive");
    detail::require(std::isfinite(tau) && tau > 0.0, "tau must be positive");
    detail::require(std::isfinite(lambda1) && lambda1 >= 0.0, "lambda1 must be >= 0");
    detail::require(std::isfinite(lambda2) && lambda2 >= 0.0, "lambda2 must be >= 0");
    detail::require(std::isfinite(adam.learning_rate) && adam.learning_rate > 0.0, "learning_rate must be positive");
    detail::require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "adam_beta1 must be in [0, 1)");
    detail::require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "adam_beta2 must be in [0, 1)");
    detail::require(adam.epsilon > 0.0, "adam_epsilon must be positive");
    detail::require(batch_size >= 1, "batch_size must be at least 1");
    detail::require(kmeans.restarts >= 1 && kmeans.max_iterations >= 1, "k-means restarts and iterations must be positive");
  }

  ObjectiveWeights weights() const {
    return {lambda1, lambda2, tau, ablation.use_semantic, ablation.use_multilevel_semantic, semantic_target_gradient};
  }

  Architecture architecture(const MultiViewDataset& ds) const {
    Architecture arch;
    arch.view_dims = ds.view_dims();
    for (std::size_t v = 0; v < arch.view_dims.size(); ++v) {
      if (view_hidden_widths.empty()) {
        arch.hidden_widths.push_back(hidden_widths);
      } else {
        detail::require(view_hidden_widths.size() == arch.view_dims.size(),
                        "view_hidden_widths must list one entry per view");
        arch.hidden_widths.push_back(view_hidden_widths[v]);
      }
    }
    arch.latent_dim = latent_dim;
    arch.semantic_hidden = semantic_hidden;
    arch.k = k;
    return arch;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown loss;     // summed over the epoch's batches
  std::optional<MetricsReport> metrics;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

struct TrainingTrace {
  TrainingConfig config;
  std::vector<double> pretrain_reconstruction;  // L_Re summed per pretraining epoch
  std::vector<EpochRecord> epochs;
};

/// Raised when a loss turns non-finite. Carries where it happened and the last
/// finite batch breakdown.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string phase, std::size_t epoch, std::size_t batch, LossBreakdown last_finite)
      : Error(phase + " diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
              " (last finite total " + std::to_string(last_finite.total) + ")"),
        phase_(std::move(phase)),
        epoch_(epoch),
        batch_(batch),
        last_finite_(last_finite) {}

  const std::string& phase() const { return phase_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }
  const LossBreakdown& last_finite() const { return last_finite_; }

 private:
  std::string phase_;
  std::size_t epoch_;
  std::size_t batch_;
  LossBreakdown last_finite_;
};

/// Everything needed to continue a run exactly where it stopped.
struct TrainerState {
  ModelParameters params;
  CentroidSet centroids;
  Adam optimizer;
  Rng rng;
  std::size_t epochs_completed = 0;
};

struct FitResult {
  ModelParameters params;
  CentroidSet centroids;
  TrainingTrace trace;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// ---------------------------------------------------------------------------
// Whole-dataset forward helpers

inline std::vector<Matrix> dataset_latents(const ModelParameters& params, const MultiViewDataset& ds) {
  detail::require(ds.n_views() == params.encoders.size(),
                  "dataset has " + std::to_string(ds.n_views()) + " views but the model expects " +
                      std::to_string(params.encoders.size()));
  std::vector<Matrix> z;
  for (std::size_t v = 0; v < ds.n_views(); ++v) z.push_back(encode(params, v, to_matrix(ds.views[v])));
  return z;
}

inline std::vector<Matrix> dataset_assignments(const ModelParameters& params, const CentroidSet& centroids,
                                               const MultiViewDataset& ds) {
  const auto z = dataset_latents(params, ds);
  std::vector<Matrix> q;
  for (std::size_t v = 0; v < z.size(); ++v) q.push_back(soft_assign(z[v], centroids.centroids.at(v), v).values);
  return q;
}

inline ClusteringResult predict(const ModelParameters& params, const CentroidSet& centroids,
                                const MultiViewDataset& ds) {
  const auto q = dataset_assignments(params, centroids, ds);
  return final_assignment(q);
}

inline std::optional<MetricsReport> evaluate(const ModelParameters& params, const CentroidSet& centroids,
                                             const MultiViewDataset& ds,
                                             NmiNormalization normalization = NmiNormalization::Geometric) {
  if (!ds.labels || ds.n_samples() < 2) return std::nullopt;
  const auto result = predict(params, centroids, ds);
  return evaluate_clustering(result.fused_labels, *ds.labels, normalization);
}

namespace detail {

inline std::vector<Matrix> gather_batch(const MultiViewDataset& ds, std::span<const std::size_t> rows) {
  std::vector<Matrix> batch;
  for (const auto& view : ds.views) batch.push_back(gather_rows(view, rows));
  return batch;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

inline void check_dataset(const MultiViewDataset& ds, const TrainingConfig& config) {
  config.validate();
  ds.validate();
  require(config.k <= ds.n_samples(),
          "k=" + std::to_string(config.k) + " exceeds the number of samples N=" + std::to_string(ds.n_samples()));
}

inline void pretrain_into(ModelParameters& params, const MultiViewDataset& ds, const TrainingConfig& config, Rng& rng,
                          std::vector<double>* history) {
  Adam optimizer(config.adam);
  const auto n = ds.n_samples();
  const auto batch_size = std::min(config.batch_size, n);
  for (std::size_t epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    double epoch_loss = 0.0;
    double last_finite = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++batch_index) {
      const auto rows = std::span<const std::size_t>(order).subspan(start, std::min(batch_size, n - start));
      const auto batch = gather_batch(ds, rows);
      ModelParameters grad = params.zeros_like();
      const double loss = reconstruction_objective(params, batch, &grad);
      if (!std::isfinite(loss)) {
        LossBreakdown last;
        last.reconstruction = last.total = last_finite;
        throw DivergenceError("pretraining", epoch, batch_index, last);
      }
      last_finite = loss;
      epoch_loss += loss;
      auto param_views = autoencoder_views(params);
      const auto grad_views = autoencoder_views(grad);
      optimizer.step(param_views, grad_views);
    }
    if (history) history->push_back(epoch_loss);
  }
}

/// Targets over the whole dataset, for full_dataset_targets with large N.
inline Targets full_dataset_targets(const ModelParameters& params, const CentroidSet& centroids,
                                    const MultiViewDataset& ds) {
  const auto z = dataset_latents(params, ds);
  std::vector<Matrix> q;
  std::vector<Matrix> s;
  for (std::size_t v = 0; v < z.size(); ++v) {
    q.push_back(soft_assign(z[v], centroids.centroids[v], v).values);
    s.push_back(semantic_labels(params, z[v], v).values);
  }
  return make_targets(q, s);
}

inline Targets slice_targets(const Targets& full, std::span<const std::size_t> rows) {
  Targets out;
  auto slice = [&](const Matrix& m) {
    Matrix r(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) r.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return r;
  };
  for (const auto& p : full.p) out.p.push_back(slice(p));
  for (const auto& s : full.s_sharp) out.s_sharp.push_back(slice(s));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Autoencoder pretraining on L_Re alone. The semantic generator stays at its
/// initialization.
inline ModelParameters pretrain(const MultiViewDataset& ds, const TrainingConfig& config,
                                std::vector<double>* history = nullptr) {
  detail::check_dataset(ds, config);
  Rng rng(config.seed);
  auto params = ModelParameters::create(config.architecture(ds), rng);
  detail::pretrain_into(params, ds, config, rng, history);
  return params;
}

/// Parameter initialization, pretraining and k-means centroid initialization.
inline TrainerState initialize(const MultiViewDataset& ds, const TrainingConfig& config, TrainingTrace& trace) {
  detail::check_dataset(ds, config);
  trace.config = config;
  TrainerState state;
  state.rng = Rng(config.seed);
  state.params = ModelParameters::create(config.architecture(ds), state.rng);
  detail::pretrain_into(state.params, ds, config, state.rng, &trace.pretrain_reconstruction);
  state.centroids = init_centroids(dataset_latents(state.params, ds), config.k, state.rng, config.kmeans);
  state.optimizer = Adam(config.adam);
  return state;
}

/// Runs `epochs` joint epochs: every batch recomputes Z, S, Q and the
/// sharpened targets, then takes one Adam step on all parameters and
/// centroids.
inline void train_epochs(TrainerState& state, const MultiViewDataset& ds, const TrainingConfig& config,
                         std::size_t epochs, TrainingTrace& trace, const EpochCallback& on_epoch = {}) {
  detail::check_dataset(ds, config);
  const auto n = ds.n_samples();
  const bool full_batch = config.full_dataset_targets && n <= 2048;
  const bool epoch_targets = config.full_dataset_targets && !full_batch;
  const auto batch_size = full_batch ? n : std::min(config.batch_size, n);
  const auto weights = config.weights();

  for (std::size_t e = 0; e < epochs; ++e) {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t epoch = state.epochs_completed + 1;
    const auto order = detail::shuffled_indices(n, state.rng);
    std::optional<Targets> full_targets;
    if (epoch_targets) full_targets = detail::full_dataset_targets(state.params, state.centroids, ds);

    LossBreakdown epoch_loss = total_loss(0.0, 0.0, 0.0, config.lambda1, config.lambda2, config.tau);
    LossBreakdown last_finite = epoch_loss;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++batch_index) {
      const auto rows = std::span<const std::size_t>(order).subspan(start, std::min(batch_size, n - start));
      const auto batch = detail::gather_batch(ds, rows);
      std::optional<Targets> batch_targets;
      if (full_targets) batch_targets = detail::slice_targets(*full_targets, rows);

      ModelParameters grad_params = state.params.zeros_like();
      CentroidSet grad_centroids = state.centroids.zeros_like();
      const auto outputs = evaluate_objective(state.params, state.centroids, batch, weights,
                                              batch_targets ? &*batch_targets : nullptr, &grad_params,
                                              &grad_centroids);
      if (!outputs.loss.all_finite()) throw DivergenceError("training", epoch, batch_index, last_finite);
      last_finite = outputs.loss;
      epoch_loss += outputs.loss;

      auto param_views = tensor_views(state.params, &state.centroids);
      const auto grad_views = tensor_views(grad_params, &grad_centroids);
      state.optimizer.step(param_views, grad_views);
    }
    if (!state.params.all_finite()) throw DivergenceError("training", epoch, batch_index, last_finite);

    EpochRecord record;
    record.epoch = epoch;
    record.loss = epoch_loss;
    record.metrics = evaluate(state.params, state.centroids, ds, config.nmi_normalization);
    record.seed = config.seed;
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    state.epochs_completed = epoch;
    trace.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
}

/// Pretraining, centroid initialization and config.train_epochs joint epochs.
inline FitResult fit(const MultiViewDataset& ds, const TrainingConfig& config, const EpochCallback& on_epoch = {}) {
  FitResult result;
  auto state = initialize(ds, config, result.trace);
  train_epochs(state, ds, config, config.train_epochs, result.trace, on_epoch);
  result.params = std::move(state.params);
  result.centroids = std::move(state.centroids);
  return result;
}

}  // namespace mcoco
