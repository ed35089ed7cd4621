#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "mcoco/objective.hpp"
#include "mcoco/optim.hpp"
#include "oracles.hpp"

using mcoco::Matrix;

namespace {

// m=2, D_i=6, D_Z=3, k=3, N=8.
struct Toy {
  mcoco::ModelParameters params;
  mcoco::CentroidSet centroids;
  std::vector<Matrix> inputs;
};

Toy make_toy(std::uint64_t seed) {
  mcoco::Rng rng(seed);
  mcoco::Architecture arch;
  arch.view_dims = {6, 6};
  arch.hidden_widths = {{5, 4}, {4}};
  arch.latent_dim = 3;
  arch.semantic_hidden = {4};
  arch.k = 3;
  Toy toy;
  toy.params = mcoco::ModelParameters::create(arch, rng);
  // Non-zero biases so no unit sits exactly on a ReLU kink.
  toy.params.for_each_tensor([&](auto& t) {
    if (t.rows() == 1) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.3, 0.3);
    }
  });
  for (int v = 0; v < 2; ++v) {
    toy.inputs.push_back(oracle::random_matrix(8, 6, rng));
    toy.centroids.centroids.push_back(oracle::random_matrix(3, 3, rng, 0.5));
  }
  return toy;
}

struct Forward {
  std::vector<Matrix> z, recon, s, q;
};

Forward forward(const Toy& toy) {
  Forward f;
  for (std::size_t v = 0; v < 2; ++v) {
    f.z.push_back(toy.params.encoders[v].forward(toy.inputs[v]));
    f.recon.push_back(toy.params.decoders[v].forward(f.z[v]));
    f.s.push_back(oracle::softmax_rows(toy.params.semantic.forward(f.z[v])));
    f.q.push_back(oracle::soft_assign(f.z[v], toy.centroids.centroids[v]));
  }
  return f;
}

/// Total loss from the scalar-loop oracles. P is always the frozen target; S'
/// is frozen too unless `live_semantic_target`.
double oracle_total(const Toy& toy, const mcoco::ObjectiveWeights& w, const mcoco::Targets& frozen,
                    bool live_semantic_target) {
  const auto f = forward(toy);
  std::vector<Matrix> s_sharp = frozen.s_sharp;
  if (live_semantic_target) {
    for (std::size_t v = 0; v < 2; ++v) s_sharp[v] = oracle::sharpen(f.s[v]);
  }
  const double re = oracle::reconstruction(toy.inputs, f.recon);
  const double se = w.use_semantic ? oracle::semantic_consistency(f.s, w.tau) : 0.0;
  const double ml = oracle::multilevel(f.q, frozen.p, s_sharp, w.use_multilevel_semantic);
  return re + w.lambda1 * se + w.lambda2 * ml;
}

/// Checks every tensor of every parameter group against central differences.
void check_gradients(Toy toy, const mcoco::ObjectiveWeights& w) {
  const auto base = mcoco::evaluate_objective(toy.params, toy.centroids, toy.inputs, w);
  const auto frozen = base.targets;
  auto grad_params = toy.params.zeros_like();
  auto grad_centroids = toy.centroids.zeros_like();
  mcoco::evaluate_objective(toy.params, toy.centroids, toy.inputs, w, w.semantic_target_gradient ? nullptr : &frozen,
                            &grad_params, &grad_centroids);

  EXPECT_NEAR(base.loss.total, oracle_total(toy, w, frozen, false), 1e-9);

  auto values = mcoco::tensor_views(toy.params, &toy.centroids);
  const auto grads = mcoco::tensor_views(grad_params, &grad_centroids);
  ASSERT_EQ(values.size(), grads.size());

  // tensor_views order: encoders, decoders, semantic generator, centroids.
  std::size_t encoder_tensors = 0;
  for (const auto& e : toy.params.encoders) encoder_tensors += 2 * e.layers.size();
  std::size_t decoder_tensors = 0;
  for (const auto& d : toy.params.decoders) decoder_tensors += 2 * d.layers.size();
  const std::size_t semantic_tensors = 2 * toy.params.semantic.layers.size();
  auto group_of = [&](std::size_t i) -> std::string {
    if (i < encoder_tensors) return "encoder (theta)";
    if (i < encoder_tensors + decoder_tensors) return "decoder (phi)";
    if (i < encoder_tensors + decoder_tensors + semantic_tensors) return "semantic generator";
    return "centroids (mu)";
  };

  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto numeric =
        oracle::central_difference(values[i], [&] { return oracle_total(toy, w, frozen, w.semantic_target_gradient); });
    const Eigen::VectorXd analytic = grads[i];
    EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-4) << group_of(i) << " tensor " << i;
  }
}

}  // namespace

TEST(TotalLossGradient, MatchesFiniteDifferencesForEveryGroup) {
  for (std::uint64_t seed : {1, 2, 3}) check_gradients(make_toy(seed), {});
}

TEST(TotalLossGradient, NonDefaultWeightsAndTemperature) {
  mcoco::ObjectiveWeights w;
  w.lambda1 = 0.3;
  w.lambda2 = 1.7;
  w.tau = 0.8;
  check_gradients(make_toy(4), w);
}

TEST(TotalLossGradient, AblationsDropTheirTerms) {
  mcoco::ObjectiveWeights no_se;
  no_se.use_semantic = false;
  check_gradients(make_toy(5), no_se);
  mcoco::ObjectiveWeights no_ml_semantic;
  no_ml_semantic.use_multilevel_semantic = false;
  check_gradients(make_toy(6), no_ml_semantic);
}

TEST(TotalLossGradient, ThroughSemanticTarget) {
  mcoco::ObjectiveWeights w;
  w.semantic_target_gradient = true;
  check_gradients(make_toy(7), w);
}

TEST(TotalLossGradient, CentroidsReceiveNothingWithoutMultilevelTerm) {
  auto toy = make_toy(8);
  mcoco::ObjectiveWeights w;
  w.lambda2 = 0.0;
  auto grad_params = toy.params.zeros_like();
  auto grad_centroids = toy.centroids.zeros_like();
  mcoco::evaluate_objective(toy.params, toy.centroids, toy.inputs, w, nullptr, &grad_params, &grad_centroids);
  for (const auto& g : grad_centroids.centroids) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(TotalLossGradient, SemanticGeneratorIgnoredWithoutSemanticTerms) {
  auto toy = make_toy(9);
  mcoco::ObjectiveWeights w;
  w.use_semantic = false;
  w.use_multilevel_semantic = false;
  auto grad_params = toy.params.zeros_like();
  mcoco::evaluate_objective(toy.params, toy.centroids, toy.inputs, w, nullptr, &grad_params);
  grad_params.semantic.for_each_tensor([](const auto& t) { EXPECT_EQ(t.cwiseAbs().maxCoeff(), 0.0); });
}

TEST(ReconstructionObjective, GradientMatchesFiniteDifferences) {
  auto toy = make_toy(10);
  auto grad = toy.params.zeros_like();
  mcoco::reconstruction_objective(toy.params, toy.inputs, &grad);
  auto values = mcoco::autoencoder_views(toy.params);
  const auto grads = mcoco::autoencoder_views(grad);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto numeric = oracle::central_difference(values[i], [&] {
      const auto f = forward(toy);
      return oracle::reconstruction(toy.inputs, f.recon);
    });
    EXPECT_LT(oracle::relative_error(grads[i], numeric), 1e-4) << "tensor " << i;
  }
}
