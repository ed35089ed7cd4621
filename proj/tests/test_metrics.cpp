#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mcoco/metrics.hpp"
#include "oracles.hpp"

using Labeling = std::vector<std::size_t>;

namespace {

Labeling random_labels(std::size_t n, std::size_t k, mcoco::Rng& rng) {
  Labeling out(n);
  for (auto& l : out) l = static_cast<std::size_t>(rng.index(k));
  return out;
}

/// Applies a random bijection to the label values (including a shift so the
/// ids are not dense).
Labeling relabel(const Labeling& labels, mcoco::Rng& rng) {
  std::vector<std::size_t> map(16);
  std::iota(map.begin(), map.end(), std::size_t{100});
  rng.shuffle(std::span<std::size_t>(map));
  Labeling out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = map[labels[i]];
  return out;
}

}  // namespace

TEST(Accuracy, MatchesExhaustivePermutationOracle) {
  mcoco::Rng rng(31);
  for (int t = 0; t < 500; ++t) {
    const auto n = 1 + static_cast<std::size_t>(rng.index(10));
    const auto k_pred = 1 + static_cast<std::size_t>(rng.index(4));
    const auto k_true = 1 + static_cast<std::size_t>(rng.index(4));
    const auto pred = random_labels(n, k_pred, rng);
    const auto truth = random_labels(n, k_true, rng);
    EXPECT_NEAR(mcoco::accuracy(pred, truth), oracle::brute_force_accuracy(pred, truth), 1e-15)
        << "trial " << t;
  }
}

TEST(Accuracy, PerfectUpToPermutation) {
  const Labeling truth{0, 0, 1, 1, 2, 2};
  const Labeling pred{2, 2, 0, 0, 1, 1};
  EXPECT_EQ(mcoco::accuracy(pred, truth), 1.0);
}

TEST(Accuracy, MoreClustersThanClasses) {
  const Labeling truth{0, 0, 0, 1, 1, 1};
  const Labeling pred{0, 0, 1, 2, 2, 3};
  EXPECT_NEAR(mcoco::accuracy(pred, truth), 4.0 / 6.0, 1e-15);
}

TEST(Accuracy, RejectsLengthMismatch) {
  EXPECT_THROW(mcoco::accuracy(Labeling{0, 1}, Labeling{0}), mcoco::InvalidArgument);
}

TEST(HungarianMinCost, MatchesBruteForce) {
  mcoco::Rng rng(32);
  for (int t = 0; t < 200; ++t) {
    const auto n = static_cast<Eigen::Index>(1 + rng.index(6));
    const auto cost = oracle::random_matrix(n, n, rng);
    const auto match = mcoco::hungarian_min_cost(cost);
    double got = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) got += cost(i, static_cast<Eigen::Index>(match[static_cast<std::size_t>(i)]));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double c = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(got, best, 1e-9);
  }
}

TEST(RandIndex, EqualsAllPairsOracleExactly) {
  mcoco::Rng rng(33);
  for (int t = 0; t < 300; ++t) {
    const auto n = 2 + static_cast<std::size_t>(rng.index(49));
    const auto pred = random_labels(n, 1 + rng.index(5), rng);
    const auto truth = random_labels(n, 1 + rng.index(5), rng);
    EXPECT_EQ(mcoco::rand_index(pred, truth), oracle::all_pairs_rand_index(pred, truth));
  }
}

TEST(Fscore, EqualsAllPairsOracleExactly) {
  mcoco::Rng rng(34);
  for (int t = 0; t < 300; ++t) {
    const auto n = 2 + static_cast<std::size_t>(rng.index(49));
    const auto pred = random_labels(n, 1 + rng.index(5), rng);
    const auto truth = random_labels(n, 1 + rng.index(5), rng);
    EXPECT_EQ(mcoco::fscore(pred, truth), oracle::all_pairs_fscore(pred, truth));
  }
}

TEST(Fscore, AllSingletonsAgreeScoresOne) {
  const Labeling a{0, 1, 2, 3};
  const Labeling b{3, 2, 1, 0};
  EXPECT_EQ(mcoco::fscore(a, b), 1.0);
}

TEST(Nmi, MatchesDirectSummation) {
  mcoco::Rng rng(35);
  for (int t = 0; t < 300; ++t) {
    const auto n = 4 + static_cast<std::size_t>(rng.index(60));
    const auto pred = random_labels(n, 2 + rng.index(4), rng);
    const auto truth = random_labels(n, 2 + rng.index(4), rng);
    if (std::adjacent_find(pred.begin(), pred.end(), std::not_equal_to<>()) == pred.end()) continue;
    if (std::adjacent_find(truth.begin(), truth.end(), std::not_equal_to<>()) == truth.end()) continue;
    EXPECT_NEAR(mcoco::nmi(pred, truth), std::clamp(oracle::direct_nmi(pred, truth), 0.0, 1.0), 1e-12);
  }
}

TEST(Nmi, BoundsAndIdentity) {
  const Labeling a{0, 0, 1, 1, 2, 2};
  EXPECT_NEAR(mcoco::nmi(a, a), 1.0, 1e-12);
  EXPECT_NEAR(mcoco::nmi(a, a, mcoco::NmiNormalization::Arithmetic), 1.0, 1e-12);
  const Labeling independent_pred{0, 1, 0, 1};
  const Labeling independent_true{0, 0, 1, 1};
  EXPECT_NEAR(mcoco::nmi(independent_pred, independent_true), 0.0, 1e-12);
}

TEST(Nmi, TrivialPartitions) {
  const Labeling one{0, 0, 0};
  const Labeling split{0, 1, 1};
  EXPECT_EQ(mcoco::nmi(one, one), 1.0);
  EXPECT_EQ(mcoco::nmi(one, split), 0.0);
  EXPECT_EQ(mcoco::nmi(split, one), 0.0);
}

TEST(Metrics, InvariantUnderRelabeling) {
  mcoco::Rng rng(36);
  for (int t = 0; t < 200; ++t) {
    const auto n = 2 + static_cast<std::size_t>(rng.index(40));
    const auto pred = random_labels(n, 1 + rng.index(5), rng);
    const auto truth = random_labels(n, 1 + rng.index(5), rng);
    const auto base = mcoco::evaluate_clustering(pred, truth);
    const auto moved = mcoco::evaluate_clustering(relabel(pred, rng), relabel(truth, rng));
    EXPECT_NEAR(base.acc, moved.acc, 1e-15);
    EXPECT_NEAR(base.nmi, moved.nmi, 1e-12);
    EXPECT_EQ(base.rand_index, moved.rand_index);
    EXPECT_EQ(base.fscore, moved.fscore);
  }
}

TEST(Metrics, SymmetricExceptAccuracyPadding) {
  mcoco::Rng rng(37);
  for (int t = 0; t < 100; ++t) {
    const auto n = 2 + static_cast<std::size_t>(rng.index(30));
    const auto a = random_labels(n, 1 + rng.index(4), rng);
    const auto b = random_labels(n, 1 + rng.index(4), rng);
    EXPECT_NEAR(mcoco::nmi(a, b), mcoco::nmi(b, a), 1e-12);
    EXPECT_EQ(mcoco::rand_index(a, b), mcoco::rand_index(b, a));
    EXPECT_EQ(mcoco::fscore(a, b), mcoco::fscore(b, a));
    EXPECT_NEAR(mcoco::accuracy(a, b), mcoco::accuracy(b, a), 1e-15);
  }
}

TEST(FinalAssignment, FusesByMeanThenArgmax) {
  mcoco::Matrix q1(3, 2);
  q1 << 0.9, 0.1, 0.4, 0.6, 0.5, 0.5;
  mcoco::Matrix q2(3, 2);
  q2 << 0.6, 0.4, 0.8, 0.2, 0.5, 0.5;
  const std::vector<mcoco::Matrix> q{q1, q2};
  const auto r = mcoco::final_assignment(q);
  EXPECT_EQ(r.fused_labels, (Labeling{0, 0, 0}));  // row 2 ties: lowest index
  EXPECT_EQ(r.view_labels[0], (Labeling{0, 1, 0}));
  EXPECT_EQ(r.view_labels[1], (Labeling{0, 0, 0}));
  EXPECT_NEAR(r.mean_assignment(1, 0), 0.6, 1e-15);
}

TEST(FinalAssignment, RejectsShapeMismatch) {
  const std::vector<mcoco::Matrix> q{mcoco::Matrix::Constant(3, 2, 0.5), mcoco::Matrix::Constant(2, 2, 0.5)};
  EXPECT_THROW(mcoco::final_assignment(q), mcoco::InvalidArgument);
}
