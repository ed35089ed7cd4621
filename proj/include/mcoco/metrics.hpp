#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mcoco/error.hpp"
#include "mcoco/nn.hpp"

namespace mcoco {

/// Fused labels (argmax of the mean of the per-view Q) plus the per-view
/// argmax labels.
struct ClusteringResult {
  std::vector<std::size_t> fused_labels;
  std::vector<std::vector<std::size_t>> view_labels;
  Matrix mean_assignment;
};

struct MetricsReport {
  double acc = 0.0;
  double nmi = 0.0;
  double rand_index = 0.0;
  double fscore = 0.0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

enum class NmiNormalization { Geometric, Arithmetic };

/// Row argmax, lowest index on ties.
inline std::vector<std::size_t> argmax_rows(const Matrix& m) {
  std::vector<std::size_t> out(static_cast<std::size_t>(m.rows()), 0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < m.cols(); ++j) {
      if (m(i, j) > m(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

/// Y_i = argmax_j mean_v Q_v(i, j).
inline ClusteringResult final_assignment(std::span<const Matrix> q) {
  detail::require(!q.empty(), "final_assignment: no views");
  ClusteringResult result;
  result.mean_assignment = Matrix::Zero(q.front().rows(), q.front().cols());
  for (std::size_t v = 0; v < q.size(); ++v) {
    detail::require(q[v].rows() == q.front().rows() && q[v].cols() == q.front().cols(),
                    "final_assignment: view " + std::to_string(v) + " has a different shape");
    result.mean_assignment += q[v];
    result.view_labels.push_back(argmax_rows(q[v]));
  }
  result.mean_assignment /= static_cast<double>(q.size());
  result.fused_labels = argmax_rows(result.mean_assignment);
  return result;
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(n^3)). Returns the column assigned to each row.
inline std::vector<std::size_t> hungarian_min_cost(const Matrix& cost) {
  detail::require(cost.rows() == cost.cols(), "hungarian_min_cost: cost matrix must be square");
  const auto n = static_cast<std::size_t>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; row 0 / column 0 are the virtual source.
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(n + 1, 0.0);
  std::vector<std::size_t> match_col(n + 1, 0);  // row matched to column j
  std::vector<std::size_t> way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match_col[0] = row;
    std::size_t col0 = 0;
    std::vector<double> min_slack(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r = match_col[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = cost(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(j - 1)) - u[r] - v[j];
        if (reduced < min_slack[j]) {
          min_slack[j] = reduced;
          way[j] = col0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          col1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match_col[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      col0 = col1;
    } while (match_col[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match_col[col0] = match_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (match_col[j] != 0) assignment[match_col[j] - 1] = j - 1;
  }
  return assignment;
}

/// Contingency table between two labelings after mapping each label set to
/// dense ids in sorted order.
struct Contingency {
  std::vector<std::vector<std::uint64_t>> counts;  // [pred][true]
  std::vector<std::uint64_t> pred_sizes;
  std::vector<std::uint64_t> true_sizes;
  std::uint64_t n = 0;
};

namespace detail {

template <typename Range>
std::vector<std::size_t> dense_ids(const Range& labels, std::size_t& n_ids) {
  std::map<std::int64_t, std::size_t> ids;
  for (auto l : labels) ids.emplace(static_cast<std::int64_t>(l), 0);
  std::size_t next = 0;
  for (auto& [label, id] : ids) id = next++;
  n_ids = next;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(ids.at(static_cast<std::int64_t>(l)));
  return out;
}

inline std::uint64_t pairs_of(std::uint64_t n) { return n * (n - (n > 0 ? 1 : 0)) / 2; }

struct PairCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
};

inline PairCounts pair_counts(const Contingency& table) {
  std::uint64_t same_both = 0;
  for (const auto& row : table.counts) {
    for (auto c : row) same_both += pairs_of(c);
  }
  std::uint64_t same_pred = 0;
  for (auto a : table.pred_sizes) same_pred += pairs_of(a);
  std::uint64_t same_true = 0;
  for (auto b : table.true_sizes) same_true += pairs_of(b);
  PairCounts pc;
  pc.tp = same_both;
  pc.fp = same_pred - same_both;
  pc.fn = same_true - same_both;
  pc.tn = pairs_of(table.n) - pc.tp - pc.fp - pc.fn;
  return pc;
}

}  // namespace detail

template <typename PredRange, typename TrueRange>
Contingency contingency(const PredRange& pred, const TrueRange& truth) {
  detail::require(pred.size() == truth.size(), "labelings differ in length (" + std::to_string(pred.size()) +
                                                   " vs " + std::to_string(truth.size()) + ")");
  detail::require(!pred.empty(), "labelings are empty");
  std::size_t n_pred = 0;
  std::size_t n_true = 0;
  const auto p = detail::dense_ids(pred, n_pred);
  const auto t = detail::dense_ids(truth, n_true);
  Contingency table;
  table.counts.assign(n_pred, std::vector<std::uint64_t>(n_true, 0));
  table.pred_sizes.assign(n_pred, 0);
  table.true_sizes.assign(n_true, 0);
  table.n = p.size();
  for (std::size_t i = 0; i < p.size(); ++i) {
    ++table.counts[p[i]][t[i]];
    ++table.pred_sizes[p[i]];
    ++table.true_sizes[t[i]];
  }
  return table;
}

/// Unsupervised clustering accuracy: best one-to-one matching of predicted
/// clusters to classes. The contingency table is zero-padded to square when
/// the counts differ.
template <typename PredRange, typename TrueRange>
double accuracy(const PredRange& pred, const TrueRange& truth) {
  const auto table = contingency(pred, truth);
  const std::size_t size = std::max(table.pred_sizes.size(), table.true_sizes.size());
  Matrix cost = Matrix::Zero(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
  for (std::size_t i = 0; i < table.pred_sizes.size(); ++i) {
    for (std::size_t j = 0; j < table.true_sizes.size(); ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -static_cast<double>(table.counts[i][j]);
    }
  }
  const auto match = hungarian_min_cost(cost);
  std::uint64_t matched = 0;
  for (std::size_t i = 0; i < table.pred_sizes.size(); ++i) {
    if (match[i] < table.true_sizes.size()) matched += table.counts[i][match[i]];
  }
  return static_cast<double>(matched) / static_cast<double>(table.n);
}

/// Normalized mutual information. Both-trivial partitions score 1; a single
/// trivial side against a non-trivial one scores 0.
template <typename PredRange, typename TrueRange>
double nmi(const PredRange& pred, const TrueRange& truth,
           NmiNormalization normalization = NmiNormalization::Geometric) {
  const auto table = contingency(pred, truth);
  const double n = static_cast<double>(table.n);
  auto entropy = [n](const std::vector<std::uint64_t>& sizes) {
    double h = 0.0;
    for (auto s : sizes) {
      if (s == 0) continue;
      const double p = static_cast<double>(s) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  const double h_pred = entropy(table.pred_sizes);
  const double h_true = entropy(table.true_sizes);
  if (table.pred_sizes.size() == 1 && table.true_sizes.size() == 1) return 1.0;
  if (table.pred_sizes.size() == 1 || table.true_sizes.size() == 1) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < table.pred_sizes.size(); ++i) {
    for (std::size_t j = 0; j < table.true_sizes.size(); ++j) {
      const auto c = table.counts[i][j];
      if (c == 0) continue;
      const double pij = static_cast<double>(c) / n;
      mi += pij * std::log(static_cast<double>(c) * n /
                           (static_cast<double>(table.pred_sizes[i]) * static_cast<double>(table.true_sizes[j])));
    }
  }
  const double denom =
      normalization == NmiNormalization::Geometric ? std::sqrt(h_pred * h_true) : 0.5 * (h_pred + h_true);
  return std::clamp(mi / denom, 0.0, 1.0);
}

/// Fraction of sample pairs on which both partitions agree, from contingency
/// counts.
template <typename PredRange, typename TrueRange>
double rand_index(const PredRange& pred, const TrueRange& truth) {
  detail::require(pred.size() >= 2, "rand_index needs at least 2 samples");
  const auto pc = detail::pair_counts(contingency(pred, truth));
  return static_cast<double>(pc.tp + pc.tn) / static_cast<double>(detail::pairs_of(pred.size()));
}

/// Pair-counting F-measure, 2TP / (2TP + FP + FN) (equal to 2PR/(P+R)).
/// Two all-singleton partitions have no same-cluster pairs and score 1.
template <typename PredRange, typename TrueRange>
double fscore(const PredRange& pred, const TrueRange& truth) {
  detail::require(pred.size() >= 2, "fscore needs at least 2 samples");
  const auto pc = detail::pair_counts(contingency(pred, truth));
  if (pc.tp == 0) return (pc.fp + pc.fn) == 0 ? 1.0 : 0.0;
  return static_cast<double>(2 * pc.tp) / static_cast<double>(2 * pc.tp + pc.fp + pc.fn);
}

template <typename PredRange, typename TrueRange>
MetricsReport evaluate_clustering(const PredRange& pred, const TrueRange& truth,
                                  NmiNormalization normalization = NmiNormalization::Geometric) {
  return {accuracy(pred, truth), nmi(pred, truth, normalization), rand_index(pred, truth), fscore(pred, truth)};
}

}  // namespace mcoco
