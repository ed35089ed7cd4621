#pragma once

// Brute-force reference implementations used only by the tests. Everything
// here is written as plain scalar loops straight from the definitions and
// shares no code with the library routines it checks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "mcoco/rng.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;

inline double reconstruction(const std::vector<Matrix>& x, const std::vector<Matrix>& x_hat) {
  double total = 0.0;
  for (std::size_t v = 0; v < x.size(); ++v) {
    for (Eigen::Index i = 0; i < x[v].rows(); ++i) {
      for (Eigen::Index d = 0; d < x[v].cols(); ++d) {
        const double diff = x[v](i, d) - x_hat[v](i, d);
        total += diff * diff;
      }
    }
  }
  return total;
}

inline double cosine(const Matrix& a, Eigen::Index ca, const Matrix& b, Eigen::Index cb) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    dot += a(r, ca) * b(r, cb);
    na += a(r, ca) * a(r, ca);
    nb += b(r, cb) * b(r, cb);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// l(i, j) evaluated term by term.
inline double pairwise_semantic(const Matrix& si, const Matrix& sj, double tau) {
  const auto k = si.cols();
  double sum = 0.0;
  for (Eigen::Index c = 0; c < k; ++c) {
    const double numerator = std::exp(cosine(si, c, sj, c) / tau);
    double denominator = 0.0;
    // Every w of both views except the self pair (view i, column c).
    for (Eigen::Index w = 0; w < k; ++w) {
      if (w != c) denominator += std::exp(cosine(si, c, si, w) / tau);
      denominator += std::exp(cosine(si, c, sj, w) / tau);
    }
    sum += std::log(numerator / denominator);
  }
  return -sum / static_cast<double>(k);
}

inline double entropy_regularizer(const Matrix& s) {
  double total = 0.0;
  for (Eigen::Index c = 0; c < s.cols(); ++c) {
    double mean = 0.0;
    for (Eigen::Index j = 0; j < s.rows(); ++j) mean += s(j, c);
    mean /= static_cast<double>(s.rows());
    if (mean > 0.0) total += mean * std::log(mean);
  }
  return total;
}

inline double semantic_consistency(const std::vector<Matrix>& s, double tau) {
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (i != j) pairs += pairwise_semantic(s[i], s[j], tau);
    }
  }
  double reg = 0.0;
  for (const auto& m : s) reg += entropy_regularizer(m);
  return 0.5 * pairs + reg;
}

inline Matrix sharpen(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  std::vector<double> freq(static_cast<std::size_t>(a.cols()), 0.0);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) freq[static_cast<std::size_t>(j)] += a(i, j);
  }
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double f = freq[static_cast<std::size_t>(j)];
      out(i, j) = f > 0.0 ? a(i, j) * a(i, j) / f : 0.0;
      row += out(i, j);
    }
    for (Eigen::Index j = 0; j < a.cols(); ++j) out(i, j) /= row;
  }
  return out;
}

/// Expanded second line of the multi-level KL loss: loops over k, i, j, c.
inline double multilevel(const std::vector<Matrix>& q, const std::vector<Matrix>& p, const std::vector<Matrix>& s_sharp,
                         bool include_semantic = true) {
  auto term = [](double t, double qv) { return t > 0.0 ? t * std::log(t / qv) : 0.0; };
  double total = 0.0;
  const auto m = q.size();
  for (std::size_t k = 0; k < m; ++k) {
    for (Eigen::Index i = 0; i < q[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < q[k].cols(); ++j) {
        for (std::size_t c = 0; c < m; ++c) total += term(p[c](i, j), q[k](i, j));
        if (include_semantic) total += term(s_sharp[k](i, j), q[k](i, j));
      }
    }
  }
  return total;
}

inline Matrix soft_assign(const Matrix& z, const Matrix& mu) {
  Matrix q(z.rows(), mu.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < mu.rows(); ++j) {
      double d2 = 0.0;
      for (Eigen::Index d = 0; d < z.cols(); ++d) d2 += (z(i, d) - mu(j, d)) * (z(i, d) - mu(j, d));
      q(i, j) = 1.0 / (1.0 + d2);
      total += q(i, j);
    }
    for (Eigen::Index j = 0; j < mu.rows(); ++j) q(i, j) /= total;
  }
  return q;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (Eigen::Index j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double total = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) total += (out(i, j) = std::exp(logits(i, j) - mx));
    for (Eigen::Index j = 0; j < logits.cols(); ++j) out(i, j) /= total;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clustering metrics

template <typename A, typename B>
double brute_force_accuracy(const A& pred, const B& truth) {
  std::map<long, std::size_t> pid;
  std::map<long, std::size_t> tid;
  for (auto p : pred) pid.emplace(static_cast<long>(p), pid.size());
  for (auto t : truth) tid.emplace(static_cast<long>(t), tid.size());
  const std::size_t size = std::max(pid.size(), tid.size());
  std::vector<std::size_t> perm(size);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (perm[pid.at(static_cast<long>(pred[i]))] == tid.at(static_cast<long>(truth[i]))) ++hits;
    }
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(pred.size());
}

struct Pairs {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

template <typename A, typename B>
Pairs enumerate_pairs(const A& pred, const B& truth) {
  Pairs p;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const bool same_pred = pred[i] == pred[j];
      const bool same_true = truth[i] == truth[j];
      if (same_pred && same_true) ++p.tp;
      if (same_pred && !same_true) ++p.fp;
      if (!same_pred && same_true) ++p.fn;
      if (!same_pred && !same_true) ++p.tn;
    }
  }
  return p;
}

template <typename A, typename B>
double all_pairs_rand_index(const A& pred, const B& truth) {
  const auto p = enumerate_pairs(pred, truth);
  return static_cast<double>(p.tp + p.tn) / static_cast<double>(p.tp + p.fp + p.fn + p.tn);
}

template <typename A, typename B>
double all_pairs_fscore(const A& pred, const B& truth) {
  const auto p = enumerate_pairs(pred, truth);
  if (p.tp == 0) return (p.fp + p.fn) == 0 ? 1.0 : 0.0;
  return static_cast<double>(2 * p.tp) / static_cast<double>(2 * p.tp + p.fp + p.fn);
}

template <typename A, typename B>
double direct_nmi(const A& pred, const B& truth) {
  const double n = static_cast<double>(pred.size());
  std::map<long, double> pa;
  std::map<long, double> pb;
  std::map<std::pair<long, long>, double> pab;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pa[static_cast<long>(pred[i])] += 1.0 / n;
    pb[static_cast<long>(truth[i])] += 1.0 / n;
    pab[{static_cast<long>(pred[i]), static_cast<long>(truth[i])}] += 1.0 / n;
  }
  double ha = 0.0;
  double hb = 0.0;
  double mi = 0.0;
  for (auto& [l, p] : pa) ha -= p * std::log(p);
  for (auto& [l, p] : pb) hb -= p * std::log(p);
  for (auto& [key, p] : pab) mi += p * std::log(p / (pa[key.first] * pb[key.second]));
  return mi / std::sqrt(ha * hb);
}

// ---------------------------------------------------------------------------
// Random inputs

inline Matrix random_row_stochastic(Eigen::Index n, Eigen::Index k, mcoco::Rng& rng) {
  Matrix m(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) total += (m(i, j) = rng.uniform(0.01, 1.0));
    m.row(i) /= total;
  }
  return m;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, mcoco::Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// ---------------------------------------------------------------------------
// Central finite differences

/// Perturbs every entry of `tensor` by +-step and returns the numeric gradient
/// of `loss` with respect to it. `tensor` is restored afterwards.
template <typename Tensor>
Eigen::VectorXd central_difference(Tensor& tensor, const std::function<double()>& loss, double step = 1e-5) {
  Eigen::VectorXd grad(tensor.size());
  for (Eigen::Index i = 0; i < tensor.size(); ++i) {
    const double saved = tensor.data()[i];
    tensor.data()[i] = saved + step;
    const double up = loss();
    tensor.data()[i] = saved - step;
    const double down = loss();
    tensor.data()[i] = saved;
    grad(i) = (up - down) / (2.0 * step);
  }
  return grad;
}

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

}  // namespace oracle
