#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mcoco/error.hpp"
#include "mcoco/model.hpp"
#include "mcoco/nn.hpp"

namespace mcoco {

/// Floor applied to every logarithm argument and KL denominator.
inline constexpr double kLogFloor = 1e-12;

/// Counters for inputs that hit a defined-by-convention branch.
struct LossDiagnostics {
  std::size_t zero_norm_columns = 0;
};

struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double semantic = 0.0;
  double multilevel = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double tau = 0.5;

  bool all_finite() const {
    return std::isfinite(total) && std::isfinite(reconstruction) && std::isfinite(semantic) &&
           std::isfinite(multilevel);
  }

  LossBreakdown& operator+=(const LossBreakdown& other) {
    total += other.total;
    reconstruction += other.reconstruction;
    semantic += other.semantic;
    multilevel += other.multilevel;
    return *this;
  }
};

// ---------------------------------------------------------------------------
// Within-view reconstruction

/// Sum over views, samples and coordinates of (x - x_hat)^2.
inline double reconstruction_loss(std::span<const Matrix> inputs, std::span<const Matrix> reconstructions) {
  detail::require(inputs.size() == reconstructions.size(), "reconstruction_loss: view count mismatch");
  double total = 0.0;
  for (std::size_t v = 0; v < inputs.size(); ++v) {
    detail::require(inputs[v].rows() == inputs.front().rows(),
                    "reconstruction_loss: view " + std::to_string(v) + " batch has " +
                        std::to_string(inputs[v].rows()) + " rows, view 0 has " +
                        std::to_string(inputs.front().rows()));
    detail::require(inputs[v].rows() == reconstructions[v].rows() && inputs[v].cols() == reconstructions[v].cols(),
                    "reconstruction_loss: reconstruction shape mismatch in view " + std::to_string(v));
    total += (inputs[v] - reconstructions[v]).squaredNorm();
  }
  return total;
}

inline double reconstruction_loss(const ModelParameters& params, std::span<const Matrix> inputs) {
  detail::require(inputs.size() == params.encoders.size(), "reconstruction_loss: view count mismatch");
  std::vector<Matrix> recon;
  for (std::size_t v = 0; v < inputs.size(); ++v) recon.push_back(decode(params, v, encode(params, v, inputs[v])));
  return reconstruction_loss(inputs, std::span<const Matrix>(recon));
}

// ---------------------------------------------------------------------------
// Contrastive semantic consistency

/// Cosine similarity of two columns; 0 (and a diagnostic tick) if either is
/// the zero vector.
inline double column_cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                            LossDiagnostics* diagnostics = nullptr) {
  detail::require(a.size() == b.size(), "column_cosine: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    if (diagnostics) ++diagnostics->zero_norm_columns;
    return 0.0;
  }
  return a.dot(b) / (na * nb);
}

namespace detail {

struct NormalizedColumns {
  Matrix unit;
  Eigen::RowVectorXd norms;
};

inline NormalizedColumns normalize_columns(const Matrix& s, LossDiagnostics* diagnostics) {
  NormalizedColumns out{s, s.colwise().norm()};
  for (Eigen::Index c = 0; c < s.cols(); ++c) {
    if (out.norms(c) == 0.0) {
      if (diagnostics) ++diagnostics->zero_norm_columns;
      out.unit.col(c).setZero();
    } else {
      out.unit.col(c) /= out.norms(c);
    }
  }
  return out;
}

/// Backprop through column normalization a = s / ||s||.
inline Matrix normalize_columns_backward(const NormalizedColumns& cols, const Matrix& grad_unit) {
  Matrix grad = Matrix::Zero(grad_unit.rows(), grad_unit.cols());
  for (Eigen::Index c = 0; c < grad.cols(); ++c) {
    if (cols.norms(c) == 0.0) continue;
    const auto a = cols.unit.col(c);
    grad.col(c) = (grad_unit.col(c) - a * a.dot(grad_unit.col(c))) / cols.norms(c);
  }
  return grad;
}

}  // namespace detail

/// Semantic contrastive loss l(i, j) between two views' semantic label
/// matrices. Columns are compared by cosine similarity; column c of view i has
/// column c of view j as its positive and every other column of both views as
/// negatives, with the self-pair term removed from the denominator. For a
/// nonzero column the self term is e^{1/tau}; a zero column has cosine 0 with
/// itself, so its self term is e^0 and the denominator stays positive.
///
/// When grad_i / grad_j are given, dl/dS_i and dl/dS_j are added to them.
inline double pairwise_semantic_loss(const Matrix& s_i, const Matrix& s_j, double tau, Matrix* grad_i = nullptr,
                                     Matrix* grad_j = nullptr, LossDiagnostics* diagnostics = nullptr) {
  detail::require(tau > 0.0 && std::isfinite(tau), "pairwise_semantic_loss: tau must be positive");
  detail::require(s_i.rows() == s_j.rows() && s_i.cols() == s_j.cols(), "pairwise_semantic_loss: shape mismatch");
  const auto k = s_i.cols();
  const auto a = detail::normalize_columns(s_i, diagnostics);
  const auto b = detail::normalize_columns(s_j, diagnostics);
  const Matrix within = a.unit.transpose() * a.unit;  // d(S_i col c, S_i col w)
  const Matrix across = a.unit.transpose() * b.unit;  // d(S_i col c, S_j col w)
  const Matrix exp_within = (within.array() / tau).exp().matrix();
  const Matrix exp_across = (across.array() / tau).exp().matrix();
  const Eigen::VectorXd denom =
      exp_within.rowwise().sum() + exp_across.rowwise().sum() - exp_within.diagonal();

  double loss = 0.0;
  for (Eigen::Index c = 0; c < k; ++c) {
    loss += across(c, c) / tau - std::log(denom(c));
  }
  loss = -loss / static_cast<double>(k);

  if (grad_i || grad_j) {
    const double scale = 1.0 / (static_cast<double>(k) * tau);
    Matrix g_within = exp_within.array().colwise() / denom.array();
    g_within *= scale;
    g_within.diagonal().setZero();
    Matrix g_across = exp_across.array().colwise() / denom.array();
    g_across *= scale;
    g_across.diagonal().array() -= scale;
    if (grad_i) {
      const Matrix grad_unit_a = a.unit * (g_within + g_within.transpose()) + b.unit * g_across.transpose();
      *grad_i += detail::normalize_columns_backward(a, grad_unit_a);
    }
    if (grad_j) {
      const Matrix grad_unit_b = a.unit * g_across;
      *grad_j += detail::normalize_columns_backward(b, grad_unit_b);
    }
  }
  return loss;
}

/// sum_c pbar_c log pbar_c with pbar the column means of S; 0 log 0 := 0.
inline double semantic_regularizer(const Matrix& s, Matrix* grad = nullptr) {
  const auto n = static_cast<double>(s.rows());
  const Eigen::RowVectorXd mean = s.colwise().sum() / n;
  double value = 0.0;
  for (Eigen::Index c = 0; c < mean.size(); ++c) {
    if (mean(c) > 0.0) value += mean(c) * std::log(std::max(mean(c), kLogFloor));
  }
  if (grad) {
    Eigen::RowVectorXd dmean(mean.size());
    for (Eigen::Index c = 0; c < mean.size(); ++c) dmean(c) = (std::log(std::max(mean(c), kLogFloor)) + 1.0) / n;
    grad->rowwise() += dmean;
  }
  return value;
}

/// L_Se: half the sum of l(i, j) over ordered view pairs i != j, plus the
/// per-view regularizer.
inline double semantic_consistency_loss(std::span<const Matrix> semantic, double tau,
                                        std::vector<Matrix>* grads = nullptr, LossDiagnostics* diagnostics = nullptr) {
  detail::require(semantic.size() >= 2, "semantic_consistency_loss: needs at least 2 views");
  const auto m = semantic.size();
  if (grads) {
    detail::require(grads->size() == m, "semantic_consistency_loss: gradient list size mismatch");
  }
  double contrastive = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      Matrix gi;
      Matrix gj;
      if (grads) {
        gi = Matrix::Zero(semantic[i].rows(), semantic[i].cols());
        gj = Matrix::Zero(semantic[j].rows(), semantic[j].cols());
      }
      contrastive += pairwise_semantic_loss(semantic[i], semantic[j], tau, grads ? &gi : nullptr,
                                            grads ? &gj : nullptr, diagnostics);
      if (grads) {
        (*grads)[i] += 0.5 * gi;
        (*grads)[j] += 0.5 * gj;
      }
    }
  }
  double regularizer = 0.0;
  for (std::size_t i = 0; i < m; ++i) regularizer += semantic_regularizer(semantic[i], grads ? &(*grads)[i] : nullptr);
  return 0.5 * contrastive + regularizer;
}

// ---------------------------------------------------------------------------
// Target sharpening

/// Square-and-normalize: T_ij = (A_ij^2 / f_j) / sum_j' (A_ij'^2 / f_j') with
/// f_j the column sums. A zero column contributes 0 (0/0 := 0); a row that
/// ends up all zero is rejected.
inline Matrix sharpen(const Matrix& a) {
  detail::require(a.allFinite() && (a.array() >= 0.0).all(), "sharpen: entries must be finite and non-negative");
  const Eigen::RowVectorXd freq = a.colwise().sum();
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (freq(j) > 0.0) {
      out.col(j) = a.col(j).array().square() / freq(j);
    } else {
      out.col(j).setZero();
    }
  }
  const Eigen::VectorXd row_sum = out.rowwise().sum();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!(row_sum(i) > 0.0)) {
      throw DegenerateInput("sharpen: row " + std::to_string(i) + " has no mass after squaring");
    }
  }
  out.array().colwise() /= row_sum.array();
  return out;
}

/// Backprop through sharpen(a) given dL/d(output).
inline Matrix sharpen_backward(const Matrix& a, const Matrix& grad_out) {
  const Eigen::RowVectorXd freq = a.colwise().sum();
  Matrix u(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (freq(j) > 0.0) {
      u.col(j) = a.col(j).array().square() / freq(j);
    } else {
      u.col(j).setZero();
    }
  }
  const Eigen::VectorXd row_sum = u.rowwise().sum();
  const Matrix t = u.array().colwise() / row_sum.array();
  const Eigen::VectorXd inner = (grad_out.array() * t.array()).rowwise().sum();
  const Matrix grad_u = (grad_out.colwise() - inner).array().colwise() / row_sum.array();
  Matrix grad_a = Matrix::Zero(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (!(freq(j) > 0.0)) continue;
    const double through_freq = (grad_u.col(j).array() * a.col(j).array().square()).sum() / (freq(j) * freq(j));
    grad_a.col(j) = (2.0 / freq(j)) * (grad_u.col(j).array() * a.col(j).array()) - through_freq;
  }
  return grad_a;
}

/// Q -> P and S -> S'.
inline AssignmentMatrix sharpen(const AssignmentMatrix& a) {
  AssignmentRole role = a.role;
  if (a.role == AssignmentRole::Q) role = AssignmentRole::P;
  if (a.role == AssignmentRole::S) role = AssignmentRole::SSharp;
  return {sharpen(a.values), role, a.view};
}

// ---------------------------------------------------------------------------
// Multi-level KL collaboration

/// sum_ij T_ij log(T_ij / Q_ij) with the floors described above.
inline double kl_divergence(const Matrix& target, const Matrix& q) {
  detail::require(target.rows() == q.rows() && target.cols() == q.cols(), "kl_divergence: shape mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const double t = target.data()[i];
    if (t <= 0.0) continue;
    total += t * (std::log(std::max(t, kLogFloor)) - std::log(std::max(q.data()[i], kLogFloor)));
  }
  return total;
}

/// L_Ml = sum_k [ sum_c KL(P_c || Q_k) + KL(S'_k || Q_k) ]. The inner sum runs
/// over every view c, including c = k. `include_semantic = false` drops the
/// KL(S'_k || Q_k) terms.
inline double multilevel_loss(std::span<const Matrix> q, std::span<const Matrix> p, std::span<const Matrix> s_sharp,
                              bool include_semantic = true) {
  detail::require(q.size() == p.size() && q.size() == s_sharp.size(), "multilevel_loss: view count mismatch");
  for (std::size_t v = 0; v < q.size(); ++v) {
    detail::require(q[v].rows() == q.front().rows() && q[v].cols() == q.front().cols() &&
                        p[v].rows() == q.front().rows() && p[v].cols() == q.front().cols() &&
                        s_sharp[v].rows() == q.front().rows() && s_sharp[v].cols() == q.front().cols(),
                    "multilevel_loss: shape mismatch in view " + std::to_string(v));
  }
  double total = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    for (std::size_t c = 0; c < p.size(); ++c) total += kl_divergence(p[c], q[k]);
    if (include_semantic) total += kl_divergence(s_sharp[k], q[k]);
  }
  return total;
}

/// dL_Ml/d(log t) for view k, where t is the unnormalized Student's t kernel
/// behind Q_k. Targets are constants, so with W = sum_c P_c (+ S'_k) the
/// gradient is Q_k * rowsum(W) - W.
inline Matrix multilevel_grad_log_kernel(const Matrix& q_k, std::span<const Matrix> p, const Matrix& s_sharp_k,
                                         bool include_semantic = true) {
  Matrix weight = Matrix::Zero(q_k.rows(), q_k.cols());
  for (const auto& target : p) weight += target;
  if (include_semantic) weight += s_sharp_k;
  const Eigen::VectorXd row_weight = weight.rowwise().sum();
  return (q_k.array().colwise() * row_weight.array()).matrix() - weight;
}

// ---------------------------------------------------------------------------

/// L = L_Re + lambda1 L_Se + lambda2 L_Ml.
inline LossBreakdown total_loss(double reconstruction, double semantic, double multilevel, double lambda1 = 1.0,
                                double lambda2 = 1.0, double tau = 0.5) {
  LossBreakdown out;
  out.reconstruction = reconstruction;
  out.semantic = semantic;
  out.multilevel = multilevel;
  out.lambda1 = lambda1;
  out.lambda2 = lambda2;
  out.tau = tau;
  out.total = reconstruction + lambda1 * semantic + lambda2 * multilevel;
  return out;
}

}  // namespace mcoco
