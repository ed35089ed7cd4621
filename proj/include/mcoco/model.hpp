#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mcoco/data.hpp"
#include "mcoco/error.hpp"
#include "mcoco/nn.hpp"
#include "mcoco/rng.hpp"

namespace mcoco {

/// Layer widths of the whole model. Encoder i is
/// view_dims[i] -> hidden_widths[i]... -> latent_dim, decoder i mirrors it,
/// and the shared semantic generator is latent_dim -> semantic_hidden... -> k.
struct Architecture {
  std::vector<std::size_t> view_dims;
  std::vector<std::vector<std::size_t>> hidden_widths;
  std::size_t latent_dim = 10;
  std::vector<std::size_t> semantic_hidden{256};
  std::size_t k = 2;

  std::size_t n_views() const { return view_dims.size(); }

  std::vector<std::size_t> encoder_widths(std::size_t view) const {
    std::vector<std::size_t> w{view_dims.at(view)};
    w.insert(w.end(), hidden_widths.at(view).begin(), hidden_widths.at(view).end());
    w.push_back(latent_dim);
    return w;
  }

  std::vector<std::size_t> decoder_widths(std::size_t view) const {
    auto w = encoder_widths(view);
    return {w.rbegin(), w.rend()};
  }

  std::vector<std::size_t> semantic_widths() const {
    std::vector<std::size_t> w{latent_dim};
    w.insert(w.end(), semantic_hidden.begin(), semantic_hidden.end());
    w.push_back(k);
    return w;
  }

  void validate() const {
    detail::require(view_dims.size() >= 2, "architecture needs at least 2 views");
    detail::require(hidden_widths.size() == view_dims.size(), "hidden_widths must list one entry per view");
    detail::require(latent_dim >= 1, "latent_dim must be positive");
    detail::require(k >= 2, "k must be at least 2");
    for (auto d : view_dims) detail::require(d >= 1, "view dims must be positive");
    for (const auto& hw : hidden_widths) {
      for (auto w : hw) detail::require(w >= 1, "hidden widths must be positive");
    }
    for (auto w : semantic_hidden) detail::require(w >= 1, "semantic widths must be positive");
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Per-view encoders (theta_i) and decoders (phi_i) plus the one semantic
/// generator shared by all views.
struct ModelParameters {
  Architecture arch;
  std::vector<nn::Mlp> encoders;
  std::vector<nn::Mlp> decoders;
  nn::Mlp semantic;

  static ModelParameters create(const Architecture& arch, Rng& rng) {
    arch.validate();
    ModelParameters p;
    p.arch = arch;
    for (std::size_t v = 0; v < arch.n_views(); ++v) {
      p.encoders.push_back(nn::Mlp::create(arch.encoder_widths(v), rng));
      p.decoders.push_back(nn::Mlp::create(arch.decoder_widths(v), rng));
    }
    p.semantic = nn::Mlp::create(arch.semantic_widths(), rng);
    return p;
  }

  ModelParameters zeros_like() const {
    ModelParameters g;
    g.arch = arch;
    for (const auto& e : encoders) g.encoders.push_back(e.zeros_like());
    for (const auto& d : decoders) g.decoders.push_back(d.zeros_like());
    g.semantic = semantic.zeros_like();
    return g;
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    for (auto& e : encoders) e.for_each_tensor(f);
    for (auto& d : decoders) d.for_each_tensor(f);
    semantic.for_each_tensor(f);
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    for (const auto& e : encoders) e.for_each_tensor(f);
    for (const auto& d : decoders) d.for_each_tensor(f);
    semantic.for_each_tensor(f);
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }
};

/// Learnable cluster centroids, one [k x D_Z] matrix per view.
struct CentroidSet {
  std::vector<Matrix> centroids;

  std::size_t n_views() const { return centroids.size(); }

  CentroidSet zeros_like() const {
    CentroidSet out;
    for (const auto& c : centroids) out.centroids.push_back(Matrix::Zero(c.rows(), c.cols()));
    return out;
  }
};

enum class AssignmentRole { Q, P, S, SSharp };

inline const char* to_string(AssignmentRole role) {
  switch (role) {
    case AssignmentRole::Q:
      return "Q";
    case AssignmentRole::P:
      return "P";
    case AssignmentRole::S:
      return "S";
    case AssignmentRole::SSharp:
      return "S'";
  }
  return "?";
}

/// Row-stochastic [N x k] matrix tagged with what it represents.
struct AssignmentMatrix {
  Matrix values;
  AssignmentRole role = AssignmentRole::Q;
  std::size_t view = 0;

  bool is_row_stochastic(double tol = 1e-5) const {
    if ((values.array() < 0.0).any() || (values.array() > 1.0 + tol).any()) return false;
    return ((values.rowwise().sum().array() - 1.0).abs() <= tol).all();
  }
};

/// Converts a float32 view (or selected rows of it) to the double matrices the
/// networks consume.
inline Matrix to_matrix(const ViewMatrix& view) { return view.cast<double>(); }

inline Matrix gather_rows(const ViewMatrix& view, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), view.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = view.row(static_cast<Eigen::Index>(rows[r])).cast<double>();
  }
  return out;
}

namespace detail {

inline void check_view_index(const ModelParameters& params, std::size_t view) {
  require(view < params.encoders.size(),
          "view index " + std::to_string(view) + " out of range (model has " + std::to_string(params.encoders.size()) +
              " views)");
}

inline void check_cols(const Matrix& m, std::size_t expected, const std::string& what) {
  require(static_cast<std::size_t>(m.cols()) == expected, what + " has " + std::to_string(m.cols()) +
                                                              " columns, expected " + std::to_string(expected));
}

}  // namespace detail

/// Z = E_i(X) for a batch of view-i rows.
inline Matrix encode(const ModelParameters& params, std::size_t view, const Matrix& x) {
  detail::check_view_index(params, view);
  detail::check_cols(x, params.arch.view_dims[view], "view " + std::to_string(view) + " batch");
  return params.encoders[view].forward(x);
}

/// X_hat = D_i(Z).
inline Matrix decode(const ModelParameters& params, std::size_t view, const Matrix& z) {
  detail::check_view_index(params, view);
  detail::check_cols(z, params.arch.latent_dim, "latent batch");
  return params.decoders[view].forward(z);
}

/// S = softmax(G_c(Z)), using the shared generator whatever view Z came from.
inline AssignmentMatrix semantic_labels(const ModelParameters& params, const Matrix& z, std::size_t view = 0) {
  detail::check_cols(z, params.arch.latent_dim, "latent batch");
  return {nn::softmax_rows(params.semantic.forward(z)), AssignmentRole::S, view};
}

/// Unnormalized Student's t kernel (1 + ||z_i - mu_j||^2)^-1, one degree of
/// freedom.
inline Matrix student_t_kernel(const Matrix& z, const Matrix& centroids) {
  Matrix kernel(z.rows(), centroids.rows());
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    kernel.col(j) = (1.0 + (z.rowwise() - centroids.row(j)).rowwise().squaredNorm().array()).inverse().matrix();
  }
  return kernel;
}

/// Soft cluster assignment Q (Student's t with one degree of freedom).
inline AssignmentMatrix soft_assign(const Matrix& z, const Matrix& centroids, std::size_t view = 0) {
  detail::require(z.cols() == centroids.cols(), "latent width " + std::to_string(z.cols()) +
                                                    " does not match centroid width " +
                                                    std::to_string(centroids.cols()));
  detail::require(centroids.rows() >= 1, "need at least one centroid");
  detail::require(z.allFinite(), "soft_assign: latent batch contains non-finite values");
  detail::require(centroids.allFinite(), "soft_assign: centroids contain non-finite values");
  Matrix kernel = student_t_kernel(z, centroids);
  kernel.array().colwise() /= kernel.rowwise().sum().array();
  return {std::move(kernel), AssignmentRole::Q, view};
}

/// Backprop through soft_assign. `grad_log_kernel` is dL/d(log t_ij) where
/// t is the unnormalized kernel; returns dL/dZ and accumulates dL/dmu.
inline Matrix soft_assign_backward(const Matrix& z, const Matrix& centroids, const Matrix& grad_log_kernel,
                                   Matrix& grad_centroids) {
  const Matrix kernel = student_t_kernel(z, centroids);
  // d log t_ij / d z_i = -2 t_ij (z_i - mu_j)
  const Matrix weights = (grad_log_kernel.array() * kernel.array()).matrix() * -2.0;
  const Eigen::VectorXd row_sum = weights.rowwise().sum();
  Matrix grad_z = z.array().colwise() * row_sum.array();
  grad_z.noalias() -= weights * centroids;
  const Eigen::RowVectorXd col_sum = weights.colwise().sum();
  grad_centroids.array() += (centroids.array().colwise() * col_sum.transpose().array());
  grad_centroids.noalias() -= weights.transpose() * z;
  return grad_z;
}

}  // namespace mcoco
