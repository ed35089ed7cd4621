#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcoco/error.hpp"
#include "mcoco/rng.hpp"

namespace mcoco {

/// One view's features: N rows, D_i columns, row-major float32 (matches the
/// on-disk layout byte for byte).
using ViewMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Labels = std::vector<std::uint32_t>;

/// m feature matrices over the same N samples, plus optional ground truth.
struct MultiViewDataset {
  std::vector<ViewMatrix> views;
  std::optional<Labels> labels;
  std::optional<int> k_hint;

  std::size_t n_samples() const { return views.empty() ? 0 : static_cast<std::size_t>(views.front().rows()); }
  std::size_t n_views() const { return views.size(); }
  std::size_t view_dim(std::size_t i) const { return static_cast<std::size_t>(views.at(i).cols()); }

  std::vector<std::size_t> view_dims() const {
    std::vector<std::size_t> dims;
    for (const auto& v : views) dims.push_back(static_cast<std::size_t>(v.cols()));
    return dims;
  }

  /// Throws InvalidArgument describing the first violated invariant.
  void validate() const {
    detail::require(views.size() >= 2, "dataset needs at least 2 views, got " + std::to_string(views.size()));
    const auto n = views.front().rows();
    detail::require(n >= 1, "dataset needs at least one sample");
    for (std::size_t i = 0; i < views.size(); ++i) {
      detail::require(views[i].rows() == n, "view " + std::to_string(i) + " has " + std::to_string(views[i].rows()) +
                                                " rows, expected " + std::to_string(n));
      detail::require(views[i].cols() >= 1, "view " + std::to_string(i) + " has no features");
      detail::require(views[i].allFinite(), "view " + std::to_string(i) + " contains non-finite values");
    }
    if (k_hint) detail::require(*k_hint >= 1, "k must be positive");
    if (labels) {
      detail::require(labels->size() == static_cast<std::size_t>(n),
                      "labels length " + std::to_string(labels->size()) + " does not match N=" + std::to_string(n));
      const std::uint32_t max_label = *std::max_element(labels->begin(), labels->end());
      const std::size_t k = k_hint ? static_cast<std::size_t>(*k_hint) : std::size_t{max_label} + 1;
      detail::require(max_label < k, "label " + std::to_string(max_label) + " outside [0, k)");
      std::vector<bool> seen(k, false);
      for (auto l : *labels) seen[l] = true;
      for (std::size_t c = 0; c < k; ++c) {
        detail::require(seen[c], "class " + std::to_string(c) + " has no samples");
      }
    }
  }

  /// Number of ground-truth classes, if known.
  std::optional<int> n_classes() const {
    if (k_hint) return k_hint;
    if (labels && !labels->empty()) return static_cast<int>(*std::max_element(labels->begin(), labels->end())) + 1;
    return std::nullopt;
  }

  friend bool operator==(const MultiViewDataset& a, const MultiViewDataset& b) {
    if (a.views.size() != b.views.size() || a.labels != b.labels || a.k_hint != b.k_hint) return false;
    for (std::size_t i = 0; i < a.views.size(); ++i) {
      const auto& x = a.views[i];
      const auto& y = b.views[i];
      if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
      if (x.size() > 0 && std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) != 0) {
        return false;
      }
    }
    return true;
  }
};

/// Recipe for a synthetic dataset with a shared clustered latent.
struct SynthSpec {
  std::size_t n_samples = 300;
  std::size_t n_clusters = 3;
  std::size_t n_views = 2;
  std::size_t latent_dim = 4;
  std::vector<std::size_t> view_dims{20, 20};
  std::vector<double> noise_sigmas{0.05, 0.05};
  double cluster_separation = 6.0;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(n_samples >= 1, "n_samples must be positive");
    detail::require(n_clusters >= 2, "n_clusters must be at least 2");
    detail::require(n_views >= 2, "n_views must be at least 2");
    detail::require(latent_dim >= 1, "latent_dim must be positive");
    detail::require(view_dims.size() == n_views, "view_dims must list one width per view");
    detail::require(noise_sigmas.size() == n_views, "noise_sigmas must list one scale per view");
    for (auto d : view_dims) detail::require(d >= 1, "view dims must be positive");
    for (auto s : noise_sigmas) detail::require(std::isfinite(s) && s >= 0.0, "noise sigmas must be finite and >= 0");
    detail::require(std::isfinite(cluster_separation) && cluster_separation > 0.0, "cluster_separation must be positive");
    detail::require(n_samples >= n_clusters, "n_samples must be >= n_clusters");
  }
};

namespace detail {

/// k latent means with pairwise distance >= separation. When k <= latent_dim
/// the means sit on scaled orthonormal directions, so every pair is exactly
/// `separation` apart; otherwise Gaussian draws are rejection-sampled.
inline Eigen::MatrixXd draw_cluster_means(const SynthSpec& spec, Rng& rng) {
  const auto k = static_cast<Eigen::Index>(spec.n_clusters);
  const auto dim = static_cast<Eigen::Index>(spec.latent_dim);
  Eigen::MatrixXd means(k, dim);
  if (k <= dim) {
    Eigen::MatrixXd g(dim, dim);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd basis = qr.householderQ();
    const double scale = spec.cluster_separation / std::sqrt(2.0);
    for (Eigen::Index c = 0; c < k; ++c) means.row(c) = scale * basis.col(c).transpose();
    return means;
  }
  for (int attempt = 0; attempt < 10000; ++attempt) {
    for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = spec.cluster_separation * rng.normal();
    bool ok = true;
    for (Eigen::Index a = 0; a < k && ok; ++a) {
      for (Eigen::Index b = a + 1; b < k && ok; ++b) {
        ok = (means.row(a) - means.row(b)).norm() >= spec.cluster_separation;
      }
    }
    if (ok) return means;
  }
  throw InvalidArgument("could not place " + std::to_string(k) + " cluster means at the requested separation in " +
                        std::to_string(dim) + " latent dimensions");
}

}  // namespace detail

/// Samples a labeled multi-view dataset. Each sample's latent is its cluster
/// mean plus unit Gaussian jitter; view i is tanh(A_i h + b_i) plus Gaussian
/// noise of scale noise_sigmas[i], with A_i entries ~ N(0, 1/latent_dim) and
/// b_i entries ~ N(0, 0.1^2).
inline MultiViewDataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.n_samples);
  const auto dim = static_cast<Eigen::Index>(spec.latent_dim);

  const Eigen::MatrixXd means = detail::draw_cluster_means(spec, rng);

  Labels labels(spec.n_samples);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint32_t>(i % spec.n_clusters);
  rng.shuffle(std::span<std::uint32_t>(labels));

  Eigen::MatrixXd latent(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index d = 0; d < dim; ++d) latent(i, d) = means(labels[static_cast<std::size_t>(i)], d) + rng.normal();
  }

  MultiViewDataset ds;
  ds.labels = std::move(labels);
  ds.k_hint = static_cast<int>(spec.n_clusters);
  const double weight_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t v = 0; v < spec.n_views; ++v) {
    const auto width = static_cast<Eigen::Index>(spec.view_dims[v]);
    Eigen::MatrixXd map(dim, width);
    for (Eigen::Index i = 0; i < map.size(); ++i) map.data()[i] = weight_scale * rng.normal();
    Eigen::RowVectorXd bias(width);
    for (Eigen::Index i = 0; i < width; ++i) bias(i) = 0.1 * rng.normal();
    Eigen::MatrixXd x = ((latent * map).rowwise() + bias).array().tanh().matrix();
    const double sigma = spec.noise_sigmas[v];
    ViewMatrix out(n, width);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index d = 0; d < width; ++d) {
        // Always draw so the stream does not depend on sigma.
        const double noise = rng.normal();
        out(i, d) = static_cast<float>(x(i, d) + sigma * noise);
      }
    }
    ds.views.push_back(std::move(out));
  }
  return ds;
}

/// Per-column min-max rescaling of every view to [0, 1]; constant columns
/// become 0.
inline MultiViewDataset normalize_views(const MultiViewDataset& ds) {
  ds.validate();
  MultiViewDataset out = ds;
  for (auto& view : out.views) {
    for (Eigen::Index c = 0; c < view.cols(); ++c) {
      const double lo = view.col(c).minCoeff();
      const double hi = view.col(c).maxCoeff();
      const double range = hi - lo;
      for (Eigen::Index r = 0; r < view.rows(); ++r) {
        view(r, c) = range > 0.0 ? static_cast<float>((static_cast<double>(view(r, c)) - lo) / range) : 0.0f;
      }
    }
  }
  return out;
}

namespace io {

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  const T le = to_little_endian(value);
  out.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return to_little_endian(value);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Reads a binary matrix file (uint32 rows, uint32 cols, float32 payload).
inline ViewMatrix read_view_file(const std::filesystem::path& path, std::uint32_t expected_rows,
                                 std::uint32_t expected_cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open view file " + path.string());
  const auto rows = read_le<std::uint32_t>(in);
  const auto cols = read_le<std::uint32_t>(in);
  if (!in) throw FormatError(path.string() + ": truncated header at offset 0 (need 8 bytes)");
  if (rows != expected_rows || cols != expected_cols) {
    throw FormatError(path.string() + ": header at offset 0 declares " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " but manifest expects " + std::to_string(expected_rows) + "x" +
                      std::to_string(expected_cols));
  }
  const std::uint64_t count = std::uint64_t{rows} * cols;
  const auto file_size = std::filesystem::file_size(path);
  if (file_size != 8 + 4 * count) {
    throw FormatError(path.string() + ": expected " + std::to_string(8 + 4 * count) + " bytes but file has " +
                      std::to_string(file_size) + " (payload starts at offset 8)");
  }
  ViewMatrix m(rows, cols);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto bits = read_le<std::uint32_t>(in);
    const float value = std::bit_cast<float>(bits);
    if (!std::isfinite(value)) {
      throw FormatError(path.string() + ": non-finite value at byte offset " + std::to_string(8 + 4 * i) + " (row " +
                        std::to_string(i / cols) + ", column " + std::to_string(i % cols) + ")");
    }
    m.data()[i] = value;
  }
  if (!in) throw FormatError(path.string() + ": read failed");
  return m;
}

inline void write_view_file(const std::filesystem::path& path, const ViewMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_le(out, static_cast<std::uint32_t>(m.rows()));
  write_le(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) write_le(out, std::bit_cast<std::uint32_t>(m.data()[i]));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace io

/// Writes manifest.json, view_{i}.bin and (if labeled) labels.bin into `dir`.
inline void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format_version"] = "1";
  manifest["n_samples"] = ds.n_samples();
  manifest["n_views"] = ds.n_views();
  manifest["view_dims"] = ds.view_dims();
  manifest["has_labels"] = ds.labels.has_value();
  manifest["k"] = ds.k_hint ? nlohmann::ordered_json(*ds.k_hint) : nlohmann::ordered_json(nullptr);
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  }
  for (std::size_t i = 0; i < ds.n_views(); ++i) {
    io::write_view_file(dir / ("view_" + std::to_string(i) + ".bin"), ds.views[i]);
  }
  const auto labels_path = dir / "labels.bin";
  if (ds.labels) {
    std::ofstream out(labels_path, std::ios::binary | std::ios::trunc);
    io::write_le(out, static_cast<std::uint32_t>(ds.labels->size()));
    for (auto l : *ds.labels) io::write_le(out, l);
    if (!out) throw Error("cannot write " + labels_path.string());
  } else {
    std::filesystem::remove(labels_path);
  }
}

inline MultiViewDataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }

  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::vector<std::uint32_t> dims;
  bool has_labels = false;
  std::optional<int> k;
  try {
    if (manifest.at("format_version").get<std::string>() != "1") {
      throw FormatError(manifest_path.string() + ": unsupported format_version " +
                        manifest.at("format_version").dump());
    }
    n = manifest.at("n_samples").get<std::uint32_t>();
    m = manifest.at("n_views").get<std::uint32_t>();
    dims = manifest.at("view_dims").get<std::vector<std::uint32_t>>();
    has_labels = manifest.at("has_labels").get<bool>();
    if (!manifest.at("k").is_null()) k = manifest.at("k").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (dims.size() != m) {
    throw FormatError(manifest_path.string() + ": view_dims has " + std::to_string(dims.size()) +
                      " entries but n_views is " + std::to_string(m));
  }

  MultiViewDataset ds;
  ds.k_hint = k;
  for (std::uint32_t i = 0; i < m; ++i) {
    ds.views.push_back(io::read_view_file(dir / ("view_" + std::to_string(i) + ".bin"), n, dims[i]));
  }
  if (has_labels) {
    const auto path = dir / "labels.bin";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open labels file " + path.string());
    const auto count = io::read_le<std::uint32_t>(in);
    if (!in) throw FormatError(path.string() + ": truncated header at offset 0");
    if (count != n) {
      throw FormatError(path.string() + ": header at offset 0 declares " + std::to_string(count) +
                        " labels but manifest has n_samples=" + std::to_string(n));
    }
    const auto file_size = std::filesystem::file_size(path);
    if (file_size != 4 + 4 * std::uint64_t{count}) {
      throw FormatError(path.string() + ": expected " + std::to_string(4 + 4 * std::uint64_t{count}) +
                        " bytes but file has " + std::to_string(file_size));
    }
    Labels labels(count);
    for (auto& l : labels) l = io::read_le<std::uint32_t>(in);
    ds.labels = std::move(labels);
  }
  try {
    ds.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace mcoco
