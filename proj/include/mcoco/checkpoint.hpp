#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcoco/config.hpp"
#include "mcoco/data.hpp"
#include "mcoco/error.hpp"
#include "mcoco/model.hpp"
#include "mcoco/optim.hpp"
#include "mcoco/trainer.hpp"

namespace mcoco {

/// Checkpoint archive layout (all integers little-endian):
///
///   "MCOCOCKP"                      8-byte magic
///   uint32 entry_count
///   entry_count x { uint32 name_len, name bytes, uint64 size, payload }
///
/// Text entries: `format_version` ("1"), `architecture` (JSON), `config`
/// (key = value run config), `state` (JSON: epochs completed, Adam step,
/// generator state). Tensor entries (`encoder/<v>/<layer>/weight`, `.../bias`,
/// `decoder/...`, `semantic/<layer>/...`, `centroids/<v>`, `adam/m/<i>`,
/// `adam/v/<i>`) use the dataset matrix header (uint32 rows, uint32 cols)
/// followed by row-major float64 values, so parameters round-trip exactly.
inline constexpr std::string_view kCheckpointMagic = "MCOCOCKP";
inline constexpr std::string_view kCheckpointVersion = "1";

struct Checkpoint {
  TrainerState state;
  RunConfig config;
};

namespace checkpoint_detail {

using Archive = std::map<std::string, std::string>;

template <typename Derived>
std::string encode_tensor(const Eigen::MatrixBase<Derived>& t) {
  std::ostringstream out(std::ios::binary);
  io::write_le(out, static_cast<std::uint32_t>(t.rows()));
  io::write_le(out, static_cast<std::uint32_t>(t.cols()));
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) io::write_le(out, std::bit_cast<std::uint64_t>(double(t(r, c))));
  }
  return out.str();
}

template <typename Derived>
void decode_tensor(const std::string& name, const std::string& payload, Eigen::MatrixBase<Derived>& t) {
  std::istringstream in(payload, std::ios::binary);
  const auto rows = io::read_le<std::uint32_t>(in);
  const auto cols = io::read_le<std::uint32_t>(in);
  if (!in) throw FormatError("checkpoint tensor " + name + ": truncated header");
  if (rows != t.rows() || cols != t.cols()) {
    throw FormatError("checkpoint tensor " + name + ": stored shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " does not match architecture shape " + std::to_string(t.rows()) + "x" +
                      std::to_string(t.cols()));
  }
  if (payload.size() != 8 + 8 * std::uint64_t{rows} * cols) {
    throw FormatError("checkpoint tensor " + name + ": payload size " + std::to_string(payload.size()) +
                      " does not match its header");
  }
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = std::bit_cast<double>(io::read_le<std::uint64_t>(in));
  }
}

inline Matrix decode_any_tensor(const std::string& name, const std::string& payload) {
  std::istringstream in(payload, std::ios::binary);
  const auto rows = io::read_le<std::uint32_t>(in);
  const auto cols = io::read_le<std::uint32_t>(in);
  if (!in) throw FormatError("checkpoint tensor " + name + ": truncated header");
  Matrix m(rows, cols);
  decode_tensor(name, payload, m);
  return m;
}

template <typename F>
void for_each_named_tensor(ModelParameters& params, F&& f) {
  auto visit_mlp = [&](const std::string& prefix, nn::Mlp& mlp) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      f(prefix + "/" + std::to_string(l) + "/weight", mlp.layers[l].weight);
      f(prefix + "/" + std::to_string(l) + "/bias", mlp.layers[l].bias);
    }
  };
  for (std::size_t v = 0; v < params.encoders.size(); ++v) visit_mlp("encoder/" + std::to_string(v), params.encoders[v]);
  for (std::size_t v = 0; v < params.decoders.size(); ++v) visit_mlp("decoder/" + std::to_string(v), params.decoders[v]);
  visit_mlp("semantic", params.semantic);
}

inline nlohmann::ordered_json architecture_json(const Architecture& arch) {
  nlohmann::ordered_json j;
  j["view_dims"] = arch.view_dims;
  j["hidden_widths"] = arch.hidden_widths;
  j["latent_dim"] = arch.latent_dim;
  j["semantic_hidden"] = arch.semantic_hidden;
  j["k"] = arch.k;
  return j;
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture arch;
  arch.view_dims = j.at("view_dims").get<std::vector<std::size_t>>();
  arch.hidden_widths = j.at("hidden_widths").get<std::vector<std::vector<std::size_t>>>();
  arch.latent_dim = j.at("latent_dim").get<std::size_t>();
  arch.semantic_hidden = j.at("semantic_hidden").get<std::vector<std::size_t>>();
  arch.k = j.at("k").get<std::size_t>();
  return arch;
}

inline const std::string& entry(const Archive& archive, const std::string& name, const std::filesystem::path& path) {
  const auto it = archive.find(name);
  if (it == archive.end()) throw FormatError(path.string() + ": checkpoint is missing entry '" + name + "'");
  return it->second;
}

}  // namespace checkpoint_detail

inline void save_checkpoint(const std::filesystem::path& path, const TrainerState& state, const RunConfig& config) {
  using namespace checkpoint_detail;
  std::vector<std::pair<std::string, std::string>> entries;
  entries.emplace_back("format_version", std::string(kCheckpointVersion));
  entries.emplace_back("architecture", architecture_json(state.params.arch).dump(2));
  entries.emplace_back("config", format_run_config(config));
  nlohmann::ordered_json meta;
  meta["epochs_completed"] = state.epochs_completed;
  meta["adam_step"] = state.optimizer.steps();
  meta["adam_tensors"] = state.optimizer.first_moments().size();
  meta["rng_state"] = state.rng.state();
  entries.emplace_back("state", meta.dump(2));

  auto params = state.params;  // for_each_named_tensor needs mutable access
  for_each_named_tensor(params, [&](const std::string& name, auto& t) { entries.emplace_back(name, encode_tensor(t)); });
  for (std::size_t v = 0; v < state.centroids.centroids.size(); ++v) {
    entries.emplace_back("centroids/" + std::to_string(v), encode_tensor(state.centroids.centroids[v]));
  }
  for (std::size_t i = 0; i < state.optimizer.first_moments().size(); ++i) {
    entries.emplace_back("adam/m/" + std::to_string(i), encode_tensor(state.optimizer.first_moments()[i]));
    entries.emplace_back("adam/v/" + std::to_string(i), encode_tensor(state.optimizer.second_moments()[i]));
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  io::write_le(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, payload] : entries) {
    io::write_le(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_le(out, static_cast<std::uint64_t>(payload.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  if (!out) throw Error("write failed for checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  using namespace checkpoint_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kCheckpointMagic) throw FormatError(path.string() + ": not a checkpoint archive (bad magic)");
  const auto file_size = std::filesystem::file_size(path);
  const auto count = io::read_le<std::uint32_t>(in);
  if (!in) throw FormatError(path.string() + ": truncated entry count");
  Archive archive;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = io::read_le<std::uint32_t>(in);
    if (!in || name_len > file_size) throw FormatError(path.string() + ": corrupt entry header " + std::to_string(e));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto size = io::read_le<std::uint64_t>(in);
    if (!in || size > file_size) throw FormatError(path.string() + ": corrupt entry '" + name + "'");
    std::string payload(size, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(size));
    if (!in) throw FormatError(path.string() + ": truncated entry '" + name + "'");
    archive.emplace(std::move(name), std::move(payload));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after archive");

  const auto& version = entry(archive, "format_version", path);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint format_version '" + version + "'");
  }

  Checkpoint ck;
  try {
    const auto arch = architecture_from_json(nlohmann::json::parse(entry(archive, "architecture", path)));
    arch.validate();
    ck.config = parse_run_config(entry(archive, "config", path));
    const auto meta = nlohmann::json::parse(entry(archive, "state", path));
    ck.state.epochs_completed = meta.at("epochs_completed").get<std::size_t>();
    ck.state.rng.restore(meta.at("rng_state").get<std::string>());

    Rng scratch(0);
    ck.state.params = ModelParameters::create(arch, scratch);
    for_each_named_tensor(ck.state.params,
                          [&](const std::string& name, auto& t) { decode_tensor(name, entry(archive, name, path), t); });
    for (std::size_t v = 0; v < arch.n_views(); ++v) {
      const auto name = "centroids/" + std::to_string(v);
      Matrix c = decode_any_tensor(name, entry(archive, name, path));
      if (static_cast<std::size_t>(c.rows()) != arch.k || static_cast<std::size_t>(c.cols()) != arch.latent_dim) {
        throw FormatError(path.string() + ": " + name + " has shape " + std::to_string(c.rows()) + "x" +
                          std::to_string(c.cols()) + ", expected k x latent_dim");
      }
      ck.state.centroids.centroids.push_back(std::move(c));
    }
    const auto adam_tensors = meta.at("adam_tensors").get<std::size_t>();
    std::vector<Eigen::VectorXd> m;
    std::vector<Eigen::VectorXd> v;
    for (std::size_t i = 0; i < adam_tensors; ++i) {
      const auto mm = decode_any_tensor("adam/m/" + std::to_string(i), entry(archive, "adam/m/" + std::to_string(i), path));
      const auto vv = decode_any_tensor("adam/v/" + std::to_string(i), entry(archive, "adam/v/" + std::to_string(i), path));
      m.emplace_back(Eigen::Map<const Eigen::VectorXd>(mm.data(), mm.size()));
      v.emplace_back(Eigen::Map<const Eigen::VectorXd>(vv.data(), vv.size()));
    }
    ck.state.optimizer = Adam(ck.config.training.adam);
    ck.state.optimizer.restore(meta.at("adam_step").get<std::uint64_t>(), std::move(m), std::move(v));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return ck;
}

}  // namespace mcoco
