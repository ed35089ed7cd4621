#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mcoco/error.hpp"
#include "mcoco/trainer.hpp"

namespace mcoco {

/// A training run as described by a flat `key = value` file.
///
/// Recognized keys (unknown keys are rejected):
///   dataset, out_dir, normalize,
///   k, latent_dim, hidden_widths, hidden_widths.<view>, semantic_hidden,
///   tau, lambda1, lambda2, learning_rate, adam_beta1, adam_beta2, adam_epsilon,
///   batch_size, pretrain_epochs, train_epochs, seed,
///   use_l_se, use_l_ml_semantic, full_dataset_targets, semantic_target_gradient,
///   kmeans_restarts, kmeans_max_iterations, kmeans_tolerance,
///   nmi_normalization (geometric | arithmetic)
/// Lists are comma separated; `#` starts a comment.
struct RunConfig {
  TrainingConfig training;
  std::string dataset;
  std::string out_dir;
  bool normalize = true;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline std::string where(std::size_t line, const std::string& key) {
  return "line " + std::to_string(line) + " (" + key + ")";
}

template <typename T>
T parse_unsigned(const std::string& value, const std::string& context) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw InvalidArgument(context + ": expected a non-negative integer, got '" + value + "'");
  return out;
}

inline double parse_double(const std::string& value, const std::string& context) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty() || !std::isfinite(out)) {
    throw InvalidArgument(context + ": expected a finite number, got '" + value + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& value, const std::string& context) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw InvalidArgument(context + ": expected true/false, got '" + value + "'");
}

inline std::vector<std::size_t> parse_widths(const std::string& value, const std::string& context) {
  std::vector<std::size_t> out;
  if (trim(value).empty()) return out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto w = parse_unsigned<std::size_t>(trim(item), context);
    if (w == 0) throw InvalidArgument(context + ": widths must be positive");
    out.push_back(w);
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_widths(const std::vector<std::size_t>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(widths[i]);
  }
  return out;
}

}  // namespace config_detail

inline RunConfig parse_run_config(std::string_view text) {
  using namespace config_detail;
  RunConfig cfg;
  auto& t = cfg.training;
  std::map<std::size_t, std::vector<std::size_t>> per_view_widths;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const auto line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto ctx = where(line_no, key);
    if (!seen.insert(key).second) throw InvalidArgument(ctx + ": duplicate key");

    if (key == "dataset") {
      cfg.dataset = value;
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "normalize") {
      cfg.normalize = parse_bool(value, ctx);
    } else if (key == "k") {
      t.k = parse_unsigned<std::size_t>(value, ctx);
    } else if (key == "latent_dim") {
      t.latent_dim = parse_unsigned<std::size_t>(value, ctx);
    } else if (key == "hidden_widths") {
      t.hidden_widths = parse_widths(value, ctx);
    } else if (key.rfind("hidden_widths.", 0) == 0) {
      const auto view = parse_unsigned<std::size_t>(key.substr(std::string("hidden_widths.").size()), ctx);
      per_view_widths[view] = parse_widths(value, ctx);
    } else if (key == "semantic_hidden") {
      t.semantic_hidden = parse_widths(value, ctx);
    } else if (key == "tau") {
      t.tau = parse_double(value, ctx);
    } else if (key == "lambda1") {
      t.lambda1 = parse_double(value, ctx);
    } else if (key == "lambda2") {
      t.lambda2 = parse_double(value, ctx);
    } else if (key == "learning_rate") {
      t.adam.learning_rate = parse_double(value, ctx);
    } else if (key == "adam_beta1") {
      t.adam.beta1 = parse_double(value, ctx);
    } else if (key == "adam_beta2") {
      t.adam.beta2 = parse_double(value, ctx);
    } else if (key == "adam_epsilon") {
      t.adam.epsilon = parse_double(value, ctx);
    } else if (key == "batch_size") {
      t.batch_size = parse_unsigned<std::size_t>(value, ctx);
    } else if (key == "pretrain_epochs") {
      t.pretrain_epochs = parse_unsigned<std::size_t>(value, ctx);
    } else if (key == "train_epochs") {
      t.train_epochs = parse_unsigned<std::size_t>(value, ctx);
    } else if (key == "seed") {
      t.seed = parse_unsigned<std::uint64_t>(value, ctx);
    } else if (key == "use_l_se") {
      t.ablation.use_semantic = parse_bool(value, ctx);
    } else if (key == "use_l_ml_semantic") {
      t.ablation.use_multilevel_semantic = parse_bool(value, ctx);
    } else if (key == "full_dataset_targets") {
      t.full_dataset_targets = parse_bool(value, ctx);
    } else if (key == "semantic_target_gradient") {
      t.semantic_target_gradient = parse_bool(value, ctx);
    } else if (key == "kmeans_restarts") {
      t.kmeans.restarts = parse_unsigned<int>(value, ctx);
    } else if (key == "kmeans_max_iterations") {
      t.kmeans.max_iterations = parse_unsigned<int>(value, ctx);
    } else if (key == "kmeans_tolerance") {
      t.kmeans.relative_tolerance = parse_double(value, ctx);
    } else if (key == "nmi_normalization") {
      if (value == "geometric") {
        t.nmi_normalization = NmiNormalization::Geometric;
      } else if (value == "arithmetic") {
        t.nmi_normalization = NmiNormalization::Arithmetic;
      } else {
        throw InvalidArgument(ctx + ": expected geometric or arithmetic, got '" + value + "'");
      }
    } else {
      throw InvalidArgument(ctx + ": unknown key");
    }
  }
  if (!per_view_widths.empty()) {
    const auto n_views = per_view_widths.rbegin()->first + 1;
    if (per_view_widths.size() != n_views) {
      throw InvalidArgument("hidden_widths.<view> keys must cover views 0.." + std::to_string(n_views - 1));
    }
    for (auto& [view, widths] : per_view_widths) t.view_hidden_widths.push_back(widths);
  }
  t.validate();
  return cfg;
}

inline std::string format_run_config(const RunConfig& cfg) {
  using namespace config_detail;
  const auto& t = cfg.training;
  std::ostringstream out;
  if (!cfg.dataset.empty()) out << "dataset = " << cfg.dataset << '\n';
  if (!cfg.out_dir.empty()) out << "out_dir = " << cfg.out_dir << '\n';
  out << "normalize = " << (cfg.normalize ? "true" : "false") << '\n';
  out << "k = " << t.k << '\n';
  out << "latent_dim = " << t.latent_dim << '\n';
  out << "hidden_widths = " << format_widths(t.hidden_widths) << '\n';
  for (std::size_t v = 0; v < t.view_hidden_widths.size(); ++v) {
    out << "hidden_widths." << v << " = " << format_widths(t.view_hidden_widths[v]) << '\n';
  }
  out << "semantic_hidden = " << format_widths(t.semantic_hidden) << '\n';
  out << "tau = " << format_double(t.tau) << '\n';
  out << "lambda1 = " << format_double(t.lambda1) << '\n';
  out << "lambda2 = " << format_double(t.lambda2) << '\n';
  out << "learning_rate = " << format_double(t.adam.learning_rate) << '\n';
  out << "adam_beta1 = " << format_double(t.adam.beta1) << '\n';
  out << "adam_beta2 = " << format_double(t.adam.beta2) << '\n';
  out << "adam_epsilon = " << format_double(t.adam.epsilon) << '\n';
  out << "batch_size = " << t.batch_size << '\n';
  out << "pretrain_epochs = " << t.pretrain_epochs << '\n';
  out << "train_epochs = " << t.train_epochs << '\n';
  out << "seed = " << t.seed << '\n';
  out << "use_l_se = " << (t.ablation.use_semantic ? "true" : "false") << '\n';
  out << "use_l_ml_semantic = " << (t.ablation.use_multilevel_semantic ? "true" : "false") << '\n';
  out << "full_dataset_targets = " << (t.full_dataset_targets ? "true" : "false") << '\n';
  out << "semantic_target_gradient = " << (t.semantic_target_gradient ? "true" : "false") << '\n';
  out << "kmeans_restarts = " << t.kmeans.restarts << '\n';
  out << "kmeans_max_iterations = " << t.kmeans.max_iterations << '\n';
  out << "kmeans_tolerance = " << format_double(t.kmeans.relative_tolerance) << '\n';
  out << "nmi_normalization = "
      << (t.nmi_normalization == NmiNormalization::Geometric ? "geometric" : "arithmetic") << '\n';
  return out.str();
}

}  // namespace mcoco
