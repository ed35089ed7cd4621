// mcoco command-line tool: synth, train, eval, project.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error
// (I/O, malformed files, dimension conflicts, divergence).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcoco/checkpoint.hpp"
#include "mcoco/config.hpp"
#include "mcoco/data.hpp"
#include "mcoco/projection.hpp"
#include "mcoco/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Bad flags, bad config values or an invalid request; exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

// ---------------------------------------------------------------------------
// Output helpers

json metrics_json(const std::optional<mcoco::MetricsReport>& m) {
  json j;
  j["acc"] = m ? json(m->acc) : json(nullptr);
  j["nmi"] = m ? json(m->nmi) : json(nullptr);
  j["rand_index"] = m ? json(m->rand_index) : json(nullptr);
  j["fscore"] = m ? json(m->fscore) : json(nullptr);
  return j;
}

json epoch_json(const mcoco::EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["loss"] = {{"total", r.loss.total},
               {"reconstruction", r.loss.reconstruction},
               {"semantic", r.loss.semantic},
               {"multilevel", r.loss.multilevel},
               {"lambda1", r.loss.lambda1},
               {"lambda2", r.loss.lambda2},
               {"tau", r.loss.tau}};
  j["metrics"] = r.metrics ? metrics_json(r.metrics) : json(nullptr);
  j["wall_seconds"] = r.wall_seconds;
  j["seed"] = r.seed;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw mcoco::Error("cannot write " + path.string());
}

fs::path require_out(const GlobalOptions& g, const std::string& fallback = {}) {
  const std::string dir = g.out.empty() ? fallback : g.out;
  if (dir.empty()) throw UsageError("--out DIR is required");
  return dir;
}

mcoco::RunConfig load_config(const std::string& path) {
  if (path.empty()) throw UsageError("--config PATH is required");
  std::string text;
  try {
    text = mcoco::io::read_text_file(path);
  } catch (const mcoco::Error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  try {
    return mcoco::parse_run_config(text);
  } catch (const mcoco::InvalidArgument& e) {
    throw UsageError(path + ": " + e.what());
  }
}

mcoco::MultiViewDataset prepare_dataset(const std::string& dir, bool normalize) {
  auto ds = mcoco::load_dataset(dir);
  return normalize ? mcoco::normalize_views(ds) : ds;
}

/// Throws a runtime error naming the first dimension the checkpoint and the
/// dataset disagree on.
void check_compatible(const mcoco::Architecture& arch, const mcoco::MultiViewDataset& ds) {
  if (ds.n_views() != arch.n_views()) {
    throw mcoco::Error("dataset has " + std::to_string(ds.n_views()) + " views but the checkpoint was trained on " +
                       std::to_string(arch.n_views()));
  }
  for (std::size_t v = 0; v < arch.n_views(); ++v) {
    if (ds.view_dim(v) != arch.view_dims[v]) {
      throw mcoco::Error("view " + std::to_string(v) + " has D=" + std::to_string(ds.view_dim(v)) +
                         " but the checkpoint expects D=" + std::to_string(arch.view_dims[v]));
    }
  }
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::size_t n = 300;
  std::size_t k = 3;
  std::size_t views = 2;
  std::size_t latent_dim = 4;
  std::vector<std::size_t> view_dims;
  std::vector<double> noise;
  double separation = 6.0;
  bool unlabeled = false;
};

int run_synth(const GlobalOptions& g, const SynthOptions& o) {
  mcoco::SynthSpec spec;
  spec.n_samples = o.n;
  spec.n_clusters = o.k;
  spec.n_views = o.views;
  spec.latent_dim = o.latent_dim;
  spec.view_dims = o.view_dims.empty() ? std::vector<std::size_t>(o.views, 20) : o.view_dims;
  spec.noise_sigmas = o.noise.empty() ? std::vector<double>(o.views, 0.05) : o.noise;
  spec.cluster_separation = o.separation;
  spec.seed = g.seed.value_or(0);
  const auto out = require_out(g);
  try {
    spec.validate();
  } catch (const mcoco::InvalidArgument& e) {
    throw UsageError(std::string("synth: ") + e.what());
  }
  auto ds = mcoco::generate_synthetic(spec);
  if (o.unlabeled) {
    ds.labels.reset();
    ds.k_hint.reset();
  }
  mcoco::save_dataset(ds, out);
  std::cout << "wrote " << out.string() << ": N=" << ds.n_samples() << " views=" << ds.n_views() << " dims=";
  for (std::size_t v = 0; v < ds.n_views(); ++v) std::cout << (v ? "," : "") << ds.view_dim(v);
  std::cout << " k=" << spec.n_clusters << " labels=" << (ds.labels ? "yes" : "no") << " seed=" << spec.seed << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string dataset;
  std::string ablation = "none";
  std::optional<std::size_t> epochs;
};

int run_train(const GlobalOptions& g, const TrainOptions& o) {
  auto run = load_config(g.config);
  if (!o.dataset.empty()) run.dataset = o.dataset;
  if (g.seed) run.training.seed = *g.seed;
  if (o.epochs) run.training.train_epochs = *o.epochs;
  if (o.ablation == "no-se") {
    run.training.ablation.use_semantic = false;
  } else if (o.ablation == "no-ml") {
    run.training.ablation.use_multilevel_semantic = false;
  } else if (o.ablation != "none") {
    throw UsageError("--ablation must be none, no-se or no-ml");
  }
  if (run.dataset.empty()) throw UsageError("no dataset: set `dataset` in the config or pass --dataset");
  const auto out = require_out(g, run.out_dir);
  run.out_dir = out.string();

  const auto ds = prepare_dataset(run.dataset, run.normalize);
  fs::create_directories(out);
  write_text(out / "config.txt", mcoco::format_run_config(run));

  std::ofstream trace(out / "trace.ndjson", std::ios::trunc);
  if (!trace) throw mcoco::Error("cannot write " + (out / "trace.ndjson").string());
  mcoco::TrainingTrace history;
  try {
    auto state = mcoco::initialize(ds, run.training, history);
    {
      json pre = json::array();
      for (double l : history.pretrain_reconstruction) pre.push_back(l);
      write_text(out / "pretrain.json", json{{"reconstruction", pre}}.dump(2) + "\n");
    }
    mcoco::train_epochs(state, ds, run.training, run.training.train_epochs, history,
                        [&](const mcoco::EpochRecord& r) {
                          trace << epoch_json(r).dump() << '\n';
                          trace.flush();
                          std::cerr << "epoch " << r.epoch << " loss " << r.loss.total;
                          if (r.metrics) std::cerr << " acc " << r.metrics->acc << " nmi " << r.metrics->nmi;
                          std::cerr << '\n';
                        });
    mcoco::save_checkpoint(out / "model.ckpt", state, run);
    const auto final_metrics = mcoco::evaluate(state.params, state.centroids, ds, run.training.nmi_normalization);
    if (final_metrics) write_text(out / "metrics.json", metrics_json(final_metrics).dump(2) + "\n");
    if (final_metrics) {
      std::cout << "acc " << final_metrics->acc << " nmi " << final_metrics->nmi << " ri " << final_metrics->rand_index
                << " f " << final_metrics->fscore << '\n';
    }
  } catch (const mcoco::DivergenceError& e) {
    trace.flush();
    std::cerr << "mcoco: " << e.what() << "; partial trace kept in " << (out / "trace.ndjson").string() << '\n';
    return 2;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string checkpoint;
  std::string dataset;
};

int run_eval(const GlobalOptions& g, const EvalOptions& o) {
  const auto out = require_out(g);
  const auto ck = mcoco::load_checkpoint(o.checkpoint);
  const auto ds = prepare_dataset(o.dataset, ck.config.normalize);
  check_compatible(ck.state.params.arch, ds);
  const auto result = mcoco::predict(ck.state.params, ck.state.centroids, ds);
  const auto metrics = mcoco::evaluate(ck.state.params, ck.state.centroids, ds, ck.config.training.nmi_normalization);

  std::ostringstream labels;
  for (auto l : result.fused_labels) labels << l << '\n';
  fs::create_directories(out);
  write_text(out / "metrics.json", metrics_json(metrics).dump(2) + "\n");
  write_text(out / "labels.txt", labels.str());
  if (metrics) {
    std::cout << "acc " << metrics->acc << " nmi " << metrics->nmi << " ri " << metrics->rand_index << " f "
              << metrics->fscore << '\n';
  } else {
    std::cout << "dataset has no labels; wrote fused labels only\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// project

struct ProjectOptions {
  std::string checkpoint;
  std::string dataset;
  std::size_t view = 0;
  std::string method = "pca";
  double perplexity = 30.0;
  int iterations = 500;
};

int run_project(const GlobalOptions& g, const ProjectOptions& o) {
  const auto out = require_out(g);
  if (o.method != "pca" && o.method != "tsne") throw UsageError("--method must be pca or tsne");
  const auto ck = mcoco::load_checkpoint(o.checkpoint);
  const auto& arch = ck.state.params.arch;
  if (o.view >= arch.n_views()) {
    throw UsageError("--view " + std::to_string(o.view) + " out of range (model has " +
                     std::to_string(arch.n_views()) + " views)");
  }
  const auto ds = prepare_dataset(o.dataset, ck.config.normalize);
  check_compatible(arch, ds);
  const auto z = mcoco::encode(ck.state.params, o.view, mcoco::to_matrix(ds.views[o.view]));
  const auto fused = mcoco::predict(ck.state.params, ck.state.centroids, ds).fused_labels;

  mcoco::Matrix xy;
  if (o.method == "pca") {
    xy = mcoco::pca_2d(z);
  } else {
    mcoco::TsneOptions t;
    t.perplexity = o.perplexity;
    t.iterations = o.iterations;
    t.seed = g.seed.value_or(0);
    xy = mcoco::tsne_2d(z, t);
  }

  std::ostringstream csv;
  csv << (ds.labels ? "x,y,fused_label,true_label\n" : "x,y,fused_label\n");
  char buf[64];
  for (Eigen::Index i = 0; i < xy.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", xy(i, 0), xy(i, 1));
    csv << buf << ',' << fused[static_cast<std::size_t>(i)];
    if (ds.labels) csv << ',' << (*ds.labels)[static_cast<std::size_t>(i)];
    csv << '\n';
  }
  fs::create_directories(out);
  write_text(out / "projection.csv", csv.str());
  std::cout << "wrote " << (out / "projection.csv").string() << " (" << xy.rows() << " rows, " << o.method << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mcoco: multi-view contrastive collaborative clustering"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config, "Run configuration file (key = value)");
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-view dataset");
  synth_cmd->add_option("--n", synth.n, "Number of samples")->capture_default_str();
  synth_cmd->add_option("--k", synth.k, "Number of clusters")->capture_default_str();
  synth_cmd->add_option("--views", synth.views, "Number of views")->capture_default_str();
  synth_cmd->add_option("--latent-dim", synth.latent_dim, "Shared latent dimension")->capture_default_str();
  synth_cmd->add_option("--view-dims", synth.view_dims, "Feature count per view (default 20 each)")->delimiter(',');
  synth_cmd->add_option("--noise", synth.noise, "Noise scale per view (default 0.05 each)")->delimiter(',');
  synth_cmd->add_option("--separation", synth.separation, "Distance between cluster means")->capture_default_str();
  synth_cmd->add_flag("--unlabeled", synth.unlabeled, "Do not write labels");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Pretrain and train a model from a config");
  train_cmd->add_option("--dataset", train.dataset, "Dataset directory (overrides the config)");
  train_cmd->add_option("--ablation", train.ablation, "none | no-se | no-ml")->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs, "Joint epochs (overrides the config)");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval.dataset, "Dataset directory")->required();

  ProjectOptions project;
  auto* project_cmd = app.add_subcommand("project", "Export a 2-D embedding of one view's latents");
  project_cmd->add_option("--checkpoint", project.checkpoint, "Checkpoint file")->required();
  project_cmd->add_option("--dataset", project.dataset, "Dataset directory")->required();
  project_cmd->add_option("--view", project.view, "View index")->capture_default_str();
  project_cmd->add_option("--method", project.method, "pca | tsne")->capture_default_str();
  project_cmd->add_option("--perplexity", project.perplexity, "t-SNE perplexity")->capture_default_str();
  project_cmd->add_option("--iterations", project.iterations, "t-SNE iterations")->capture_default_str();

  for (auto* cmd : {synth_cmd, train_cmd, eval_cmd, project_cmd}) cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (synth_cmd->parsed()) return run_synth(g, synth);
    if (train_cmd->parsed()) return run_train(g, train);
    if (eval_cmd->parsed()) return run_eval(g, eval);
    if (project_cmd->parsed()) return run_project(g, project);
  } catch (const UsageError& e) {
    std::cerr << "mcoco: " << e.what() << '\n';
    return 1;
  } catch (const mcoco::InvalidArgument& e) {
    // Settings that conflict with the data, e.g. k larger than N.
    std::cerr << "mcoco: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "mcoco: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
