#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "temp_dir.hpp"

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Runs the mcoco binary with `args`; returns its exit status.
int mcoco(const std::string& args) {
  const std::string cmd = std::string(MCOCO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<nlohmann::json> read_trace(const std::filesystem::path& p) {
  std::vector<nlohmann::json> out;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

/// Dataset plus config in `dir`; returns the config path.
std::string setup(const TempDir& dir, const std::string& synth_flags = "") {
  EXPECT_EQ(mcoco("synth --seed 5 --n 90 --view-dims 6,8 --out " + (dir / "data").string() + " " + synth_flags), 0);
  std::ofstream(dir / "cfg.txt") << "dataset = " << (dir / "data").string() << "\n"
                                 << "k = 3\nlatent_dim = 3\nhidden_widths = 12\nsemantic_hidden = 6\n"
                                 << "batch_size = 32\npretrain_epochs = 4\ntrain_epochs = 3\nseed = 9\n";
  return (dir / "cfg.txt").string();
}

}  // namespace

TEST(Cli, SynthIsDeterministic) {
  TempDir dir;
  ASSERT_EQ(mcoco("synth --seed 3 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(mcoco("--seed 3 synth --out " + (dir / "b").string()), 0);
  for (std::string f : {"manifest.json", "view_0.bin", "view_1.bin", "labels.bin"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(Cli, UsageErrorsExitOne) {
  TempDir dir;
  EXPECT_EQ(mcoco(""), 1);
  EXPECT_EQ(mcoco("frobnicate"), 1);
  EXPECT_EQ(mcoco("synth --views 1 --out " + (dir / "x").string()), 1);
  EXPECT_EQ(mcoco("synth --n abc --out " + (dir / "x").string()), 1);
  EXPECT_EQ(mcoco("train --out " + (dir / "x").string()), 1);
  std::ofstream(dir / "bad.txt") << "k = 3\ntau = -2\n";
  EXPECT_EQ(mcoco("--config " + (dir / "bad.txt").string() + " train --out " + (dir / "x").string()), 1);
  EXPECT_EQ(mcoco("--help"), 0);
}

TEST(Cli, TrainEvalProjectRoundTrip) {
  TempDir dir;
  const auto cfg = setup(dir);
  const auto run = dir / "run";
  ASSERT_EQ(mcoco("train --config " + cfg + " --out " + run.string()), 0);
  for (std::string f : {"model.ckpt", "trace.ndjson", "metrics.json", "config.txt", "pretrain.json"}) {
    EXPECT_TRUE(std::filesystem::exists(run / f)) << f;
  }
  const auto trace = read_trace(run / "trace.ndjson");
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_EQ(trace.back()["epoch"], 3);
  EXPECT_EQ(trace.back()["seed"], 9);

  // Final trace metrics, metrics.json and a fresh eval agree exactly.
  const auto final_metrics = nlohmann::json::parse(slurp(run / "metrics.json"));
  EXPECT_EQ(final_metrics, trace.back()["metrics"]);
  ASSERT_EQ(mcoco("eval --checkpoint " + (run / "model.ckpt").string() + " --dataset " + (dir / "data").string() +
                  " --out " + (dir / "ev").string()),
            0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "ev" / "metrics.json")), final_metrics);
  std::istringstream labels(slurp(dir / "ev" / "labels.txt"));
  EXPECT_EQ(std::distance(std::istream_iterator<std::string>(labels), std::istream_iterator<std::string>()), 90);

  ASSERT_EQ(mcoco("project --checkpoint " + (run / "model.ckpt").string() + " --dataset " +
                  (dir / "data").string() + " --view 1 --out " + (dir / "pj").string()),
            0);
  const auto csv = slurp(dir / "pj" / "projection.csv");
  EXPECT_EQ(csv.rfind("x,y,fused_label,true_label\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 91);
  EXPECT_EQ(mcoco("project --checkpoint " + (run / "model.ckpt").string() + " --dataset " +
                  (dir / "data").string() + " --view 2 --out " + (dir / "pj2").string()),
            1);
}

TEST(Cli, TrainingIsReproducibleExceptWallClock) {
  TempDir dir;
  const auto cfg = setup(dir);
  ASSERT_EQ(mcoco("--config " + cfg + " train --out " + (dir / "a").string()), 0);
  ASSERT_EQ(mcoco("train --config " + cfg + " --out " + (dir / "b").string()), 0);
  auto a = read_trace(dir / "a" / "trace.ndjson");
  auto b = read_trace(dir / "b" / "trace.ndjson");
  for (auto& r : a) r.erase("wall_seconds");
  for (auto& r : b) r.erase("wall_seconds");
  EXPECT_EQ(a, b);
  // Checkpoints embed their own out_dir, so compare what they predict.
  for (std::string run : {"a", "b"}) {
    ASSERT_EQ(mcoco("eval --checkpoint " + (dir / run / "model.ckpt").string() + " --dataset " +
                    (dir / "data").string() + " --out " + (dir / (run + "_ev")).string()),
              0);
  }
  EXPECT_EQ(slurp(dir / "a_ev" / "labels.txt"), slurp(dir / "b_ev" / "labels.txt"));
}

TEST(Cli, NoSemanticAblationLogsZero) {
  TempDir dir;
  const auto cfg = setup(dir);
  ASSERT_EQ(mcoco("train --config " + cfg + " --ablation no-se --out " + (dir / "r").string()), 0);
  for (const auto& r : read_trace(dir / "r" / "trace.ndjson")) EXPECT_EQ(r["loss"]["semantic"], 0.0);
  EXPECT_EQ(mcoco("train --config " + cfg + " --ablation sideways --out " + (dir / "s").string()), 1);
}

TEST(Cli, UnlabeledDatasetGivesNullMetrics) {
  TempDir dir;
  const auto cfg = setup(dir, "--unlabeled");
  ASSERT_EQ(mcoco("train --config " + cfg + " --out " + (dir / "r").string()), 0);
  EXPECT_FALSE(std::filesystem::exists(dir / "r" / "metrics.json"));
  for (const auto& r : read_trace(dir / "r" / "trace.ndjson")) EXPECT_TRUE(r["metrics"].is_null());
  ASSERT_EQ(mcoco("eval --checkpoint " + (dir / "r" / "model.ckpt").string() + " --dataset " +
                  (dir / "data").string() + " --out " + (dir / "ev").string()),
            0);
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir / "ev" / "metrics.json"))["acc"].is_null());
  const auto csv_status = mcoco("project --checkpoint " + (dir / "r" / "model.ckpt").string() + " --dataset " +
                                (dir / "data").string() + " --out " + (dir / "pj").string());
  EXPECT_EQ(csv_status, 0);
}

TEST(Cli, DimensionConflictWritesNothing) {
  TempDir dir;
  const auto cfg = setup(dir);
  ASSERT_EQ(mcoco("train --config " + cfg + " --out " + (dir / "r").string()), 0);
  ASSERT_EQ(mcoco("synth --seed 1 --view-dims 6,9 --out " + (dir / "other").string()), 0);
  ASSERT_EQ(mcoco("synth --seed 1 --views 3 --out " + (dir / "three").string()), 0);
  const auto ckpt = (dir / "r" / "model.ckpt").string();
  EXPECT_EQ(mcoco("eval --checkpoint " + ckpt + " --dataset " + (dir / "other").string() + " --out " +
                  (dir / "ev").string()),
            2);
  EXPECT_EQ(mcoco("eval --checkpoint " + ckpt + " --dataset " + (dir / "three").string() + " --out " +
                  (dir / "ev").string()),
            2);
  EXPECT_EQ(mcoco("project --checkpoint " + ckpt + " --dataset " + (dir / "other").string() + " --out " +
                  (dir / "ev").string()),
            2);
  EXPECT_FALSE(std::filesystem::exists(dir / "ev"));
  EXPECT_EQ(mcoco("eval --checkpoint " + (dir / "nope.ckpt").string() + " --dataset " + (dir / "data").string() +
                  " --out " + (dir / "ev").string()),
            2);
}

TEST(Cli, InputDirectoryIsNotModified) {
  TempDir dir;
  const auto cfg = setup(dir);
  std::vector<std::string> before;
  for (const auto& e : std::filesystem::directory_iterator(dir / "data")) before.push_back(slurp(e.path()));
  ASSERT_EQ(mcoco("train --config " + cfg + " --out " + (dir / "r").string()), 0);
  std::vector<std::string> after;
  for (const auto& e : std::filesystem::directory_iterator(dir / "data")) after.push_back(slurp(e.path()));
  EXPECT_EQ(before, after);
}
