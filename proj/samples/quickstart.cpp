// Generates a small two-view dataset, trains on it and prints the metrics of
// every joint epoch.

#include <cstdio>
#include <cstdlib>

#include "mcoco/mcoco.hpp"

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;

  mcoco::SynthSpec spec;
  spec.n_samples = 600;
  spec.n_clusters = 3;
  spec.seed = seed;
  const auto ds = mcoco::normalize_views(mcoco::generate_synthetic(spec));

  mcoco::TrainingConfig config;
  config.k = 3;
  config.hidden_widths = {64, 64, 128};
  config.semantic_hidden = {64};
  config.pretrain_epochs = 50;
  config.train_epochs = 100;
  config.seed = seed;

  const auto result = mcoco::fit(ds, config, [](const mcoco::EpochRecord& r) {
    std::printf("epoch %3zu  L=%10.4f  Re=%10.4f  Se=%8.4f  Ml=%9.4f", r.epoch, r.loss.total, r.loss.reconstruction,
                r.loss.semantic, r.loss.multilevel);
    if (r.metrics) std::printf("  acc=%.4f nmi=%.4f", r.metrics->acc, r.metrics->nmi);
    std::printf("  (%.2fs)\n", r.wall_seconds);
  });
  std::printf("pretrain L_Re first=%.4f last=%.4f\n", result.trace.pretrain_reconstruction.front(),
              result.trace.pretrain_reconstruction.back());
  return 0;
}
