#pragma once

// Corpus -> seven datasets -> seven trained heads.

#include <filesystem>
#include <future>
#include <optional>
#include <vector>

#include "voxworld/corpus.hpp"
#include "voxworld/dataset.hpp"
#include "voxworld/model.hpp"

namespace voxworld {

struct TrainingRun {
  HeadSet heads;
  std::vector<DatasetBundle> bundles;  // head-table order
};

/// Builds every head's bundle, then trains the heads concurrently. Heads are
/// independent, so the result does not depend on scheduling.
inline TrainingRun train_all(const Corpus& corpus, const TrainConfig& cfg) {
  TrainingRun run;
  run.heads.feature_hash = config_hash(corpus.config());
  for (const auto& spec : kHeadTable) run.bundles.push_back(build_dataset(corpus, spec));
  const std::size_t width = corpus.config().grid_width();
  std::vector<std::future<TrainedHead>> jobs;
  for (const auto& b : run.bundles) {
    jobs.push_back(std::async(std::launch::async, [&b, &cfg, width] { return train_head(b, cfg, width); }));
  }
  for (auto& j : jobs) run.heads.heads.push_back(j.get());
  return run;
}

inline void export_all(const TrainingRun& run, const std::filesystem::path& datasets_root) {
  for (const auto& b : run.bundles) export_bundle(b, datasets_root / std::string(b.head.name));
}

}  // namespace voxworld
