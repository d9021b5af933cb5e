#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "divpref/features.hpp"
#include "divpref/model.hpp"

namespace divpref::model {

// Checkpoints are a single JSON object:
//   {"kind": str, "d": int, "h": int, "o": int, "seed": int,
//    "W1": [[...], ...], "b1": [...], "W2": [[...], ...], "b2": [...],
//    "feature_config": {...}, "train_config_hash": str}
// Weight matrices are row-major nested arrays. Reals are written with
// shortest round-trip decimals, so save followed by load is lossless.
struct Checkpoint {
  HeadParameters head;
  features::FeatureConfig feature_config;
  uint64_t seed = 0;
  std::string train_config_hash;
};

std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace divpref::model
