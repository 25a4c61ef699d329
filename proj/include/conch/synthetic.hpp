#pragma once

#include "conch/hin.hpp"

#include <cstdint>
#include <filesystem>

namespace conch {

// Planted-partition network. Target type "item" with `classes` x `per_class`
// labeled nodes. Auxiliary type "alpha" has `aux_per_class` nodes owned by
// each class; an item links to an alpha node of its own class with
// probability p_intra and to one of another class with probability `noise`,
// so meta-path P1 = item-alpha-item is homophilous. Auxiliary type "beta"
// has the same node count and links independently of class at the average
// alpha density, so P2 = item-beta-item carries no label signal. Items get
// Gaussian features around a random per-class centroid.
struct SyntheticParams {
  std::size_t classes = 4;
  std::size_t per_class = 50;
  double p_intra = 0.3;
  double noise = 0.02;
  std::size_t aux_per_class = 20;
  std::size_t feature_dim = 16;
  double feature_noise = 0.5;
  double train_fraction = 0.1;
  double val_fraction = 0.1;
  std::uint64_t seed = 7;
};

struct SyntheticDataset {
  Hin hin;
  Split split;
};

SyntheticDataset generate_synthetic(const SyntheticParams& params);

// Writes nodes/edges/labels/features/split TSVs plus a run.json that trains
// on meta-paths P1 and P2. Returns the path of run.json.
std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace conch
