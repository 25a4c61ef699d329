#pragma once

#include "conch/model.hpp"
#include "conch/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace conch {

struct MetaPathSpec {
  std::string name;
  std::vector<std::string> types;      // empty: derive from the name's letters
  std::vector<std::string> relations;  // empty: infer from the schema
};

// Everything a run needs. Relative paths in a config file are resolved
// against the file's directory.
struct RunConfig {
  std::filesystem::path nodes;
  std::filesystem::path edges;
  std::filesystem::path labels;
  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> embeddings;
  std::filesystem::path split;
  std::string target_type;
  std::vector<MetaPathSpec> metapaths;

  ModelConfig model;
  ad::AdamConfig optimizer;
  std::size_t embedding_dim = 128;  // structural fallback only
  std::uint64_t embedding_seed = 1;
  std::uint64_t seed = 0;
  std::size_t max_epochs = 1000;
  std::size_t patience = 100;
  unsigned threads = 0;  // preprocessing workers, 0 = hardware concurrency
  std::filesystem::path output_dir = "run";

  void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& file);
RunConfig run_config_from_json(const std::string& json_text, const std::filesystem::path& base_dir);
// Canonical JSON form with absolute paths.
std::string run_config_to_json(const RunConfig& config);

}  // namespace conch
