#include "conch/config.hpp"

#include "conch/error.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace conch {

using nlohmann::json;
using nlohmann::ordered_json;

void RunConfig::validate() const {
  if (nodes.empty() || edges.empty() || labels.empty()) throw Error("config: nodes, edges and labels are required");
  if (split.empty()) throw Error("config: split is required");
  if (metapaths.empty()) throw Error("config: at least one meta-path is required");
  for (const auto& mp : metapaths) {
    if (mp.name.empty()) throw Error("config: meta-path without name");
  }
  model.validate();
  if (embedding_dim < 1) throw Error("config: embedding_dim must be >= 1");
  if (optimizer.learning_rate <= 0.0) throw Error("config: learning rate must be positive");
  if (max_epochs < 1) throw Error("config: max_epochs must be >= 1");
  if (patience < 1) throw Error("config: patience must be >= 1");
}

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute()) return path;
  return std::filesystem::absolute(base / path).lexically_normal();
}

}  // namespace

RunConfig run_config_from_json(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    c.nodes = resolve(base_dir, j.at("nodes").get<std::string>());
    c.edges = resolve(base_dir, j.at("edges").get<std::string>());
    c.labels = resolve(base_dir, j.at("labels").get<std::string>());
    c.split = resolve(base_dir, j.at("split").get<std::string>());
    if (j.contains("features") && !j["features"].is_null()) {
      c.features = resolve(base_dir, j["features"].get<std::string>());
    }
    if (j.contains("embeddings") && !j["embeddings"].is_null()) {
      c.embeddings = resolve(base_dir, j["embeddings"].get<std::string>());
    }
    read_opt(j, "target_type", c.target_type);
    for (const auto& m : j.at("metapaths")) {
      MetaPathSpec spec;
      if (m.is_string()) {
        spec.name = m.get<std::string>();
      } else {
        spec.name = m.at("name").get<std::string>();
        read_opt(m, "types", spec.types);
        read_opt(m, "relations", spec.relations);
      }
      c.metapaths.push_back(std::move(spec));
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      read_opt(m, "layers", c.model.layers);
      read_opt(m, "dim", c.model.dim);
      read_opt(m, "hidden_dim", c.model.hidden_dim);
      read_opt(m, "attention_dim", c.model.attention_dim);
      read_opt(m, "dropout", c.model.dropout);
      read_opt(m, "leaky_slope", c.model.leaky_slope);
      read_opt(m, "lambda", c.model.lambda);
      read_opt(m, "weight_decay", c.model.weight_decay);
      read_opt(m, "k", c.model.k);
      read_opt(m, "random_neighbors", c.model.random_neighbors);
      read_opt(m, "supervised_only", c.model.supervised_only);
    }
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      read_opt(o, "learning_rate", c.optimizer.learning_rate);
      read_opt(o, "beta1", c.optimizer.beta1);
      read_opt(o, "beta2", c.optimizer.beta2);
      read_opt(o, "epsilon", c.optimizer.epsilon);
    }
    read_opt(j, "embedding_dim", c.embedding_dim);
    read_opt(j, "embedding_seed", c.embedding_seed);
    read_opt(j, "seed", c.seed);
    read_opt(j, "max_epochs", c.max_epochs);
    read_opt(j, "patience", c.patience);
    read_opt(j, "threads", c.threads);
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
    else c.output_dir = resolve(base_dir, "run");
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open config '" + file.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str(), std::filesystem::absolute(file).parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["nodes"] = c.nodes.string();
  j["edges"] = c.edges.string();
  j["labels"] = c.labels.string();
  j["features"] = c.features ? json(c.features->string()) : json(nullptr);
  j["embeddings"] = c.embeddings ? json(c.embeddings->string()) : json(nullptr);
  j["split"] = c.split.string();
  j["target_type"] = c.target_type;
  j["metapaths"] = ordered_json::array();
  for (const auto& mp : c.metapaths) {
    j["metapaths"].push_back({{"name", mp.name}, {"types", mp.types}, {"relations", mp.relations}});
  }
  j["model"] = {{"layers", c.model.layers},
                {"dim", c.model.dim},
                {"hidden_dim", c.model.hidden_dim},
                {"attention_dim", c.model.attention_dim},
                {"dropout", c.model.dropout},
                {"leaky_slope", c.model.leaky_slope},
                {"lambda", c.model.lambda},
                {"weight_decay", c.model.weight_decay},
                {"k", c.model.k},
                {"random_neighbors", c.model.random_neighbors},
                {"supervised_only", c.model.supervised_only}};
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  j["embedding_dim"] = c.embedding_dim;
  j["embedding_seed"] = c.embedding_seed;
  j["seed"] = c.seed;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir.string();
  return j.dump(2);
}

}  // namespace conch
