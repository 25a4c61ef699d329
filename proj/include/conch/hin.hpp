#pragma once

#include "conch/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace conch {

using NodeId = std::uint32_t;      // global node index, assigned in file order
using TypeId = std::uint32_t;
using RelationId = std::uint32_t;
using ObjectIndex = std::uint32_t;  // index of a target-type node among target nodes

inline constexpr int kUnlabeled = -1;

// A relation of the network schema: (src type, name, dst type).
struct Relation {
  std::string name;
  TypeId src_type = 0;
  TypeId dst_type = 0;
};

struct Edge {
  RelationId relation = 0;
  NodeId src = 0;
  NodeId dst = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Compressed adjacency between two node types, indexed by per-type local
// indices. Column lists are sorted ascending.
struct Adjacency {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> row_ptr;
  std::vector<std::uint32_t> col_idx;

  std::span<const std::uint32_t> neighbors(std::size_t r) const {
    return {col_idx.data() + row_ptr[r], row_ptr[r + 1] - row_ptr[r]};
  }
};

// Attributed heterogeneous information network. Immutable once built; edges
// are undirected and stored once, adjacency is expanded in both directions.
class Hin {
public:
  std::size_t num_nodes() const noexcept { return node_names_.size(); }
  std::size_t num_types() const noexcept { return type_names_.size(); }
  std::size_t num_relations() const noexcept { return relations_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }

  const std::string& node_name(NodeId n) const { return node_names_.at(n); }
  TypeId node_type(NodeId n) const { return node_types_.at(n); }
  std::uint32_t local_index(NodeId n) const { return local_index_.at(n); }
  std::optional<NodeId> find_node(std::string_view name) const;

  const std::vector<std::string>& type_names() const noexcept { return type_names_; }
  std::optional<TypeId> find_type(std::string_view name) const;
  const std::vector<NodeId>& nodes_of_type(TypeId t) const { return nodes_by_type_.at(t); }

  const std::vector<Relation>& relations() const noexcept { return relations_; }
  std::optional<RelationId> find_relation(std::string_view name) const;
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  // Adjacency of a relation traversed from `from_type` to the other endpoint
  // type. For relations within one type both directions coincide.
  const Adjacency& adjacency(RelationId r, TypeId from_type) const;

  TypeId target_type() const noexcept { return target_type_; }
  std::size_t num_objects() const { return nodes_by_type_.at(target_type_).size(); }
  NodeId object_node(ObjectIndex i) const { return nodes_by_type_.at(target_type_).at(i); }
  std::optional<ObjectIndex> find_object(std::string_view name) const;

  std::size_t num_classes() const noexcept { return label_names_.size(); }
  const std::vector<std::string>& label_names() const noexcept { return label_names_; }
  // Per object: label index or kUnlabeled.
  const std::vector<int>& labels() const noexcept { return labels_; }

  // Object features: loaded rows or the one-hot fallback.
  const Matrix& features() const noexcept { return features_; }
  bool has_feature_file() const noexcept { return has_feature_file_; }

private:
  friend class HinBuilder;

  std::vector<std::string> node_names_;
  std::vector<TypeId> node_types_;
  std::vector<std::uint32_t> local_index_;
  std::unordered_map<std::string, NodeId> node_lookup_;
  std::vector<std::string> type_names_;
  std::vector<std::vector<NodeId>> nodes_by_type_;
  std::vector<Relation> relations_;
  std::vector<Edge> edges_;
  std::vector<Adjacency> forward_;   // src type -> dst type
  std::vector<Adjacency> backward_;  // dst type -> src type
  TypeId target_type_ = 0;
  std::vector<std::string> label_names_;
  std::vector<int> labels_;
  Matrix features_;
  bool has_feature_file_ = false;
};

// Incremental construction with validation. Errors are thrown as conch::Error.
class HinBuilder {
public:
  NodeId add_node(const std::string& name, const std::string& type);
  // Returns false when the (undirected) edge was already present.
  bool add_edge(const std::string& relation, const std::string& src, const std::string& dst);
  void declare_label(const std::string& label);
  void set_label(const std::string& node, const std::string& label);
  void set_target_type(const std::string& type);
  void set_feature_row(const std::string& node, std::vector<double> values);

  Hin build() &&;

private:
  Hin hin_;
  std::unordered_map<std::string, TypeId> type_lookup_;
  std::unordered_map<std::string, RelationId> relation_lookup_;
  std::unordered_map<std::string, int> label_lookup_;
  std::vector<std::pair<NodeId, int>> node_labels_;
  std::vector<std::pair<NodeId, std::vector<double>>> feature_rows_;
  std::optional<std::string> target_type_;
  struct EdgeHash {
    std::size_t operator()(const Edge& e) const noexcept {
      return (std::size_t{e.relation} * 0x9E3779B97F4A7C15ull) ^ (std::size_t{e.src} << 21) ^ e.dst;
    }
  };
  std::unordered_map<Edge, char, EdgeHash> edge_set_;
};

struct HinFiles {
  std::filesystem::path nodes;
  std::filesystem::path edges;
  std::filesystem::path labels;
  std::optional<std::filesystem::path> features;
};

// Loads nodes/edges/labels/(features) TSV files. When `target_type` is empty
// the type of the first labeled node is used.
Hin load_hin(const HinFiles& files, const std::string& target_type = {});

// Writes the four TSV files into `dir` (features only when loaded from file).
HinFiles write_hin(const Hin& hin, const std::filesystem::path& dir);

// Train/validation/test partition over labeled objects.
struct Split {
  std::vector<ObjectIndex> train;
  std::vector<ObjectIndex> validation;
  std::vector<ObjectIndex> test;
};

Split load_split(const std::filesystem::path& split_file, const Hin& hin);
void write_split(const Split& split, const Hin& hin, const std::filesystem::path& file);

// n x n identity: row i is one-hot at column i.
Matrix one_hot_fallback_features(const Hin& hin);

// Reads a TSV file, skipping blank and '#' lines. The callback receives the
// tab-separated fields and the 1-based line number.
void for_each_tsv_row(const std::filesystem::path& file,
                      const std::function<void(const std::vector<std::string_view>&, std::size_t)>& fn);

std::vector<double> parse_csv_doubles(std::string_view text, const std::string& file, std::size_t line);

}  // namespace conch
