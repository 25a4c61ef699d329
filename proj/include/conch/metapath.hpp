#pragma once

#include "conch/hin.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace conch {

// Alternating sequence of node types and relations, starting and ending at
// the target type.
struct MetaPath {
  std::string name;
  std::vector<TypeId> types;          // length() + 1 entries
  std::vector<RelationId> relations;  // length() entries

  std::size_t length() const noexcept { return relations.size(); }
};

// True when the type and relation sequences read the same reversed. Such
// meta-paths have symmetric counts; PathSim is bounded by 1 when the length
// is also even (a round trip P P^-1).
bool is_symmetric(const MetaPath& mp);

// Resolves a meta-path against the schema. `type_names` may be empty, in
// which case each character of `name` must be the unique initial of a type
// name (case-insensitive). Empty `relation_names` are inferred when exactly
// one schema relation joins two consecutive types.
MetaPath resolve_metapath(const Hin& hin, const std::string& name, const std::vector<std::string>& type_names = {},
                          const std::vector<std::string>& relation_names = {});

// Sparse n x n matrix of path-instance counts between objects (CSR, columns
// sorted within each row).
class CountMatrix {
public:
  CountMatrix() = default;
  CountMatrix(std::size_t n, std::vector<std::uint32_t> row_ptr, std::vector<std::uint32_t> cols,
              std::vector<std::uint64_t> values);

  std::size_t size() const noexcept { return n_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  std::uint64_t at(ObjectIndex u, ObjectIndex v) const;
  std::uint64_t diagonal(ObjectIndex u) const { return diag_[u]; }

  std::span<const std::uint32_t> row_cols(ObjectIndex u) const {
    return {cols_.data() + row_ptr_[u], row_ptr_[u + 1] - row_ptr_[u]};
  }
  std::span<const std::uint64_t> row_values(ObjectIndex u) const {
    return {values_.data() + row_ptr_[u], row_ptr_[u + 1] - row_ptr_[u]};
  }

private:
  std::size_t n_ = 0;
  std::vector<std::uint32_t> row_ptr_{0};
  std::vector<std::uint32_t> cols_;
  std::vector<std::uint64_t> values_;
  std::vector<std::uint64_t> diag_;
};

// Commuting-matrix product of the bipartite adjacencies along `mp`.
CountMatrix count_paths(const Hin& hin, const MetaPath& mp);

struct PathInstance {
  std::vector<NodeId> nodes;

  friend bool operator==(const PathInstance&, const PathInstance&) = default;
};

// All instances of `mp` from object u to object v, in lexicographic order of
// the intermediate nodes' per-type indices.
std::vector<PathInstance> enumerate_instances(const Hin& hin, const MetaPath& mp, ObjectIndex u, ObjectIndex v);

// 2 c(u,v) / (c(u,u) + c(v,v)); 0 when the denominator is 0.
double pathsim(const CountMatrix& cm, ObjectIndex u, ObjectIndex v);

enum class NeighborMode { PathSim, Random };

struct Neighbor {
  ObjectIndex node = 0;
  double score = 0.0;
  std::uint64_t count = 0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Per object, at most k related objects ordered by score descending (ties by
// index ascending); an object never lists itself.
struct NeighborIndex {
  std::string metapath;
  std::size_t k = 0;
  std::vector<std::vector<Neighbor>> rows;

  friend bool operator==(const NeighborIndex&, const NeighborIndex&) = default;
};

// `threads` = 0 uses the hardware concurrency. Output does not depend on it.
NeighborIndex top_k_neighbors(const CountMatrix& cm, std::size_t k, NeighborMode mode, std::uint64_t seed,
                              unsigned threads = 1);

void write_neighbor_index(const NeighborIndex& index, const Hin& hin, const std::filesystem::path& file);
NeighborIndex read_neighbor_index(const std::filesystem::path& file, const Hin& hin, const std::string& metapath,
                                  std::size_t k);

}  // namespace conch
