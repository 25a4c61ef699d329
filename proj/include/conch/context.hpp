#pragma once

#include "conch/hin.hpp"
#include "conch/matrix.hpp"
#include "conch/metapath.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace conch {

// Initial node embeddings, one row per global node id. `covered` marks rows
// that were supplied (or generated); uncovered rows are zero.
struct InitialEmbeddings {
  Matrix values;
  std::vector<bool> covered;

  std::size_t dim() const noexcept { return values.cols(); }
  std::span<const double> of(NodeId n) const { return values.row(n); }
};

// Reads `node_id <TAB> v1,...,vd`. Every node whose type is in
// `required_types` must be present.
InitialEmbeddings load_embeddings(const std::filesystem::path& file, const Hin& hin,
                                  const std::vector<TypeId>& required_types);

// Seeded random projection of each node's per-relation degree profile
// (each relation column scaled by its maximum degree).
InitialEmbeddings structural_embeddings(const Hin& hin, std::size_t dim, std::uint64_t seed);

void write_embeddings(const InitialEmbeddings& emb, const Hin& hin, const std::filesystem::path& file);

// Mean of the embeddings of the nodes on one path instance.
std::vector<double> instance_embedding(const PathInstance& p, const InitialEmbeddings& emb);

// Mean of instance embeddings over a non-empty set of instances.
std::vector<double> context_feature(std::span<const PathInstance> instances, const InitialEmbeddings& emb);

// Bipartite object/context graph of one meta-path. Context j joins objects
// first[j] < second[j]; each context has exactly two incident edges.
struct ContextGraph {
  std::string metapath;
  std::size_t num_objects = 0;
  std::vector<ObjectIndex> first;
  std::vector<ObjectIndex> second;
  std::vector<std::uint64_t> instance_counts;
  Matrix features;  // one row per context

  std::size_t num_contexts() const noexcept { return first.size(); }
  std::vector<std::size_t> object_degrees() const;

  friend bool operator==(const ContextGraph&, const ContextGraph&) = default;
};

// Pairs come from the union of both endpoints' neighbor lists. Pairs are
// admitted in rounds (round r offers every object's r-th neighbor, objects
// in index order) while both endpoints have fewer than index.k contexts, so
// no object exceeds k incident contexts.
std::vector<std::pair<ObjectIndex, ObjectIndex>> select_context_pairs(const NeighborIndex& index);

// Builds contexts for the selected pairs; `mp` must be symmetric. Features are the mean over path
// instances u -> v (u < v) of the mean node embedding, accumulated by a
// per-source dynamic program instead of explicit enumeration.
ContextGraph build_context_graph(const Hin& hin, const MetaPath& mp, const NeighborIndex& index,
                                 const InitialEmbeddings& emb);

// Permutation of [0, n) drawn uniformly from a seeded generator.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// Returns a copy of `features` with rows shuffled by seeded_permutation.
Matrix corrupt_features(const Matrix& features, std::uint64_t seed);

void write_context_graph(const ContextGraph& graph, const Hin& hin, const std::filesystem::path& file);
ContextGraph read_context_graph(const std::filesystem::path& file, const Hin& hin, const std::string& metapath);

}  // namespace conch
