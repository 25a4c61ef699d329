#include "conch/metapath.hpp"

#include "conch/error.hpp"
#include "conch/parallel.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>

namespace conch {

bool is_symmetric(const MetaPath& mp) {
  return std::equal(mp.types.begin(), mp.types.end(), mp.types.rbegin()) &&
         std::equal(mp.relations.begin(), mp.relations.end(), mp.relations.rbegin());
}

MetaPath resolve_metapath(const Hin& hin, const std::string& name, const std::vector<std::string>& type_names,
                          const std::vector<std::string>& relation_names) {
  MetaPath mp;
  mp.name = name;
  if (type_names.empty()) {
    for (char ch : name) {
      std::optional<TypeId> match;
      for (TypeId t = 0; t < hin.num_types(); ++t) {
        const std::string& tn = hin.type_names()[t];
        if (!tn.empty() && std::tolower(static_cast<unsigned char>(tn.front())) ==
                               std::tolower(static_cast<unsigned char>(ch))) {
          if (match) throw Error("meta-path '" + name + "': letter '" + ch + "' matches several node types");
          match = t;
        }
      }
      if (!match) throw Error("meta-path '" + name + "': letter '" + ch + "' matches no node type in schema");
      mp.types.push_back(*match);
    }
  } else {
    for (const auto& tn : type_names) {
      auto t = hin.find_type(tn);
      if (!t) throw Error("meta-path '" + name + "': type '" + tn + "' not in schema");
      mp.types.push_back(*t);
    }
  }
  if (mp.types.size() < 3) throw Error("meta-path '" + name + "' must have length >= 2");
  if (mp.types.front() != hin.target_type() || mp.types.back() != hin.target_type()) {
    throw Error("meta-path '" + name + "' must start and end at the target type '" +
                hin.type_names()[hin.target_type()] + "'");
  }
  const std::size_t len = mp.types.size() - 1;
  if (!relation_names.empty() && relation_names.size() != len) {
    throw Error("meta-path '" + name + "': expected " + std::to_string(len) + " relations");
  }
  auto joins = [&](RelationId r, TypeId a, TypeId b) {
    const Relation& rel = hin.relations()[r];
    return (rel.src_type == a && rel.dst_type == b) || (rel.src_type == b && rel.dst_type == a);
  };
  for (std::size_t i = 0; i < len; ++i) {
    const TypeId a = mp.types[i];
    const TypeId b = mp.types[i + 1];
    if (!relation_names.empty()) {
      auto r = hin.find_relation(relation_names[i]);
      if (!r) throw Error("meta-path '" + name + "': relation '" + relation_names[i] + "' not in schema");
      if (!joins(*r, a, b)) {
        throw Error("meta-path '" + name + "': relation '" + relation_names[i] + "' does not join " +
                    hin.type_names()[a] + " and " + hin.type_names()[b]);
      }
      mp.relations.push_back(*r);
      continue;
    }
    std::optional<RelationId> found;
    for (RelationId r = 0; r < hin.num_relations(); ++r) {
      if (!joins(r, a, b)) continue;
      if (found) {
        throw Error("meta-path '" + name + "': several relations join " + hin.type_names()[a] + " and " +
                    hin.type_names()[b] + "; list them explicitly");
      }
      found = r;
    }
    if (!found) {
      throw Error("meta-path '" + name + "': no relation joins " + hin.type_names()[a] + " and " +
                  hin.type_names()[b]);
    }
    mp.relations.push_back(*found);
  }
  return mp;
}

// ---------------------------------------------------------------------------

CountMatrix::CountMatrix(std::size_t n, std::vector<std::uint32_t> row_ptr, std::vector<std::uint32_t> cols,
                         std::vector<std::uint64_t> values)
    : n_(n), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)), values_(std::move(values)), diag_(n, 0) {
  if (row_ptr_.size() != n_ + 1 || cols_.size() != values_.size()) throw Error("malformed count matrix");
  for (ObjectIndex u = 0; u < n_; ++u) diag_[u] = at(u, u);
}

std::uint64_t CountMatrix::at(ObjectIndex u, ObjectIndex v) const {
  auto row = row_cols(u);
  auto it = std::lower_bound(row.begin(), row.end(), v);
  if (it == row.end() || *it != v) return 0;
  return values_[row_ptr_[u] + static_cast<std::size_t>(it - row.begin())];
}

namespace {

struct SparseCounts {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> row_ptr;
  std::vector<std::uint32_t> col_idx;
  std::vector<std::uint64_t> values;
};

SparseCounts from_adjacency(const Adjacency& adj) {
  SparseCounts s{adj.rows, adj.cols, adj.row_ptr, adj.col_idx, {}};
  s.values.assign(adj.col_idx.size(), 1);
  return s;
}

// Gustavson row-by-row product with a dense accumulator.
SparseCounts multiply(const SparseCounts& a, const Adjacency& b) {
  SparseCounts c;
  c.rows = a.rows;
  c.cols = b.cols;
  c.row_ptr.assign(a.rows + 1, 0);
  std::vector<std::uint64_t> acc(b.cols, 0);
  std::vector<char> touched(b.cols, 0);
  std::vector<std::uint32_t> touched_cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    touched_cols.clear();
    for (std::uint32_t p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) {
      const std::uint64_t av = a.values[p];
      for (std::uint32_t col : b.neighbors(a.col_idx[p])) {
        if (!touched[col]) {
          touched[col] = 1;
          touched_cols.push_back(col);
        }
        acc[col] += av;
      }
    }
    std::sort(touched_cols.begin(), touched_cols.end());
    for (std::uint32_t col : touched_cols) {
      c.col_idx.push_back(col);
      c.values.push_back(acc[col]);
      acc[col] = 0;
      touched[col] = 0;
    }
    c.row_ptr[i + 1] = static_cast<std::uint32_t>(c.col_idx.size());
  }
  return c;
}

}  // namespace

CountMatrix count_paths(const Hin& hin, const MetaPath& mp) {
  if (mp.relations.empty() || mp.types.size() != mp.relations.size() + 1) {
    throw Error("meta-path '" + mp.name + "' is malformed");
  }
  SparseCounts acc = from_adjacency(hin.adjacency(mp.relations[0], mp.types[0]));
  for (std::size_t i = 1; i < mp.relations.size(); ++i) {
    acc = multiply(acc, hin.adjacency(mp.relations[i], mp.types[i]));
  }
  return CountMatrix(acc.rows, std::move(acc.row_ptr), std::move(acc.col_idx), std::move(acc.values));
}

std::vector<PathInstance> enumerate_instances(const Hin& hin, const MetaPath& mp, ObjectIndex u, ObjectIndex v) {
  std::vector<PathInstance> out;
  const std::size_t len = mp.relations.size();
  std::vector<std::uint32_t> local(len + 1);
  local[0] = u;

  auto dfs = [&](auto&& self, std::size_t depth) -> void {
    if (depth == len) {
      if (local[len] != v) return;
      PathInstance p;
      p.nodes.reserve(len + 1);
      for (std::size_t i = 0; i <= len; ++i) p.nodes.push_back(hin.nodes_of_type(mp.types[i])[local[i]]);
      out.push_back(std::move(p));
      return;
    }
    const Adjacency& adj = hin.adjacency(mp.relations[depth], mp.types[depth]);
    for (std::uint32_t next : adj.neighbors(local[depth])) {
      local[depth + 1] = next;
      self(self, depth + 1);
    }
  };
  dfs(dfs, 0);
  return out;
}

double pathsim(const CountMatrix& cm, ObjectIndex u, ObjectIndex v) {
  const double denom = static_cast<double>(cm.diagonal(u)) + static_cast<double>(cm.diagonal(v));
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<double>(cm.at(u, v)) / denom;
}

NeighborIndex top_k_neighbors(const CountMatrix& cm, std::size_t k, NeighborMode mode, std::uint64_t seed,
                              unsigned threads) {
  if (k < 1) throw Error("k must be >= 1");
  NeighborIndex index;
  index.k = k;
  index.rows.resize(cm.size());
  auto better = [](const Neighbor& a, const Neighbor& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.node < b.node;
  };
  parallel_for(cm.size(), threads, [&](std::size_t x) {
    const auto u = static_cast<ObjectIndex>(x);
    std::vector<Neighbor> candidates;
    auto cols = cm.row_cols(u);
    auto vals = cm.row_values(u);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      if (cols[p] == u || vals[p] == 0) continue;
      candidates.push_back({cols[p], pathsim(cm, u, cols[p]), vals[p]});
    }
    if (mode == NeighborMode::Random && candidates.size() > k) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(u)};
      std::mt19937_64 rng(seq);
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
        std::swap(candidates[i], candidates[pick(rng)]);
      }
      candidates.resize(k);
    }
    const std::size_t keep = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);
    candidates.resize(keep);
    index.rows[x] = std::move(candidates);
  });
  return index;
}

void write_neighbor_index(const NeighborIndex& index, const Hin& hin, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write '" + file.string() + "'");
  for (ObjectIndex x = 0; x < index.rows.size(); ++x) {
    for (const Neighbor& nb : index.rows[x]) {
      out << hin.node_name(hin.object_node(x)) << '\t' << hin.node_name(hin.object_node(nb.node)) << '\t'
          << format_double(nb.score) << '\t' << nb.count << '\n';
    }
  }
}

NeighborIndex read_neighbor_index(const std::filesystem::path& file, const Hin& hin, const std::string& metapath,
                                  std::size_t k) {
  NeighborIndex index;
  index.metapath = metapath;
  index.k = k;
  index.rows.resize(hin.num_objects());
  const std::string name = file.string();
  for_each_tsv_row(file, [&](const auto& f, std::size_t line) {
    if (f.size() != 4) throw ParseError(name, line, "expected 4 fields");
    auto x = hin.find_object(f[0]);
    auto v = hin.find_object(f[1]);
    if (!x || !v) throw ParseError(name, line, "unknown node");
    Neighbor nb;
    nb.node = *v;
    nb.score = std::stod(std::string(f[2]));
    nb.count = std::stoull(std::string(f[3]));
    index.rows[*x].push_back(nb);
  });
  return index;
}

}  // namespace conch
