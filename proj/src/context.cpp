#include "conch/context.hpp"

#include "conch/error.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace conch {

InitialEmbeddings load_embeddings(const std::filesystem::path& file, const Hin& hin,
                                  const std::vector<TypeId>& required_types) {
  const std::string name = file.string();
  std::vector<std::pair<NodeId, std::vector<double>>> rows;
  std::size_t dim = 0;
  for_each_tsv_row(file, [&](const auto& f, std::size_t line) {
    if (f.size() != 2) throw ParseError(name, line, "expected 2 tab-separated fields");
    auto node = hin.find_node(f[0]);
    if (!node) throw ParseError(name, line, "unknown node '" + std::string(f[0]) + "'");
    auto values = parse_csv_doubles(f[1], name, line);
    if (rows.empty()) {
      dim = values.size();
    } else if (values.size() != dim) {
      throw ParseError(name, line, "dimension mismatch: " + std::to_string(values.size()) + " values, expected " +
                                       std::to_string(dim));
    }
    rows.emplace_back(*node, std::move(values));
  });
  if (rows.empty()) throw Error(name + ": no embeddings");

  InitialEmbeddings emb{Matrix(hin.num_nodes(), dim), std::vector<bool>(hin.num_nodes(), false)};
  for (auto& [node, values] : rows) {
    std::copy(values.begin(), values.end(), emb.values.row(node).begin());
    emb.covered[node] = true;
  }
  if (!emb.values.all_finite()) throw Error(name + ": non-finite embedding value");
  for (TypeId t : required_types) {
    for (NodeId n : hin.nodes_of_type(t)) {
      if (!emb.covered[n]) throw Error(name + ": missing embedding for node '" + hin.node_name(n) + "'");
    }
  }
  return emb;
}

InitialEmbeddings structural_embeddings(const Hin& hin, std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw Error("embedding dimension must be >= 1");
  const std::size_t nrel = hin.num_relations();
  Matrix profile(hin.num_nodes(), nrel);
  std::vector<double> col_max(nrel, 0.0);
  for (NodeId n = 0; n < hin.num_nodes(); ++n) {
    const TypeId t = hin.node_type(n);
    for (RelationId r = 0; r < nrel; ++r) {
      const Relation& rel = hin.relations()[r];
      if (rel.src_type != t && rel.dst_type != t) continue;
      const double deg = static_cast<double>(hin.adjacency(r, t).neighbors(hin.local_index(n)).size());
      profile(n, r) = deg;
      col_max[r] = std::max(col_max[r], deg);
    }
  }
  for (NodeId n = 0; n < hin.num_nodes(); ++n) {
    for (RelationId r = 0; r < nrel; ++r) {
      if (col_max[r] > 0.0) profile(n, r) /= col_max[r];
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix projection(nrel, dim);
  for (double& v : projection.data()) v = gauss(rng);
  return {matmul(profile, projection), std::vector<bool>(hin.num_nodes(), true)};
}

void write_embeddings(const InitialEmbeddings& emb, const Hin& hin, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write '" + file.string() + "'");
  for (NodeId n = 0; n < hin.num_nodes(); ++n) {
    if (!emb.covered[n]) continue;
    out << hin.node_name(n) << '\t';
    auto row = emb.of(n);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << format_double(row[j]);
    }
    out << '\n';
  }
}

std::vector<double> instance_embedding(const PathInstance& p, const InitialEmbeddings& emb) {
  std::vector<double> out(emb.dim(), 0.0);
  for (NodeId n : p.nodes) {
    auto row = emb.of(n);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += row[j];
  }
  for (double& v : out) v /= static_cast<double>(p.nodes.size());
  return out;
}

std::vector<double> context_feature(std::span<const PathInstance> instances, const InitialEmbeddings& emb) {
  if (instances.empty()) throw Error("context_feature: empty instance list");
  std::vector<double> out(emb.dim(), 0.0);
  for (const PathInstance& p : instances) {
    auto e = instance_embedding(p, emb);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += e[j];
  }
  for (double& v : out) v /= static_cast<double>(instances.size());
  return out;
}

std::vector<std::size_t> ContextGraph::object_degrees() const {
  std::vector<std::size_t> deg(num_objects, 0);
  for (std::size_t j = 0; j < first.size(); ++j) {
    ++deg[first[j]];
    ++deg[second[j]];
  }
  return deg;
}

std::vector<std::pair<ObjectIndex, ObjectIndex>> select_context_pairs(const NeighborIndex& index) {
  const std::size_t n = index.rows.size();
  std::vector<std::size_t> degree(n, 0);
  std::set<std::pair<ObjectIndex, ObjectIndex>> chosen;
  std::size_t rounds = 0;
  for (const auto& row : index.rows) rounds = std::max(rounds, row.size());
  for (std::size_t r = 0; r < rounds; ++r) {
    for (ObjectIndex x = 0; x < n; ++x) {
      if (r >= index.rows[x].size()) continue;
      const ObjectIndex v = index.rows[x][r].node;
      if (v == x) continue;
      const auto pair = std::minmax(x, v);
      if (chosen.contains(pair)) continue;
      if (degree[x] >= index.k || degree[v] >= index.k) continue;
      chosen.insert(pair);
      ++degree[x];
      ++degree[v];
    }
  }
  return {chosen.begin(), chosen.end()};
}

ContextGraph build_context_graph(const Hin& hin, const MetaPath& mp, const NeighborIndex& index,
                                 const InitialEmbeddings& emb) {
  if (!is_symmetric(mp)) throw Error("meta-path '" + mp.name + "' is not symmetric; contexts need u -> v = v -> u");
  ContextGraph graph;
  graph.metapath = mp.name;
  graph.num_objects = hin.num_objects();
  const auto pairs = select_context_pairs(index);
  const std::size_t d = emb.dim();
  const std::size_t len = mp.relations.size();
  graph.features = Matrix(pairs.size(), d);
  graph.first.reserve(pairs.size());
  graph.second.reserve(pairs.size());
  graph.instance_counts.reserve(pairs.size());

  std::size_t max_type_size = 0;
  for (TypeId t : mp.types) max_type_size = std::max(max_type_size, hin.nodes_of_type(t).size());

  // Frontier of the per-source dynamic program: for every reachable node at
  // the current position, the number of prefix paths and the sum over those
  // paths of all embeddings visited so far.
  struct Entry {
    std::uint32_t node;
    std::uint64_t count;
    std::size_t offset;  // into sums
  };
  std::vector<Entry> frontier;
  std::vector<double> sums;
  std::vector<std::uint64_t> next_count(max_type_size, 0);
  std::vector<double> next_sum(max_type_size * d, 0.0);
  std::vector<std::uint32_t> touched;

  std::size_t p = 0;
  while (p < pairs.size()) {
    const ObjectIndex u = pairs[p].first;
    frontier.clear();
    sums.assign(emb.of(hin.object_node(u)).begin(), emb.of(hin.object_node(u)).end());
    frontier.push_back({u, 1, 0});
    for (std::size_t step = 0; step < len; ++step) {
      const Adjacency& adj = hin.adjacency(mp.relations[step], mp.types[step]);
      touched.clear();
      for (const Entry& e : frontier) {
        for (std::uint32_t w : adj.neighbors(e.node)) {
          if (next_count[w] == 0) touched.push_back(w);
          next_count[w] += e.count;
          double* dst = next_sum.data() + std::size_t{w} * d;
          const double* src = sums.data() + e.offset;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      }
      const auto& nodes = hin.nodes_of_type(mp.types[step + 1]);
      if (step + 1 < len) {
        std::sort(touched.begin(), touched.end());
        frontier.clear();
        sums.clear();
        for (std::uint32_t w : touched) {
          auto e = emb.of(nodes[w]);
          const std::size_t off = sums.size();
          const double c = static_cast<double>(next_count[w]);
          for (std::size_t j = 0; j < d; ++j) sums.push_back(next_sum[std::size_t{w} * d + j] + c * e[j]);
          frontier.push_back({w, next_count[w], off});
          next_count[w] = 0;
          std::fill_n(next_sum.begin() + static_cast<std::ptrdiff_t>(std::size_t{w} * d), d, 0.0);
        }
      } else {
        for (; p < pairs.size() && pairs[p].first == u; ++p) {
          const ObjectIndex v = pairs[p].second;
          const std::uint64_t count = next_count[v];
          const std::size_t row = graph.first.size();
          graph.first.push_back(u);
          graph.second.push_back(v);
          graph.instance_counts.push_back(count);
          if (count > 0) {
            auto e = emb.of(nodes[v]);
            const double c = static_cast<double>(count);
            const double scale = 1.0 / (c * static_cast<double>(len + 1));
            for (std::size_t j = 0; j < d; ++j) {
              graph.features(row, j) = (next_sum[std::size_t{v} * d + j] + c * e[j]) * scale;
            }
          }
        }
        for (std::uint32_t w : touched) {
          next_count[w] = 0;
          std::fill_n(next_sum.begin() + static_cast<std::ptrdiff_t>(std::size_t{w} * d), d, 0.0);
        }
      }
    }
  }
  return graph;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

Matrix corrupt_features(const Matrix& features, std::uint64_t seed) {
  const auto perm = seeded_permutation(features.rows(), seed);
  Matrix out(features.rows(), features.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto src = features.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void write_context_graph(const ContextGraph& graph, const Hin& hin, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write '" + file.string() + "'");
  out << "# dim=" << graph.features.cols() << '\n';
  for (std::size_t j = 0; j < graph.num_contexts(); ++j) {
    out << hin.node_name(hin.object_node(graph.first[j])) << '\t' << hin.node_name(hin.object_node(graph.second[j]))
        << '\t' << graph.instance_counts[j] << '\t';
    for (std::size_t c = 0; c < graph.features.cols(); ++c) {
      if (c) out << ',';
      out << format_double(graph.features(j, c));
    }
    out << '\n';
  }
}

ContextGraph read_context_graph(const std::filesystem::path& file, const Hin& hin, const std::string& metapath) {
  ContextGraph graph;
  graph.metapath = metapath;
  graph.num_objects = hin.num_objects();
  std::size_t dim = 0;
  {
    std::ifstream in(file);
    std::string header;
    if (!in || !std::getline(in, header) || header.rfind("# dim=", 0) != 0) {
      throw Error(file.string() + ": missing '# dim=' header");
    }
    dim = std::stoul(header.substr(6));
  }
  std::vector<double> values;
  const std::string name = file.string();
  for_each_tsv_row(file, [&](const auto& f, std::size_t line) {
    if (f.size() != 4) throw ParseError(name, line, "expected 4 fields");
    auto u = hin.find_object(f[0]);
    auto v = hin.find_object(f[1]);
    if (!u || !v) throw ParseError(name, line, "unknown node");
    auto feat = parse_csv_doubles(f[3], name, line);
    if (feat.size() != dim) throw ParseError(name, line, "feature dimension mismatch");
    graph.first.push_back(*u);
    graph.second.push_back(*v);
    graph.instance_counts.push_back(std::stoull(std::string(f[2])));
    values.insert(values.end(), feat.begin(), feat.end());
  });
  graph.features = Matrix(graph.first.size(), dim, std::move(values));
  return graph;
}

}  // namespace conch
