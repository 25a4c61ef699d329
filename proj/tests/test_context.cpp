#include "conch/context.hpp"
#include "test_util.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace conch;
using conch::testing::TempDir;
using conch::testing::write_file;

namespace {

InitialEmbeddings manual_embeddings(const Hin& hin, const std::map<std::string, std::vector<double>>& rows) {
  const std::size_t d = rows.begin()->second.size();
  InitialEmbeddings emb{Matrix(hin.num_nodes(), d), std::vector<bool>(hin.num_nodes(), false)};
  for (const auto& [name, v] : rows) {
    const NodeId n = *hin.find_node(name);
    std::copy(v.begin(), v.end(), emb.values.row(n).begin());
    emb.covered[n] = true;
  }
  return emb;
}

// Movies M1..M4 with actors: M1-A1-M3 and M2-A2-M4.
Hin movie_hin() {
  HinBuilder b;
  for (auto m : {"M1", "M2", "M3", "M4"}) b.add_node(m, "movie");
  b.add_node("A1", "actor");
  b.add_node("A2", "actor");
  b.add_edge("acts", "M1", "A1");
  b.add_edge("acts", "M3", "A1");
  b.add_edge("acts", "M2", "A2");
  b.add_edge("acts", "M4", "A2");
  b.set_target_type("movie");
  return std::move(b).build();
}

NeighborIndex index_for(const Hin& hin, const MetaPath& mp, std::size_t k) {
  NeighborIndex idx = top_k_neighbors(count_paths(hin, mp), k, NeighborMode::PathSim, 0);
  idx.metapath = mp.name;
  return idx;
}

std::vector<std::vector<double>> sorted_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST_CASE("embedding file loading") {
  Hin hin = conch::testing::toy_hin();
  TempDir dir;
  std::string text;
  for (NodeId n = 0; n < hin.num_nodes(); ++n) {
    text += hin.node_name(n) + "\t";
    for (int j = 0; j < 128; ++j) text += (j ? "," : "") + std::to_string(0.01 * (j + n));
    text += "\n";
  }
  const std::vector<TypeId> all{0, 1};
  InitialEmbeddings emb = load_embeddings(write_file(dir / "e.tsv", text), hin, all);
  CHECK(emb.dim() == 128);
  CHECK(std::all_of(emb.covered.begin(), emb.covered.end(), [](bool c) { return c; }));

  std::string short_row = text;
  short_row += "";
  const auto last = short_row.rfind(',');
  short_row.erase(last, short_row.find('\n', last) - last);
  CHECK_THROWS_WITH(load_embeddings(write_file(dir / "bad.tsv", short_row), hin, all),
                    doctest::Contains("dimension mismatch"));

  const std::string missing = text.substr(0, text.find('\n') + 1);
  CHECK_THROWS_WITH(load_embeddings(write_file(dir / "miss.tsv", missing), hin, all), doctest::Contains("missing"));
  CHECK_THROWS_WITH(load_embeddings(write_file(dir / "unk.tsv", text + "Z9\t1\n"), hin, all),
                    doctest::Contains("unknown node"));
}

TEST_CASE("structural embeddings") {
  // A star: hub H with leaves L1..L3 of one type; leaves share a profile.
  HinBuilder b;
  for (auto n : {"H", "L1", "L2", "L3"}) b.add_node(n, "x");
  for (auto l : {"L1", "L2", "L3"}) b.add_edge("e", "H", l);
  b.set_target_type("x");
  Hin hin = std::move(b).build();

  InitialEmbeddings e1 = structural_embeddings(hin, 8, 3);
  InitialEmbeddings e2 = structural_embeddings(hin, 8, 3);
  CHECK(e1.values == e2.values);
  CHECK(e1.values.all_finite());
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(e1.values(1, j) == e1.values(2, j));
    CHECK(e1.values(2, j) == e1.values(3, j));
  }
  CHECK_FALSE(structural_embeddings(hin, 8, 4).values == e1.values);

  InitialEmbeddings one = structural_embeddings(hin, 1, 9);
  // Degrees 3,1,1,1: the single coordinate is proportional to degree.
  REQUIRE(one.values(1, 0) != 0.0);
  CHECK(std::abs(one.values(0, 0) / one.values(1, 0) - 3.0) < 1e-12);
  CHECK_THROWS(structural_embeddings(hin, 0, 1));
}

TEST_CASE("instance embedding is the node mean") {
  Hin hin = conch::testing::toy_hin();
  auto emb = manual_embeddings(hin, {{"A1", {1, 0}}, {"P1", {0, 1}}, {"A2", {1, 0}}, {"P2", {0, 0}}});
  PathInstance p{{*hin.find_node("A1"), *hin.find_node("P1"), *hin.find_node("A2")}};
  auto v = instance_embedding(p, emb);
  CHECK(std::abs(v[0] - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(v[1] - 1.0 / 3.0) < 1e-15);

  PathInstance q{{p.nodes[2], p.nodes[0], p.nodes[1]}};
  auto w = instance_embedding(q, emb);
  CHECK(std::abs(w[0] - v[0]) < 1e-15);
  CHECK(std::abs(w[1] - v[1]) < 1e-15);

  auto same = manual_embeddings(hin, {{"A1", {2.5, -1}}, {"P1", {2.5, -1}}, {"A2", {2.5, -1}}, {"P2", {2.5, -1}}});
  auto s = instance_embedding(p, same);
  CHECK(s == std::vector<double>{2.5, -1});
}

TEST_CASE("context feature is the instance mean") {
  Hin hin = conch::testing::toy_hin();
  auto emb = manual_embeddings(hin, {{"A1", {3, 0}}, {"P1", {0, 3}}, {"A2", {0, 0}}, {"P2", {0, 0}}});
  const NodeId a1 = *hin.find_node("A1"), a2 = *hin.find_node("A2"), p1 = *hin.find_node("P1"),
               p2 = *hin.find_node("P2");
  std::vector<PathInstance> one{{{a1, p1, a2}}};
  CHECK(context_feature(one, emb) == instance_embedding(one[0], emb));

  // Instances with embeddings (1,0) and (0,1).
  std::vector<PathInstance> two{{{a1, p2, a2}}, {{a2, p1, a2}}};
  auto f = context_feature(two, emb);
  CHECK(std::abs(f[0] - 0.5) < 1e-15);
  CHECK(std::abs(f[1] - 0.5) < 1e-15);
  CHECK_THROWS(context_feature(std::span<const PathInstance>{}, emb));
}

TEST_CASE("movie-actor-movie context over two instances") {
  // M1 and M2 share actors A1 and A2.
  HinBuilder b;
  for (auto m : {"M1", "M2"}) b.add_node(m, "movie");
  for (auto a : {"A1", "A2"}) b.add_node(a, "actor");
  for (auto m : {"M1", "M2"})
    for (auto a : {"A1", "A2"}) b.add_edge("acts", m, a);
  b.set_target_type("movie");
  Hin hin = std::move(b).build();
  MetaPath mp = resolve_metapath(hin, "MAM");
  auto inst = enumerate_instances(hin, mp, 0, 1);
  REQUIRE(inst.size() == 2);
  CHECK(hin.node_name(inst[0].nodes[1]) == "A1");
  CHECK(hin.node_name(inst[1].nodes[1]) == "A2");

  auto emb = manual_embeddings(hin, {{"M1", {1, 0, 0}}, {"M2", {0, 1, 0}}, {"A1", {0, 0, 3}}, {"A2", {0, 0, 6}}});
  auto f = context_feature(inst, emb);
  // ((1,1,3)/3 + (1,1,6)/3) / 2
  CHECK(std::abs(f[0] - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(f[1] - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(f[2] - 1.5) < 1e-15);

  ContextGraph g = build_context_graph(hin, mp, index_for(hin, mp, 5), emb);
  REQUIRE(g.num_contexts() == 1);
  CHECK(g.instance_counts[0] == 2);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(g.features(0, j) - f[j]) < 1e-12);
}

TEST_CASE("two disjoint movie contexts") {
  Hin hin = movie_hin();
  MetaPath mp = resolve_metapath(hin, "MAM");
  auto emb = manual_embeddings(hin, {{"M1", {1, 0}}, {"M2", {2, 0}}, {"M3", {3, 0}}, {"M4", {4, 0}},
                                     {"A1", {0, 3}}, {"A2", {0, 6}}});
  ContextGraph g = build_context_graph(hin, mp, index_for(hin, mp, 5), emb);
  REQUIRE(g.num_contexts() == 2);
  const ObjectIndex m1 = *hin.find_object("M1"), m2 = *hin.find_object("M2"), m3 = *hin.find_object("M3"),
                    m4 = *hin.find_object("M4");
  CHECK(g.first[0] == m1);
  CHECK(g.second[0] == m3);
  CHECK(g.first[1] == m2);
  CHECK(g.second[1] == m4);
  // 2 contexts x 2 endpoints = 4 edges.
  auto deg = g.object_degrees();
  CHECK(std::accumulate(deg.begin(), deg.end(), std::size_t{0}) == 4);
  CHECK(std::abs(g.features(0, 0) - 4.0 / 3.0) < 1e-15);
  CHECK(std::abs(g.features(0, 1) - 1.0) < 1e-15);
  CHECK(std::abs(g.features(1, 0) - 2.0) < 1e-15);
  CHECK(std::abs(g.features(1, 1) - 2.0) < 1e-15);
}

TEST_CASE("empty neighbor index gives empty graph") {
  Hin hin = movie_hin();
  MetaPath mp = resolve_metapath(hin, "MAM");
  NeighborIndex empty{mp.name, 3, std::vector<std::vector<Neighbor>>(hin.num_objects())};
  ContextGraph g = build_context_graph(hin, mp, empty, structural_embeddings(hin, 4, 1));
  CHECK(g.num_contexts() == 0);
  CHECK(g.num_objects == hin.num_objects());
  CHECK(select_context_pairs(empty).empty());
}

TEST_CASE("asymmetric neighbors yield one context per pair") {
  NeighborIndex idx;
  idx.k = 2;
  idx.rows = {{{1, 0.9, 1}}, {{2, 0.8, 1}}, {{1, 0.8, 1}}};
  // 0 lists 1 but 1 does not list 0; 1 and 2 list each other.
  auto pairs = select_context_pairs(idx);
  CHECK(pairs == std::vector<std::pair<ObjectIndex, ObjectIndex>>{{0, 1}, {1, 2}});
}

TEST_CASE("context features match instance enumeration on random networks") {
  std::mt19937_64 rng(8);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Hin hin = conch::testing::random_hin(rng, 40);
    auto mp = conch::testing::random_metapath(hin, rng, true);
    if (!mp) continue;
    for (std::size_t k : {1u, 3u, 6u}) {
      NeighborIndex idx = index_for(hin, *mp, k);
      InitialEmbeddings emb = structural_embeddings(hin, 5, 1 + trial);
      ContextGraph g = build_context_graph(hin, *mp, idx, emb);
      ++checked;

      // Pairs come from the union of neighbor lists.
      std::set<std::pair<ObjectIndex, ObjectIndex>> union_pairs;
      for (ObjectIndex u = 0; u < idx.rows.size(); ++u)
        for (const Neighbor& nb : idx.rows[u]) union_pairs.insert(std::minmax(u, nb.node));
      std::set<std::pair<ObjectIndex, ObjectIndex>> seen;
      for (std::size_t j = 0; j < g.num_contexts(); ++j) {
        const auto pair = std::make_pair(g.first[j], g.second[j]);
        CHECK(g.first[j] < g.second[j]);
        CHECK(union_pairs.contains(pair));
        CHECK(seen.insert(pair).second);

        auto inst = enumerate_instances(hin, *mp, g.first[j], g.second[j]);
        REQUIRE(!inst.empty());
        CHECK(g.instance_counts[j] == inst.size());
        auto ref = context_feature(inst, emb);
        for (std::size_t c = 0; c < ref.size(); ++c) {
          CHECK(std::abs(g.features(j, c) - ref[c]) <= 1e-12 * (1.0 + std::abs(ref[c])));
          // Inside the box spanned by the participating node embeddings.
          double lo = INFINITY, hi = -INFINITY;
          for (const auto& p : inst)
            for (NodeId n : p.nodes) {
              lo = std::min(lo, emb.values(n, c));
              hi = std::max(hi, emb.values(n, c));
            }
          CHECK(g.features(j, c) >= lo - 1e-12);
          CHECK(g.features(j, c) <= hi + 1e-12);
        }
      }
      for (std::size_t d : g.object_degrees()) CHECK(d <= k);

      // When capacity never binds, every union pair is present.
      std::vector<std::size_t> union_deg(hin.num_objects(), 0);
      for (const auto& [u, v] : union_pairs) {
        ++union_deg[u];
        ++union_deg[v];
      }
      if (*std::max_element(union_deg.begin(), union_deg.end()) <= k) CHECK(seen == union_pairs);
    }
  }
  CHECK(checked > 60);
}

TEST_CASE("corruption permutes rows") {
  Matrix one(1, 3, std::vector<double>{1, 2, 3});
  CHECK(corrupt_features(one, 5) == one);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Matrix m(30, 4);
  for (double& v : m.data()) v = normal(rng);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Matrix c = corrupt_features(m, seed);
    CHECK(sorted_rows(c) == sorted_rows(m));
    CHECK(c == corrupt_features(m, seed));
  }
  CHECK_FALSE(corrupt_features(m, 1) == corrupt_features(m, 2));
  auto perm = seeded_permutation(30, 4);
  std::vector<std::size_t> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 30; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("context graph and embedding files round trip") {
  std::mt19937_64 rng(21);
  Hin hin = conch::testing::random_hin(rng, 40);
  auto mp = conch::testing::random_metapath(hin, rng, true);
  REQUIRE(mp);
  InitialEmbeddings emb = structural_embeddings(hin, 6, 2);
  ContextGraph g = build_context_graph(hin, *mp, index_for(hin, *mp, 4), emb);
  TempDir dir;
  write_context_graph(g, hin, dir / "c.tsv");
  ContextGraph back = read_context_graph(dir / "c.tsv", hin, mp->name);
  CHECK(back == g);

  write_embeddings(emb, hin, dir / "e.tsv");
  std::vector<TypeId> types;
  for (TypeId t = 0; t < hin.num_types(); ++t) types.push_back(t);
  InitialEmbeddings eb = load_embeddings(dir / "e.tsv", hin, types);
  CHECK(eb.values == emb.values);
}
