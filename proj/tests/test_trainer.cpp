#include "conch/config.hpp"
#include "conch/metrics.hpp"
#include "conch/synthetic.hpp"
#include "conch/trainer.hpp"
#include "test_util.hpp"

#include "doctest.h"

#include <cmath>
#include <sstream>

using namespace conch;
using conch::testing::read_file;
using conch::testing::TempDir;

namespace {

const std::filesystem::path kToy = std::filesystem::path(CONCH_FIXTURE_DIR) / "toy";

RunConfig toy_config(const TempDir& dir) {
  RunConfig cfg = load_run_config(kToy / "run.json");
  cfg.output_dir = dir / "run";
  cfg.threads = 2;
  return cfg;
}

RunConfig synthetic_config(const TempDir& dir, const SyntheticParams& sp, std::size_t epochs) {
  const auto run = write_synthetic(generate_synthetic(sp), dir / "data");
  RunConfig cfg = load_run_config(run);
  cfg.output_dir = dir / "run";
  cfg.model.dim = 16;
  cfg.model.hidden_dim = 16;
  cfg.model.attention_dim = 16;
  cfg.embedding_dim = 8;
  cfg.max_epochs = epochs;
  cfg.patience = epochs;
  cfg.optimizer.learning_rate = 0.01;
  return cfg;
}

std::vector<std::vector<double>> parse_context_file(const std::filesystem::path& file, std::string& header,
                                                    std::vector<std::string>& keys) {
  std::istringstream in(read_file(file));
  std::getline(in, header);
  std::vector<std::vector<double>> rows;
  for (std::string line; std::getline(in, line);) {
    const auto last_tab = line.rfind('\t');
    keys.push_back(line.substr(0, last_tab));
    rows.push_back(parse_csv_doubles(line.substr(last_tab + 1), file.string(), 0));
  }
  return rows;
}

}  // namespace

TEST_CASE("f1 scores") {
  const std::vector<int> truth{0, 1, 2, 1}, pred{0, 1, 2, 2};
  CHECK(f1_scores(truth, pred, 3).micro == 0.75);
  const auto perfect = f1_scores(truth, truth, 3);
  CHECK(perfect.micro == 1.0);
  CHECK(perfect.macro == 1.0);

  // Each class: TP = 1, FP = 1, FN = 1.
  const std::vector<int> t2{0, 0, 1, 1}, p2{0, 1, 1, 0};
  CHECK(std::abs(f1_scores(t2, p2, 2).macro - 0.5) < 1e-15);

  // A class absent from both truth and predictions contributes 0.
  CHECK(std::abs(f1_scores(t2, t2, 3).macro - 2.0 / 3.0) < 1e-15);
  CHECK_THROWS(f1_scores(std::vector<int>{}, std::vector<int>{}, 2));

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> label(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> t(40), p(40);
    for (auto& v : t) v = label(rng);
    for (auto& v : p) v = label(rng);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < t.size(); ++i) hits += t[i] == p[i];
    const auto f = f1_scores(t, p, 5);
    CHECK(std::abs(f.micro - static_cast<double>(hits) / 40.0) < 1e-15);
    CHECK(f.micro == accuracy(t, p));
    CHECK(f.macro >= 0.0);
    CHECK(f.macro <= 1.0);
  }
}

TEST_CASE("early stopping rule") {
  EarlyStopping worsening(1);
  CHECK_FALSE(worsening.update(0.6));
  CHECK(worsening.update(0.5));
  CHECK(worsening.best_epoch() == 1);

  EarlyStopping s(3);
  CHECK_FALSE(s.update(0.2));
  CHECK_FALSE(s.update(0.5));
  CHECK(s.improved());
  CHECK_FALSE(s.update(0.5));  // a tie is not an improvement
  CHECK_FALSE(s.improved());
  CHECK_FALSE(s.update(0.4));
  CHECK(s.update(0.5));
  CHECK(s.best_epoch() == 2);
  CHECK(s.best() == 0.5);
}

TEST_CASE("training with patience 1 and no improvement stops after two epochs") {
  TempDir dir;
  SyntheticParams sp;
  sp.per_class = 10;
  RunConfig cfg = synthetic_config(dir, sp, 50);
  cfg.patience = 1;
  cfg.optimizer.learning_rate = 1e-12;
  cfg.model.dropout = 0.0;
  PreparedData data = prepare(cfg);
  TrainResult r = train(cfg, data);
  CHECK(r.report.epochs_run == 2);
  CHECK(r.report.best_epoch == 1);
}

TEST_CASE("config parsing") {
  TempDir dir;
  RunConfig cfg = toy_config(dir);
  CHECK(cfg.nodes == kToy / "nodes.tsv");
  CHECK(cfg.embeddings == kToy / "embeddings.tsv");
  REQUIRE(cfg.metapaths.size() == 2);
  CHECK(cfg.metapaths[1].name == "APVPA");
  CHECK(cfg.model.k == 2);
  CHECK(cfg.model.dropout == 0.5);
  CHECK(cfg.optimizer.learning_rate == 0.001);

  RunConfig again = run_config_from_json(run_config_to_json(cfg), "/");
  CHECK(run_config_to_json(again) == run_config_to_json(cfg));

  CHECK_THROWS(run_config_from_json(R"({"nodes": "n"})", "/"));
  CHECK_THROWS(run_config_from_json("{not json", "/"));
  RunConfig bad = cfg;
  bad.metapaths.clear();
  CHECK_THROWS(bad.validate());
}

TEST_CASE("prepared cache matches golden files") {
  TempDir dir;
  RunConfig cfg = toy_config(dir);
  PreparedData data = prepare(cfg);
  const auto cache = cfg.output_dir / "cache";
  for (const char* mp : {"APA", "APVPA"}) {
    const std::string nb = std::string("neighbors.") + mp + ".tsv";
    CHECK(read_file(cache / nb) == read_file(kToy / "expected" / nb));

    const std::string ctx = std::string("contexts.") + mp + ".tsv";
    std::string h1, h2;
    std::vector<std::string> k1, k2;
    auto got = parse_context_file(cache / ctx, h1, k1);
    auto want = parse_context_file(kToy / "expected" / ctx, h2, k2);
    CHECK(h1 == h2);
    CHECK(k1 == k2);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      REQUIRE(got[i].size() == want[i].size());
      for (std::size_t j = 0; j < got[i].size(); ++j) CHECK(std::abs(got[i][j] - want[i][j]) < 1e-12);
    }
  }
  for (const auto& g : data.graphs) {
    for (std::size_t d : g.object_degrees()) CHECK(d <= 2);
  }
}

TEST_CASE("prepare reuses fresh caches") {
  TempDir dir;
  RunConfig cfg = toy_config(dir);
  std::ostringstream first_log;
  PreparedData first = prepare(cfg, &first_log);
  CHECK_FALSE(first.cache.embeddings_reused);
  CHECK(first_log.str().find("cache hit") == std::string::npos);

  std::ostringstream second_log;
  PreparedData second = prepare(cfg, &second_log);
  CHECK(second.cache.embeddings_reused);
  CHECK(second.cache.neighbors_reused == std::vector<bool>{true, true});
  CHECK(second.cache.contexts_reused == std::vector<bool>{true, true});
  CHECK(second_log.str().find("computed") == std::string::npos);
  CHECK(second_log.str().find("cache hit") != std::string::npos);
  CHECK(second.graphs == first.graphs);
  CHECK(second.neighbors == first.neighbors);

  cfg.model.k = 1;
  PreparedData third = prepare(cfg);
  CHECK(third.cache.embeddings_reused);
  CHECK(third.cache.neighbors_reused == std::vector<bool>{false, false});
  CHECK(third.cache.contexts_reused == std::vector<bool>{false, false});
  for (const auto& row : third.neighbors[0].rows) CHECK(row.size() <= 1);

  // Editing an input file invalidates everything derived from it.
  TempDir copy;
  for (const auto& f : std::filesystem::directory_iterator(kToy))
    if (f.is_regular_file()) std::filesystem::copy_file(f.path(), copy / f.path().filename().string());
  RunConfig moved = load_run_config(copy / "run.json");
  moved.output_dir = copy / "run";
  prepare(moved);
  conch::testing::write_file(copy / "edges.tsv", read_file(copy / "edges.tsv") + "writes\tA4\tP1\n");
  PreparedData changed = prepare(moved);
  CHECK_FALSE(changed.cache.embeddings_reused);
  CHECK(changed.cache.neighbors_reused == std::vector<bool>{false, false});
}

TEST_CASE("pathsim query") {
  TempDir dir;
  Hin hin = conch::testing::toy_hin();
  HinFiles files = write_hin(hin, dir / "data");
  Split split{{0}, {1}, {}};
  write_split(split, hin, dir / "data" / "split.tsv");
  RunConfig cfg;
  cfg.nodes = files.nodes;
  cfg.edges = files.edges;
  cfg.labels = files.labels;
  cfg.split = dir / "data" / "split.tsv";
  cfg.metapaths = {{"APA", {}, {}}};
  cfg.embedding_dim = 4;
  cfg.output_dir = dir / "run";
  PreparedData data = prepare(cfg);
  auto row = pathsim_query(data, "APA", "A1");
  REQUIRE(row.size() == 1);
  CHECK(data.hin.node_name(data.hin.object_node(row[0].node)) == "A2");
  CHECK(std::abs(row[0].score - 2.0 / 3.0) < 1e-15);
  CHECK_THROWS_WITH(pathsim_query(data, "APA", "Z"), doctest::Contains("unknown node"));
  CHECK_THROWS(pathsim_query(data, "XYZ", "A1"));

  TempDir fx;
  RunConfig toy = toy_config(fx);
  PreparedData td = prepare(toy);
  auto r3 = pathsim_query(td, "APVPA", "A3");
  REQUIRE(r3.size() == 2);
  CHECK(r3[0].score >= r3[1].score);
}

TEST_CASE("isolated object has no pathsim neighbors") {
  TempDir dir;
  HinBuilder b;
  b.add_node("A1", "author");
  b.add_node("A2", "author");
  b.add_node("A3", "author");
  b.add_node("P1", "paper");
  b.add_edge("writes", "A1", "P1");
  b.add_edge("writes", "A2", "P1");
  b.set_target_type("author");
  b.set_label("A1", "x");
  b.set_label("A2", "y");
  b.set_label("A3", "y");
  Hin hin = std::move(b).build();
  HinFiles files = write_hin(hin, dir / "data");
  write_split(Split{{0}, {1}, {2}}, hin, dir / "data" / "split.tsv");
  RunConfig cfg;
  cfg.nodes = files.nodes;
  cfg.edges = files.edges;
  cfg.labels = files.labels;
  cfg.split = dir / "data" / "split.tsv";
  cfg.metapaths = {{"APA", {}, {}}};
  cfg.embedding_dim = 2;
  cfg.output_dir = dir / "run";
  PreparedData data = prepare(cfg);
  CHECK(pathsim_query(data, "APA", "A3").empty());
}

TEST_CASE("training is deterministic and checkpoints evaluate identically") {
  TempDir dir;
  SyntheticParams sp;
  sp.per_class = 15;
  RunConfig cfg = synthetic_config(dir, sp, 15);
  PreparedData data = prepare(cfg);
  TrainResult a = train(cfg, data);
  TrainResult b = train(cfg, data);
  REQUIRE(a.report.curve.size() == b.report.curve.size());
  for (std::size_t i = 0; i < a.report.curve.size(); ++i) {
    CHECK(a.report.curve[i].loss == b.report.curve[i].loss);
    CHECK(a.report.curve[i].val_accuracy == b.report.curve[i].val_accuracy);
  }
  CHECK(metrics_json(a.report) == metrics_json(b.report));
  CHECK(a.report.micro_f1 >= 0.0);
  CHECK(a.report.macro_f1 <= 1.0);

  write_run_outputs(cfg, data, a);
  for (const char* f : {"metrics.json", "metrics.txt", "config.json", "timing.json", "attention.tsv", "model.ckpt"})
    CHECK(std::filesystem::exists(cfg.output_dir / f));
  CHECK(read_file(cfg.output_dir / "metrics.json") == metrics_json(a.report));
  CHECK(read_file(cfg.output_dir / "metrics.json").find("seconds") == std::string::npos);

  // attention.tsv rows sum to one per node.
  std::map<std::string, double> totals;
  std::istringstream att(read_file(cfg.output_dir / "attention.tsv"));
  for (std::string line; std::getline(att, line);) {
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t'), t2 = line.rfind('\t');
    totals[line.substr(0, t1)] += std::stod(line.substr(t2 + 1));
  }
  CHECK(totals.size() == data.hin.num_objects());
  for (const auto& [node, s] : totals) CHECK(std::abs(s - 1.0) < 1e-9);

  MetricsReport ev = evaluate_checkpoint(cfg, data, cfg.output_dir / "model.ckpt");
  CHECK(ev.micro_f1 == a.report.micro_f1);
  CHECK(ev.macro_f1 == a.report.macro_f1);
  CHECK(ev.predictions == a.report.predictions);

  RunConfig other = cfg;
  other.seed = cfg.seed + 1;
  CHECK(metrics_json(train(other, data).report) != metrics_json(a.report));
}

TEST_CASE("training loss decreases on a separable synthetic network") {
  TempDir dir;
  SyntheticParams sp;
  sp.feature_noise = 0.5;
  RunConfig cfg = synthetic_config(dir, sp, 20);
  cfg.model.dropout = 0.0;
  PreparedData data = prepare(cfg);
  TrainResult r = train(cfg, data);
  REQUIRE(r.report.curve.size() == 20);
  for (std::size_t i = 1; i < 20; ++i) {
    INFO("epoch " << i + 1);
    CHECK(r.report.curve[i].loss < r.report.curve[i - 1].loss);
  }
}

TEST_CASE("non-finite training aborts with a diagnostic dump") {
  TempDir dir;
  SyntheticParams sp;
  sp.per_class = 10;
  RunConfig cfg = synthetic_config(dir, sp, 30);
  cfg.optimizer.learning_rate = 1e300;
  PreparedData data = prepare(cfg);
  CHECK_THROWS_WITH(train(cfg, data), doctest::Contains("diagnostic_epoch_"));
  bool found = false;
  for (const auto& f : std::filesystem::directory_iterator(cfg.output_dir))
    found |= f.path().filename().string().rfind("diagnostic_epoch_", 0) == 0;
  CHECK(found);
}

TEST_CASE("synthetic generator") {
  SyntheticParams sp;
  TempDir a, b;
  write_synthetic(generate_synthetic(sp), a.path());
  write_synthetic(generate_synthetic(sp), b.path());
  for (const char* f : {"nodes.tsv", "edges.tsv", "labels.tsv", "features.tsv", "split.tsv", "run.json"})
    CHECK(read_file(a / f) == read_file(b / f));

  SyntheticDataset d = generate_synthetic(sp);
  CHECK(d.hin.num_objects() == 200);
  CHECK(d.hin.num_classes() == 4);
  CHECK(d.split.train.size() == 20);
  CHECK(d.split.validation.size() == 20);
  CHECK(d.split.test.size() == 160);

  // Planted signal: PathSim top-k under P1 is mostly same-class.
  MetaPath p1 = resolve_metapath(d.hin, "P1", {"item", "alpha", "item"}, {"item_alpha", "item_alpha"});
  NeighborIndex idx = top_k_neighbors(count_paths(d.hin, p1), 5, NeighborMode::PathSim, 0);
  std::size_t same = 0, total = 0;
  for (ObjectIndex u = 0; u < idx.rows.size(); ++u) {
    for (const Neighbor& n : idx.rows[u]) {
      same += d.hin.labels()[u] == d.hin.labels()[n.node];
      ++total;
    }
  }
  INFO("same-class fraction " << static_cast<double>(same) / static_cast<double>(total));
  CHECK(static_cast<double>(same) > 0.9 * static_cast<double>(total));

  sp.noise = 0.0;
  SyntheticDataset clean = generate_synthetic(sp);
  MetaPath c1 = resolve_metapath(clean.hin, "P1", {"item", "alpha", "item"}, {"item_alpha", "item_alpha"});
  NeighborIndex ci = top_k_neighbors(count_paths(clean.hin, c1), 5, NeighborMode::PathSim, 0);
  ContextGraph g = build_context_graph(clean.hin, c1, ci, structural_embeddings(clean.hin, 4, 1));
  CHECK(g.num_contexts() > 0);
  for (std::size_t j = 0; j < g.num_contexts(); ++j)
    CHECK(clean.hin.labels()[g.first[j]] == clean.hin.labels()[g.second[j]]);
}
