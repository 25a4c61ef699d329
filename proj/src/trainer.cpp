#include "conch/trainer.hpp"

#include "conch/error.hpp"
#include "conch/metrics.hpp"
#include "conch/parallel.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"

namespace conch {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return out.str();
}

std::string file_digest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open '" + file.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::string join_key(std::initializer_list<std::string> parts) {
  std::string s;
  for (const auto& p : parts) {
    s += p;
    s += '\x1f';
  }
  return sha256_hex(s);
}

class Manifest {
public:
  explicit Manifest(std::filesystem::path file) : file_(std::move(file)) {
    std::ifstream in(file_);
    if (in) {
      try {
        in >> entries_;
      } catch (const json::exception&) {
        entries_ = json::object();
      }
    }
    if (!entries_.is_object()) entries_ = json::object();
  }

  bool fresh(const std::string& artifact, const std::string& key) const {
    return entries_.contains(artifact) && entries_[artifact] == key &&
           std::filesystem::exists(file_.parent_path() / artifact);
  }
  void record(const std::string& artifact, const std::string& key) { entries_[artifact] = key; }
  void save() const {
    std::ofstream out(file_);
    out << entries_.dump(2) << '\n';
  }

private:
  std::filesystem::path file_;
  json entries_;
};

void log_line(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << '\n';
}

}  // namespace

PreparedData prepare(const RunConfig& config, std::ostream* log) {
  config.validate();
  PreparedData data;
  HinFiles files{config.nodes, config.edges, config.labels, config.features};
  data.hin = load_hin(files, config.target_type);
  if (data.hin.num_classes() < 2) throw Error("dataset needs at least 2 labels");
  data.split = load_split(config.split, data.hin);
  for (const auto& spec : config.metapaths) {
    data.metapaths.push_back(resolve_metapath(data.hin, spec.name, spec.types, spec.relations));
  }

  const auto cache_dir = config.output_dir / "cache";
  std::filesystem::create_directories(cache_dir);
  Manifest manifest(cache_dir / "manifest.json");

  const std::string data_key =
      join_key({file_digest(config.nodes), file_digest(config.edges), file_digest(config.labels),
                config.features ? file_digest(*config.features) : "no-features", data.hin.type_names()[data.hin.target_type()]});

  std::vector<TypeId> required;
  {
    std::set<TypeId> types;
    for (const auto& mp : data.metapaths) types.insert(mp.types.begin(), mp.types.end());
    required.assign(types.begin(), types.end());
  }
  const std::string emb_key =
      join_key({data_key, "embeddings",
                config.embeddings ? "file:" + file_digest(*config.embeddings)
                                  : "structural:" + std::to_string(config.embedding_dim) + ":" +
                                        std::to_string(config.embedding_seed)});
  const std::string emb_file = "embeddings.tsv";
  if (manifest.fresh(emb_file, emb_key)) {
    data.embeddings = load_embeddings(cache_dir / emb_file, data.hin, required);
    data.cache.embeddings_reused = true;
    log_line(log, "cache hit: " + emb_file);
  } else {
    data.embeddings = config.embeddings ? load_embeddings(*config.embeddings, data.hin, required)
                                        : structural_embeddings(data.hin, config.embedding_dim, config.embedding_seed);
    write_embeddings(data.embeddings, data.hin, cache_dir / emb_file);
    manifest.record(emb_file, emb_key);
    log_line(log, std::string("computed: ") + emb_file);
  }

  const std::size_t q_count = data.metapaths.size();
  data.neighbors.resize(q_count);
  data.graphs.resize(q_count);
  data.cache.neighbors_reused.assign(q_count, false);
  data.cache.contexts_reused.assign(q_count, false);
  std::vector<std::string> nb_keys(q_count), ctx_keys(q_count);
  const NeighborMode mode = config.model.random_neighbors ? NeighborMode::Random : NeighborMode::PathSim;
  const unsigned threads = resolve_threads(config.threads);
  const unsigned outer = static_cast<unsigned>(std::min<std::size_t>(threads, q_count));
  const unsigned inner = std::max(1u, threads / std::max(1u, outer));

  // Reads/writes of distinct meta-paths touch distinct files; the manifest is
  // only read here and updated afterwards.
  std::vector<char> nb_hits(q_count, 0), ctx_hits(q_count, 0);
  parallel_for(q_count, outer, [&](std::size_t q) {
    const MetaPath& mp = data.metapaths[q];
    std::string signature = mp.name;
    for (TypeId t : mp.types) signature += ":" + data.hin.type_names()[t];
    for (RelationId r : mp.relations) signature += ":" + data.hin.relations()[r].name;
    nb_keys[q] = join_key({data_key, "neighbors", signature, std::to_string(config.model.k),
                           mode == NeighborMode::Random ? "random:" + std::to_string(config.seed) : "pathsim"});
    ctx_keys[q] = join_key({nb_keys[q], emb_key, "contexts"});
    const std::string nb_file = "neighbors." + mp.name + ".tsv";
    const std::string ctx_file = "contexts." + mp.name + ".tsv";
    try {
      if (manifest.fresh(nb_file, nb_keys[q])) {
        data.neighbors[q] = read_neighbor_index(cache_dir / nb_file, data.hin, mp.name, config.model.k);
        nb_hits[q] = 1;
      } else {
        const CountMatrix cm = count_paths(data.hin, mp);
        data.neighbors[q] = top_k_neighbors(cm, config.model.k, mode, config.seed, inner);
        data.neighbors[q].metapath = mp.name;
        write_neighbor_index(data.neighbors[q], data.hin, cache_dir / nb_file);
      }
      if (manifest.fresh(ctx_file, ctx_keys[q])) {
        data.graphs[q] = read_context_graph(cache_dir / ctx_file, data.hin, mp.name);
        ctx_hits[q] = 1;
      } else {
        data.graphs[q] = build_context_graph(data.hin, mp, data.neighbors[q], data.embeddings);
        write_context_graph(data.graphs[q], data.hin, cache_dir / ctx_file);
      }
    } catch (const Error& e) {
      throw Error("meta-path '" + mp.name + "': " + e.what());
    }
  });
  for (std::size_t q = 0; q < q_count; ++q) {
    const std::string& name = data.metapaths[q].name;
    data.cache.neighbors_reused[q] = nb_hits[q] != 0;
    data.cache.contexts_reused[q] = ctx_hits[q] != 0;
    log_line(log, std::string(nb_hits[q] ? "cache hit: " : "computed: ") + "neighbors." + name + ".tsv");
    log_line(log, std::string(ctx_hits[q] ? "cache hit: " : "computed: ") + "contexts." + name + ".tsv (" +
                      std::to_string(data.graphs[q].num_contexts()) + " contexts)");
    manifest.record("neighbors." + name + ".tsv", nb_keys[q]);
    manifest.record("contexts." + name + ".tsv", ctx_keys[q]);
  }
  manifest.save();
  return data;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<BipartiteOperators> make_operators(const PreparedData& data) {
  std::vector<BipartiteOperators> ops;
  for (const auto& g : data.graphs) ops.push_back(BipartiteOperators::from_graph(g));
  return ops;
}

std::vector<int> truths(const PreparedData& data, std::span<const ObjectIndex> objects) {
  std::vector<int> out;
  for (ObjectIndex i : objects) out.push_back(data.hin.labels()[i]);
  return out;
}

std::vector<int> select(const std::vector<int>& values, std::span<const ObjectIndex> objects) {
  std::vector<int> out;
  for (ObjectIndex i : objects) out.push_back(values[i]);
  return out;
}

constexpr std::uint64_t kCorruptionStream = 0x9E3779B97F4A7C15ull;

std::uint64_t corruption_seed(std::uint64_t seed, std::size_t epoch) {
  return seed * kCorruptionStream + epoch;
}

}  // namespace

void fill_predictions(const ConchModel& model, const PreparedData& data, MetricsReport& report) {
  const auto ops = make_operators(data);
  std::mt19937_64 unused(0);
  auto out = model.forward(ops, data.hin.features(), nullptr, data.hin.labels(), {}, false, unused);
  report.predictions = predict(out.scores.value());
  report.attention = out.attention.value();
  report.mean_attention.assign(report.attention.cols(), 0.0);
  for (std::size_t i = 0; i < report.attention.rows(); ++i) {
    for (std::size_t q = 0; q < report.attention.cols(); ++q) report.mean_attention[q] += report.attention(i, q);
  }
  for (double& w : report.mean_attention) w /= static_cast<double>(std::max<std::size_t>(1, report.attention.rows()));
  report.metapaths.clear();
  for (const auto& mp : data.metapaths) report.metapaths.push_back(mp.name);
}

F1Scores evaluate_objects(const MetricsReport& report, const PreparedData& data,
                          std::span<const ObjectIndex> objects) {
  if (objects.empty()) throw Error("evaluation split is empty");
  return f1_scores(truths(data, objects), select(report.predictions, objects), data.hin.num_classes());
}

double discriminator_accuracy(const ConchModel& model, const PreparedData& data, std::uint64_t seed) {
  const auto ops = make_operators(data);
  std::mt19937_64 unused(0);
  const Matrix corrupted = corrupt_features(data.hin.features(), seed);
  auto out = model.forward(ops, data.hin.features(), &corrupted, data.hin.labels(), {}, false, unused);
  const Matrix pos = discriminate(out.z, out.summary, model.discriminator()).value();
  const Matrix neg = discriminate(out.z_negative, out.summary, model.discriminator()).value();
  std::size_t hits = 0;
  for (double p : pos.data()) hits += p > 0.5 ? 1 : 0;
  for (double p : neg.data()) hits += p < 0.5 ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pos.size() + neg.size());
}

bool EarlyStopping::update(double val_accuracy) {
  ++epoch_;
  improved_ = val_accuracy > best_;
  if (improved_) {
    best_ = val_accuracy;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return false;
  }
  return ++since_best_ >= patience_;
}

TrainResult train(const RunConfig& config, const PreparedData& data, std::ostream* log) {
  config.validate();
  if (data.split.train.empty()) throw Error("training split is empty");
  if (data.split.validation.empty()) throw Error("validation split is empty");
  TrainResult result;
  result.model = std::make_unique<ConchModel>(config.model, data.hin.features().cols(), data.embeddings.dim(),
                                              data.metapaths.size(), data.hin.num_classes(), config.seed);
  ConchModel& model = *result.model;
  MetricsReport& report = result.report;
  const auto ops = make_operators(data);
  auto params = model.parameters();
  ad::Adam adam(params, config.optimizer);
  std::mt19937_64 rng(config.seed);
  const bool selfsup = config.model.effective_lambda() > 0.0;
  const Matrix& features = data.hin.features();
  const auto val_truth = truths(data, data.split.validation);

  EarlyStopping stopping(config.patience);
  std::vector<Matrix> best_params;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      Matrix corrupted;
      if (selfsup) corrupted = corrupt_features(features, corruption_seed(config.seed, epoch));
      auto out = model.forward(ops, features, selfsup ? &corrupted : nullptr, data.hin.labels(), data.split.train,
                               true, rng);
      rec.loss = out.loss.item();
      rec.supervised = out.loss_supervised.item();
      rec.selfsup = out.loss_selfsup.item();
      out.loss.backward();
      adam.step();
      adam.zero_grad();

      auto eval = model.forward(ops, features, nullptr, data.hin.labels(), {}, false, rng);
      rec.val_accuracy = accuracy(val_truth, select(predict(eval.scores.value()), data.split.validation));
    } catch (const ad::NumericError& e) {
      report.curve.push_back(rec);
      ordered_json dump = {{"epoch", epoch}, {"error", e.what()}, {"loss_curve", ordered_json::array()}};
      for (const auto& r : report.curve) {
        dump["loss_curve"].push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"supervised", r.supervised},
                                      {"selfsup", r.selfsup}, {"val_accuracy", r.val_accuracy}});
      }
      std::filesystem::create_directories(config.output_dir);
      const auto path = config.output_dir / ("diagnostic_epoch_" + std::to_string(epoch) + ".json");
      std::ofstream(path) << dump.dump(2) << '\n';
      throw Error("non-finite value at epoch " + std::to_string(epoch) + " (" + e.what() + "); dump: " +
                  path.string());
    }
    report.curve.push_back(rec);
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    report.epochs_run = epoch;

    const bool stop = stopping.update(rec.val_accuracy);
    if (stopping.improved()) {
      report.best_epoch = epoch;
      best_params.clear();
      for (const auto* p : params) best_params.push_back(p->value());
    }
    if (log && (epoch % 50 == 0 || epoch == 1)) {
      *log << "epoch " << epoch << " loss " << rec.loss << " sup " << rec.supervised << " ss " << rec.selfsup
           << " val_acc " << rec.val_accuracy << '\n';
    }
    if (stop) break;
  }
  report.last_epoch_discriminator_accuracy = discriminator_accuracy(model, data, corruption_seed(config.seed, 0));
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value() = best_params[i];
  if (log) *log << "best epoch " << report.best_epoch << " val_acc " << stopping.best() << '\n';

  report.val_accuracy = stopping.best();
  fill_predictions(model, data, report);
  if (!data.split.test.empty()) {
    const auto f1 = evaluate_objects(report, data, data.split.test);
    report.micro_f1 = f1.micro;
    report.macro_f1 = f1.macro;
  }
  report.discriminator_accuracy = discriminator_accuracy(model, data, corruption_seed(config.seed, 0));
  return result;
}

std::string metrics_json(const MetricsReport& r) {
  ordered_json j;
  j["micro_f1"] = r.micro_f1;
  j["macro_f1"] = r.macro_f1;
  j["val_accuracy"] = r.val_accuracy;
  j["discriminator_accuracy"] = r.discriminator_accuracy;
  j["last_epoch_discriminator_accuracy"] = r.last_epoch_discriminator_accuracy;
  j["best_epoch"] = r.best_epoch;
  j["epochs_run"] = r.epochs_run;
  j["mean_attention"] = ordered_json::object();
  for (std::size_t q = 0; q < r.metapaths.size(); ++q) j["mean_attention"][r.metapaths[q]] = r.mean_attention[q];
  j["loss_curve"] = ordered_json::array();
  for (const auto& e : r.curve) {
    j["loss_curve"].push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"supervised", e.supervised},
                               {"selfsup", e.selfsup}, {"val_accuracy", e.val_accuracy}});
  }
  return j.dump(2) + "\n";
}

std::string metrics_text(const MetricsReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "Micro-F1: " << r.micro_f1 << "\nMacro-F1: " << r.macro_f1 << "\nvalidation accuracy: " << r.val_accuracy
      << "\ndiscriminator accuracy: " << r.discriminator_accuracy << " (last epoch "
      << r.last_epoch_discriminator_accuracy << ")\nbest epoch: " << r.best_epoch << " of "
      << r.epochs_run << "\nmean attention:";
  for (std::size_t q = 0; q < r.metapaths.size(); ++q) out << ' ' << r.metapaths[q] << '=' << r.mean_attention[q];
  out << '\n';
  return out.str();
}

void write_run_outputs(const RunConfig& config, const PreparedData& data, const TrainResult& result) {
  std::filesystem::create_directories(config.output_dir);
  const MetricsReport& r = result.report;
  std::ofstream(config.output_dir / "metrics.json", std::ios::binary) << metrics_json(r);
  std::ofstream(config.output_dir / "metrics.txt") << metrics_text(r);
  std::ofstream(config.output_dir / "config.json") << run_config_to_json(config) << '\n';
  {
    ordered_json timing = {{"epoch_seconds", r.epoch_seconds}};
    std::ofstream(config.output_dir / "timing.json") << timing.dump(2) << '\n';
  }
  {
    std::ofstream out(config.output_dir / "attention.tsv", std::ios::binary);
    for (ObjectIndex i = 0; i < r.attention.rows(); ++i) {
      for (std::size_t q = 0; q < r.attention.cols(); ++q) {
        out << data.hin.node_name(data.hin.object_node(i)) << '\t' << r.metapaths[q] << '\t'
            << format_double(r.attention(i, q)) << '\n';
      }
    }
  }
  ad::save_checkpoint(std::as_const(*result.model).parameters(), config.output_dir / "model.ckpt");
}

MetricsReport evaluate_checkpoint(const RunConfig& config, const PreparedData& data,
                                  const std::filesystem::path& checkpoint) {
  if (data.split.test.empty()) throw Error("test split is empty");
  ConchModel model(config.model, data.hin.features().cols(), data.embeddings.dim(), data.metapaths.size(),
                   data.hin.num_classes(), config.seed);
  ad::load_checkpoint(model.parameters(), checkpoint);
  MetricsReport report;
  fill_predictions(model, data, report);
  const auto f1 = evaluate_objects(report, data, data.split.test);
  report.micro_f1 = f1.micro;
  report.macro_f1 = f1.macro;
  if (!data.split.validation.empty()) {
    report.val_accuracy = accuracy(truths(data, data.split.validation), select(report.predictions, data.split.validation));
  }
  report.discriminator_accuracy = discriminator_accuracy(model, data, corruption_seed(config.seed, 0));
  return report;
}

std::vector<Neighbor> pathsim_query(const PreparedData& data, const std::string& metapath, const std::string& node) {
  for (std::size_t q = 0; q < data.metapaths.size(); ++q) {
    if (data.metapaths[q].name != metapath) continue;
    auto obj = data.hin.find_object(node);
    if (!obj) throw Error("unknown node '" + node + "'");
    return data.neighbors[q].rows[*obj];
  }
  throw Error("unknown meta-path '" + metapath + "'");
}

}  // namespace conch
