#pragma once

#include "conch/config.hpp"
#include "conch/context.hpp"
#include "conch/hin.hpp"
#include "conch/metapath.hpp"
#include "conch/metrics.hpp"
#include "conch/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace conch {

// Which cached artifacts were reused by the last prepare().
struct CacheReport {
  bool embeddings_reused = false;
  std::vector<bool> neighbors_reused;
  std::vector<bool> contexts_reused;
};

struct PreparedData {
  Hin hin;
  Split split;
  std::vector<MetaPath> metapaths;
  InitialEmbeddings embeddings;
  std::vector<NeighborIndex> neighbors;
  std::vector<ContextGraph> graphs;
  CacheReport cache;
};

// Loads the dataset and builds (or reuses) neighbor indexes, embeddings and
// context graphs under <output_dir>/cache. Artifacts are keyed by a SHA-256
// over input file contents and the parameters they depend on.
PreparedData prepare(const RunConfig& config, std::ostream* log = nullptr);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double supervised = 0.0;
  double selfsup = 0.0;
  double val_accuracy = 0.0;
};

// Stops once validation accuracy has failed to exceed the best value seen
// for `patience` consecutive epochs. Ties keep the earlier best.
class EarlyStopping {
public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  // Records one epoch; returns true when training should stop.
  bool update(double val_accuracy);
  // True when the last update set a new best.
  bool improved() const noexcept { return improved_; }
  double best() const noexcept { return best_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }

private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t since_best_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = -1.0;
  bool improved_ = false;
};

struct MetricsReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double val_accuracy = 0.0;
  double discriminator_accuracy = 0.0;
  // Measured on the final epoch's parameters, before the best checkpoint is restored.
  double last_epoch_discriminator_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<std::string> metapaths;
  std::vector<double> mean_attention;  // per meta-path, over all objects
  std::vector<EpochRecord> curve;
  std::vector<double> epoch_seconds;   // wall clock, excluded from metrics.json
  Matrix attention;                    // objects x meta-paths
  std::vector<int> predictions;        // per object
};

struct TrainResult {
  std::unique_ptr<ConchModel> model;
  MetricsReport report;
};

// Full-batch training with early stopping on validation accuracy; the
// best-validation parameters are restored before evaluation.
TrainResult train(const RunConfig& config, const PreparedData& data, std::ostream* log = nullptr);

// Fraction of positives scored > 0.5 and corrupted samples scored < 0.5.
double discriminator_accuracy(const ConchModel& model, const PreparedData& data, std::uint64_t seed);

// Eval-mode predictions and attention weights for all objects.
void fill_predictions(const ConchModel& model, const PreparedData& data, MetricsReport& report);

// Micro/macro F1 over `objects`.
F1Scores evaluate_objects(const MetricsReport& report, const PreparedData& data,
                          std::span<const ObjectIndex> objects);

// metrics.json (deterministic), metrics.txt, timing.json, attention.tsv,
// config.json and model.ckpt in config.output_dir.
void write_run_outputs(const RunConfig& config, const PreparedData& data, const TrainResult& result);

std::string metrics_json(const MetricsReport& report);
std::string metrics_text(const MetricsReport& report);

// Loads a checkpoint and evaluates it on the test split.
MetricsReport evaluate_checkpoint(const RunConfig& config, const PreparedData& data,
                                  const std::filesystem::path& checkpoint);

// Neighbor list of `node` under the named meta-path.
std::vector<Neighbor> pathsim_query(const PreparedData& data, const std::string& metapath, const std::string& node);

}  // namespace conch
