// conch: command-line driver for preprocessing, training, evaluation and
// synthetic data generation.

#include "conch/config.hpp"
#include "conch/error.hpp"
#include "conch/synthetic.hpp"
#include "conch/trainer.hpp"

#include <iostream>

#include "CLI11.hpp"

namespace {

int run_prepare(const std::string& config_path) {
  auto config = conch::load_run_config(config_path);
  auto data = conch::prepare(config, &std::cout);
  std::cout << "prepared " << data.metapaths.size() << " meta-paths for " << data.hin.num_objects()
            << " objects in " << (config.output_dir / "cache").string() << '\n';
  return 0;
}

struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::size_t> k;
  bool random_neighbors = false;
  bool supervised_only = false;
};

int run_train(const std::string& config_path, const TrainOverrides& o) {
  auto config = conch::load_run_config(config_path);
  if (o.seed) config.seed = *o.seed;
  if (o.lambda) config.model.lambda = *o.lambda;
  if (o.k) config.model.k = *o.k;
  if (o.random_neighbors) config.model.random_neighbors = true;
  if (o.supervised_only) config.model.supervised_only = true;
  config.validate();
  auto data = conch::prepare(config, &std::cout);
  auto result = conch::train(config, data, &std::cout);
  conch::write_run_outputs(config, data, result);
  std::cout << conch::metrics_text(result.report);
  std::cout << "outputs written to " << config.output_dir.string() << '\n';
  return 0;
}

int run_eval(const std::string& config_path, const std::string& checkpoint) {
  auto config = conch::load_run_config(config_path);
  auto data = conch::prepare(config, nullptr);
  auto report = conch::evaluate_checkpoint(config, data, checkpoint);
  std::cout << conch::metrics_text(report);
  return 0;
}

int run_pathsim(const std::string& config_path, const std::string& metapath, const std::string& node) {
  auto config = conch::load_run_config(config_path);
  auto data = conch::prepare(config, nullptr);
  const auto rows = conch::pathsim_query(data, metapath, node);
  if (rows.empty()) std::cout << "(no " << metapath << " neighbors)\n";
  for (const auto& nb : rows) {
    std::cout << data.hin.node_name(data.hin.object_node(nb.node)) << '\t' << conch::format_double(nb.score) << '\t'
              << nb.count << '\n';
  }
  return 0;
}

int run_synth(const std::string& out_dir, const conch::SyntheticParams& params) {
  auto data = conch::generate_synthetic(params);
  const auto run = conch::write_synthetic(data, out_dir);
  std::cout << "wrote " << data.hin.num_nodes() << " nodes, " << data.hin.num_edges() << " edges; config "
            << run.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conch: node classification on heterogeneous networks"};
  app.require_subcommand(1);

  std::string config_path;
  auto* prepare = app.add_subcommand("prepare", "Build neighbor indexes and context graphs (cached)");
  prepare->add_option("--config", config_path, "Run configuration (JSON)")->required();

  TrainOverrides overrides;
  auto* train = app.add_subcommand("train", "Train and evaluate a model");
  train->add_option("--config", config_path, "Run configuration (JSON)")->required();
  train->add_option("--seed", overrides.seed, "Random seed");
  train->add_option("--lambda", overrides.lambda, "Self-supervision weight");
  train->add_option("--k", overrides.k, "Neighbors kept per object");
  train->add_flag("--random-neighbors", overrides.random_neighbors, "Pick k random related neighbors");
  train->add_flag("--supervised-only", overrides.supervised_only, "Disable the self-supervised loss");

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval->add_option("--config", config_path, "Run configuration (JSON)")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

  std::string metapath, node;
  auto* pathsim = app.add_subcommand("pathsim", "Print an object's PathSim neighbors");
  pathsim->add_option("--config", config_path, "Run configuration (JSON)")->required();
  pathsim->add_option("--metapath", metapath, "Meta-path name")->required();
  pathsim->add_option("--node", node, "Node id")->required();

  std::string out_dir;
  conch::SyntheticParams synth_params;
  auto* synth = app.add_subcommand("synth", "Generate a planted-partition dataset");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--classes", synth_params.classes, "Number of classes")->capture_default_str();
  synth->add_option("--per-class", synth_params.per_class, "Objects per class")->capture_default_str();
  synth->add_option("--noise", synth_params.noise, "Cross-class link probability")->capture_default_str();
  synth->add_option("--p-intra", synth_params.p_intra, "Same-class link probability")->capture_default_str();
  synth->add_option("--aux-per-class", synth_params.aux_per_class, "Auxiliary nodes per class")
      ->capture_default_str();
  synth->add_option("--feature-dim", synth_params.feature_dim, "Feature dimension")->capture_default_str();
  synth->add_option("--feature-noise", synth_params.feature_noise, "Feature noise std")->capture_default_str();
  synth->add_option("--train-fraction", synth_params.train_fraction, "Training fraction")->capture_default_str();
  synth->add_option("--val-fraction", synth_params.val_fraction, "Validation fraction")->capture_default_str();
  synth->add_option("--seed", synth_params.seed, "Random seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*prepare) return run_prepare(config_path);
    if (*train) return run_train(config_path, overrides);
    if (*eval) return run_eval(config_path, checkpoint);
    if (*pathsim) return run_pathsim(config_path, metapath, node);
    if (*synth) return run_synth(out_dir, synth_params);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
