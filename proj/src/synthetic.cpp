#include "conch/synthetic.hpp"

#include "conch/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

namespace conch {

SyntheticDataset generate_synthetic(const SyntheticParams& params) {
  if (params.classes < 2) throw Error("synthetic: need at least 2 classes");
  if (params.per_class < 1 || params.aux_per_class < 1) throw Error("synthetic: sizes must be >= 1");
  if (params.p_intra < 0 || params.p_intra > 1 || params.noise < 0 || params.noise > 1) {
    throw Error("synthetic: probabilities must lie in [0, 1]");
  }
  if (params.train_fraction <= 0 || params.val_fraction < 0 || params.train_fraction + params.val_fraction >= 1) {
    throw Error("synthetic: invalid split fractions");
  }
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  HinBuilder b;
  const std::size_t n = params.classes * params.per_class;
  const std::size_t n_aux = params.classes * params.aux_per_class;
  auto item = [](std::size_t i) { return "i" + std::to_string(i); };
  auto alpha = [](std::size_t i) { return "a" + std::to_string(i); };
  auto beta = [](std::size_t i) { return "b" + std::to_string(i); };
  for (std::size_t i = 0; i < n; ++i) b.add_node(item(i), "item");
  for (std::size_t i = 0; i < n_aux; ++i) b.add_node(alpha(i), "alpha");
  for (std::size_t i = 0; i < n_aux; ++i) b.add_node(beta(i), "beta");
  b.set_target_type("item");
  for (std::size_t c = 0; c < params.classes; ++c) b.declare_label("c" + std::to_string(c));

  // Item i belongs to class i / per_class; alpha node a to a / aux_per_class.
  const double p_random =
      (params.p_intra + static_cast<double>(params.classes - 1) * params.noise) / static_cast<double>(params.classes);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ci = i / params.per_class;
    b.set_label(item(i), "c" + std::to_string(ci));
    for (std::size_t a = 0; a < n_aux; ++a) {
      const double p = (a / params.aux_per_class == ci) ? params.p_intra : params.noise;
      if (unit(rng) < p) b.add_edge("item_alpha", item(i), alpha(a));
    }
    for (std::size_t a = 0; a < n_aux; ++a) {
      if (unit(rng) < p_random) b.add_edge("item_beta", item(i), beta(a));
    }
  }

  std::vector<std::vector<double>> centroids(params.classes, std::vector<double>(params.feature_dim));
  for (auto& c : centroids) {
    for (double& v : c) v = gauss(rng);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> f = centroids[i / params.per_class];
    for (double& v : f) v += params.feature_noise * gauss(rng);
    b.set_feature_row(item(i), std::move(f));
  }

  SyntheticDataset out{std::move(b).build(), {}};
  // Stratified split: every class contributes the same fractions.
  for (std::size_t c = 0; c < params.classes; ++c) {
    std::vector<ObjectIndex> members(params.per_class);
    for (std::size_t j = 0; j < params.per_class; ++j) members[j] = static_cast<ObjectIndex>(c * params.per_class + j);
    std::shuffle(members.begin(), members.end(), rng);
    const auto per = static_cast<double>(params.per_class);
    const std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(per * params.train_fraction)));
    const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(per * params.val_fraction)));
    if (n_train + n_val >= params.per_class) throw Error("synthetic: class too small for the requested split");
    for (std::size_t j = 0; j < params.per_class; ++j) {
      auto& part = j < n_train ? out.split.train : (j < n_train + n_val ? out.split.validation : out.split.test);
      part.push_back(members[j]);
    }
  }
  for (auto* part : {&out.split.train, &out.split.validation, &out.split.test}) std::sort(part->begin(), part->end());
  return out;
}

std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
  write_hin(data.hin, dir);
  write_split(data.split, data.hin, dir / "split.tsv");
  nlohmann::ordered_json run = {
      {"nodes", "nodes.tsv"},
      {"edges", "edges.tsv"},
      {"labels", "labels.tsv"},
      {"features", "features.tsv"},
      {"split", "split.tsv"},
      {"target_type", "item"},
      {"metapaths",
       nlohmann::ordered_json::array(
           {{{"name", "P1"}, {"types", {"item", "alpha", "item"}}, {"relations", {"item_alpha", "item_alpha"}}},
            {{"name", "P2"}, {"types", {"item", "beta", "item"}}, {"relations", {"item_beta", "item_beta"}}}})},
      {"output_dir", "run"},
  };
  const auto path = dir / "run.json";
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << run.dump(2) << '\n';
  return path;
}

}  // namespace conch
