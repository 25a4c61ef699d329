#include "conch/metrics.hpp"

#include "conch/error.hpp"

namespace conch {

F1Scores f1_scores(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw Error("f1_scores: length mismatch");
  if (truth.empty()) throw Error("f1_scores: empty evaluation set");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (t >= num_classes || p >= num_classes) throw Error("f1_scores: label out of range");
    if (t == p) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  std::size_t tp_all = 0, fp_all = 0, fn_all = 0;
  double macro = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    tp_all += tp[c];
    fp_all += fp[c];
    fn_all += fn[c];
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) macro += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  F1Scores out;
  out.macro = macro / static_cast<double>(num_classes);
  out.micro = 2.0 * static_cast<double>(tp_all) / static_cast<double>(2 * tp_all + fp_all + fn_all);
  return out;
}

double accuracy(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw Error("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace conch
