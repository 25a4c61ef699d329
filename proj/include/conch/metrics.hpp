#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace conch {

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
};

// Single-label multi-class F1. Per-class F1 = 2TP / (2TP + FP + FN), taken
// as 0 when the class never occurs in truth or prediction. Macro averages
// over all num_classes classes.
F1Scores f1_scores(std::span<const int> truth, std::span<const int> predicted, std::size_t num_classes);

double accuracy(std::span<const int> truth, std::span<const int> predicted);

}  // namespace conch
