#pragma once

#include "conch/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace conch::ad {

// Uniform in [-b, b] with b = sqrt(6 / (rows + cols)).
Matrix glorot_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng);
Matrix glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. A non-zero weight_decay adds the gradient of
// weight_decay * ||W||^2 (i.e. 2 * weight_decay * W) before the moment update.
class Adam {
public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  void step(double weight_decay = 0.0);
  void zero_grad();

  std::uint64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t t_ = 0;
};

// Sum of squared entries over all parameters, as a differentiable scalar.
Tensor l2_penalty(const std::vector<const Parameter*>& params);

// Checkpoint layout: the text line "CONCH-CKPT v1\n", then little-endian
// u32 count and per parameter: u32 name length, name bytes, u32 rows,
// u32 cols, rows*cols f64 values.
void save_checkpoint(const std::vector<const Parameter*>& params, const std::filesystem::path& file);
// Loads into parameters with matching names and shapes; all must be present.
void load_checkpoint(const std::vector<Parameter*>& params, const std::filesystem::path& file);

}  // namespace conch::ad
