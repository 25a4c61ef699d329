#pragma once

#include "conch/autodiff.hpp"
#include "conch/context.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace conch {

struct ModelConfig {
  std::size_t layers = 2;            // L
  std::size_t dim = 128;             // object/context state size d
  std::size_t hidden_dim = 128;      // classifier hidden layer
  std::size_t attention_dim = 128;   // semantic attention MLP width
  double dropout = 0.5;
  double leaky_slope = 0.2;
  double lambda = 0.1;               // self-supervision weight
  double weight_decay = 0.0005;      // coefficient of sum ||W||^2
  std::size_t k = 5;
  bool random_neighbors = false;
  bool supervised_only = false;

  double effective_lambda() const noexcept { return supervised_only ? 0.0 : lambda; }
  void validate() const;
};

// Gather/scatter operators of one bipartite graph plus its context features.
struct BipartiteOperators {
  std::size_t num_objects = 0;
  // m x n, row j has ones at both endpoints of context j.
  std::shared_ptr<const ad::SparseOperator> endpoint_sum;
  // n x m, row x has ones at the contexts incident to x.
  std::shared_ptr<const ad::SparseOperator> context_sum;
  Matrix context_features;

  static BipartiteOperators from_graph(const ContextGraph& graph);
};

struct LayerParams {
  ad::Parameter w1;  // endpoints -> context
  ad::Parameter w2;  // context -> context
  ad::Parameter w3;  // summed contexts -> object
  ad::Parameter w4;  // object -> object
};

struct AttentionParams {
  ad::Parameter w6;  // d_a x d
  ad::Parameter w5;  // d_a x d_a
  ad::Parameter a;   // 1 x d_a
};

struct HeadParams {
  ad::Parameter w8;  // d_h x d
  ad::Parameter w7;  // r x d_h
};

// Dropout applied while encoding; inactive when rng is null or !train.
struct DropoutSpec {
  double rate = 0.0;
  bool train = false;
  std::mt19937_64* rng = nullptr;

  ad::Tensor apply(const ad::Tensor& t) const;
};

// ReLU(W1 h_u + W1 h_v + W2 h_c) for every context, batched.
ad::Tensor context_update(const ad::Tensor& objects, const ad::Tensor& contexts, const BipartiteOperators& ops,
                          const LayerParams& p);
// ReLU(W3 sum_j h_cj + W4 h_x) for every object, batched.
ad::Tensor object_update(const ad::Tensor& objects, const ad::Tensor& contexts, const BipartiteOperators& ops,
                         const LayerParams& p);

// Runs layers.size() rounds; both updates of a round read the round's input
// states. Returns final object states (n x d).
ad::Tensor encode_metapath(const BipartiteOperators& ops, const ad::Tensor& object_features,
                           std::span<const LayerParams> layers, const DropoutSpec& drop = {});

struct AttentionResult {
  ad::Tensor z;        // n x d, fused embeddings
  ad::Tensor weights;  // n x |PS|, rows sum to 1
};

AttentionResult semantic_attention(std::span<const ad::Tensor> per_metapath, const AttentionParams& p,
                                   double leaky_slope);

// Label scores W7 ReLU(W8 z), n x r.
ad::Tensor classify(const ad::Tensor& z, const HeadParams& p, const DropoutSpec& drop = {});

// Row-wise argmax, lowest index on ties.
std::vector<int> predict(const Matrix& scores);

// -sum over train objects of log softmax(scores_i)[y_i].
ad::Tensor supervised_loss(const ad::Tensor& scores, std::span<const int> labels, std::span<const ObjectIndex> train);

ad::Tensor summary_vector(const ad::Tensor& z);
// z_i^T W_D s for every row (n x 1).
ad::Tensor discriminator_logits(const ad::Tensor& z, const ad::Tensor& s, const ad::Parameter& w_d);
ad::Tensor discriminate(const ad::Tensor& z, const ad::Tensor& s, const ad::Parameter& w_d);
// Binary cross-entropy of positives against corrupted samples, averaged
// over N + M samples.
ad::Tensor selfsup_loss(const ad::Tensor& positive, const ad::Tensor& negative, const ad::Tensor& s,
                        const ad::Parameter& w_d);
ad::Tensor total_loss(const ad::Tensor& supervised, const ad::Tensor& selfsup, double lambda,
                      const ad::Tensor& penalty, double weight_decay);

struct ForwardOutput {
  ad::Tensor z;
  ad::Tensor scores;
  ad::Tensor attention;
  ad::Tensor summary;
  // Present only when corrupted features were supplied.
  ad::Tensor z_negative;
  ad::Tensor attention_negative;
  ad::Tensor loss_supervised;
  ad::Tensor loss_selfsup;
  ad::Tensor penalty;
  ad::Tensor loss;
  // Parameters touched by each branch, in visiting order.
  std::vector<const ad::Node*> positive_params;
  std::vector<const ad::Node*> negative_params;
};

class ConchModel {
public:
  ConchModel(const ModelConfig& config, std::size_t feature_dim, std::size_t context_dim,
             std::size_t num_metapaths, std::size_t num_classes, std::uint64_t seed);

  ConchModel(const ConchModel&) = delete;
  ConchModel& operator=(const ConchModel&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t num_metapaths() const noexcept { return layers_.size(); }

  // Full pass. Losses are built only when `train` objects are given (the
  // self-supervised part additionally needs `corrupted`).
  ForwardOutput forward(std::span<const BipartiteOperators> graphs, const Matrix& features, const Matrix* corrupted,
                        std::span<const int> labels, std::span<const ObjectIndex> train, bool train_mode,
                        std::mt19937_64& rng) const;

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;

  const ad::Parameter& discriminator() const noexcept { return *w_d_; }

private:
  struct Branch {
    ad::Tensor z;
    ad::Tensor weights;
  };
  Branch encode_branch(std::span<const BipartiteOperators> graphs, const ad::Tensor& features,
                       const DropoutSpec& drop, std::vector<const ad::Node*>& used) const;

  ModelConfig config_;
  std::vector<std::vector<LayerParams>> layers_;  // [metapath][layer]
  std::unique_ptr<AttentionParams> attention_;
  std::unique_ptr<HeadParams> head_;
  std::unique_ptr<ad::Parameter> w_d_;
};

}  // namespace conch
