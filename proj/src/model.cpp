#include "conch/model.hpp"

#include "conch/optim.hpp"

#include <tuple>

namespace conch {

using ad::Tensor;

void ModelConfig::validate() const {
  if (layers < 1) throw Error("model: layers must be >= 1");
  if (dim < 1 || hidden_dim < 1 || attention_dim < 1) throw Error("model: dimensions must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("model: dropout must be in [0, 1)");
  if (lambda < 0.0) throw Error("model: lambda must be >= 0");
  if (weight_decay < 0.0) throw Error("model: weight_decay must be >= 0");
  if (k < 1) throw Error("model: k must be >= 1");
}

BipartiteOperators BipartiteOperators::from_graph(const ContextGraph& graph) {
  const std::size_t m = graph.num_contexts();
  const std::size_t n = graph.num_objects;
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> triplets;
  triplets.reserve(2 * m);
  for (std::size_t j = 0; j < m; ++j) {
    triplets.emplace_back(static_cast<std::uint32_t>(j), graph.first[j], 1.0);
    triplets.emplace_back(static_cast<std::uint32_t>(j), graph.second[j], 1.0);
  }
  auto gather = ad::SparseOperator::from_triplets(m, n, std::move(triplets));
  BipartiteOperators ops;
  ops.num_objects = n;
  ops.context_sum = std::make_shared<const ad::SparseOperator>(gather.transposed());
  ops.endpoint_sum = std::make_shared<const ad::SparseOperator>(std::move(gather));
  ops.context_features = graph.features;
  return ops;
}

Tensor DropoutSpec::apply(const Tensor& t) const {
  if (!train || rng == nullptr || rate == 0.0) return t;
  return ad::dropout(t, rate, *rng, true);
}

Tensor context_update(const Tensor& objects, const Tensor& contexts, const BipartiteOperators& ops,
                      const LayerParams& p) {
  // W1 h_u + W1 h_v = W1 (h_u + h_v); the sum is formed first so swapping
  // the endpoints is bit-for-bit neutral.
  Tensor endpoints = ad::spmm(ops.endpoint_sum, objects);
  return ad::relu(ad::matmul_bt(endpoints, p.w1.tensor()) + ad::matmul_bt(contexts, p.w2.tensor()));
}

Tensor object_update(const Tensor& objects, const Tensor& contexts, const BipartiteOperators& ops,
                     const LayerParams& p) {
  Tensor summed = ad::spmm(ops.context_sum, contexts);
  return ad::relu(ad::matmul_bt(summed, p.w3.tensor()) + ad::matmul_bt(objects, p.w4.tensor()));
}

Tensor encode_metapath(const BipartiteOperators& ops, const Tensor& object_features,
                       std::span<const LayerParams> layers, const DropoutSpec& drop) {
  Tensor objects = object_features;
  Tensor contexts = Tensor::constant(ops.context_features);
  for (const LayerParams& p : layers) {
    Tensor obj_in = drop.apply(objects);
    Tensor ctx_in = drop.apply(contexts);
    Tensor next_contexts = context_update(obj_in, ctx_in, ops, p);
    objects = object_update(obj_in, ctx_in, ops, p);
    contexts = next_contexts;
  }
  return objects;
}

AttentionResult semantic_attention(std::span<const Tensor> per_metapath, const AttentionParams& p,
                                   double leaky_slope) {
  if (per_metapath.empty()) throw Error("semantic_attention needs at least one meta-path embedding");
  std::vector<Tensor> scores;
  scores.reserve(per_metapath.size());
  for (const Tensor& h : per_metapath) {
    Tensor hidden = ad::tanh(ad::matmul_bt(h, p.w6.tensor()));
    Tensor act = ad::leaky_relu(ad::matmul_bt(hidden, p.w5.tensor()), leaky_slope);
    scores.push_back(ad::matmul_bt(act, p.a.tensor()));
  }
  Tensor weights = ad::softmax(ad::concat_cols(scores), 1);
  Tensor fused = ad::mul_rows(per_metapath[0], ad::column(weights, 0));
  for (std::size_t q = 1; q < per_metapath.size(); ++q) {
    fused = fused + ad::mul_rows(per_metapath[q], ad::column(weights, q));
  }
  return {ad::relu(fused), weights};
}

Tensor classify(const Tensor& z, const HeadParams& p, const DropoutSpec& drop) {
  Tensor hidden = drop.apply(ad::relu(ad::matmul_bt(z, p.w8.tensor())));
  return ad::matmul_bt(hidden, p.w7.tensor());
}

std::vector<int> predict(const Matrix& scores) {
  std::vector<int> out(scores.rows(), 0);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best)) best = c;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

Tensor supervised_loss(const Tensor& scores, std::span<const int> labels, std::span<const ObjectIndex> train) {
  if (train.empty()) throw Error("supervised_loss: empty training set");
  std::vector<std::uint32_t> rows;
  std::vector<std::uint32_t> cols;
  rows.reserve(train.size());
  cols.reserve(train.size());
  for (ObjectIndex i : train) {
    if (labels[i] < 0) throw Error("supervised_loss: training object without label");
    rows.push_back(i);
    cols.push_back(static_cast<std::uint32_t>(labels[i]));
  }
  return ad::scale(ad::sum(ad::pick(ad::log_softmax(scores, 1), rows, cols)), -1.0);
}

Tensor summary_vector(const Tensor& z) { return ad::row_mean(z); }

Tensor discriminator_logits(const Tensor& z, const Tensor& s, const ad::Parameter& w_d) {
  return ad::matmul_bt(z, ad::matmul_bt(s, w_d.tensor()));
}

Tensor discriminate(const Tensor& z, const Tensor& s, const ad::Parameter& w_d) {
  return ad::sigmoid(discriminator_logits(z, s, w_d));
}

Tensor selfsup_loss(const Tensor& positive, const Tensor& negative, const Tensor& s, const ad::Parameter& w_d) {
  const double count = static_cast<double>(positive.rows() + negative.rows());
  Tensor pos = ad::sum(ad::log_sigmoid(discriminator_logits(positive, s, w_d)));
  // log(1 - sigmoid(x)) = log_sigmoid(-x)
  Tensor neg = ad::sum(ad::log_sigmoid(ad::scale(discriminator_logits(negative, s, w_d), -1.0)));
  return ad::scale(pos + neg, -1.0 / count);
}

Tensor total_loss(const Tensor& supervised, const Tensor& selfsup, double lambda, const Tensor& penalty,
                  double weight_decay) {
  if (lambda < 0.0) throw Error("total_loss: lambda must be >= 0");
  return supervised + ad::scale(selfsup, lambda) + ad::scale(penalty, weight_decay);
}

// ---------------------------------------------------------------------------

ConchModel::ConchModel(const ModelConfig& config, std::size_t feature_dim, std::size_t context_dim,
                       std::size_t num_metapaths, std::size_t num_classes, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  if (num_metapaths < 1) throw Error("model needs at least one meta-path");
  if (num_classes < 2) throw Error("model needs at least two classes");
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.dim;
  auto param = [&](std::string name, std::size_t rows, std::size_t cols) {
    return ad::Parameter(std::move(name), ad::glorot_init(rows, cols, rng));
  };
  layers_.resize(num_metapaths);
  for (std::size_t q = 0; q < num_metapaths; ++q) {
    for (std::size_t t = 0; t < config_.layers; ++t) {
      const std::size_t obj_in = t == 0 ? feature_dim : d;
      const std::size_t ctx_in = t == 0 ? context_dim : d;
      const std::string prefix = "mp" + std::to_string(q) + ".layer" + std::to_string(t) + ".";
      layers_[q].push_back(LayerParams{param(prefix + "W1", d, obj_in), param(prefix + "W2", d, ctx_in),
                                       param(prefix + "W3", d, ctx_in), param(prefix + "W4", d, obj_in)});
    }
  }
  attention_ = std::make_unique<AttentionParams>(AttentionParams{
      param("attention.W6", config_.attention_dim, d), param("attention.W5", config_.attention_dim, config_.attention_dim),
      param("attention.a", 1, config_.attention_dim)});
  head_ = std::make_unique<HeadParams>(
      HeadParams{param("head.W8", config_.hidden_dim, d), param("head.W7", num_classes, config_.hidden_dim)});
  w_d_ = std::make_unique<ad::Parameter>(param("discriminator.WD", d, d));
}

std::vector<const ad::Parameter*> ConchModel::parameters() const {
  std::vector<const ad::Parameter*> out;
  for (const auto& mp : layers_) {
    for (const auto& l : mp) {
      out.insert(out.end(), {&l.w1, &l.w2, &l.w3, &l.w4});
    }
  }
  out.insert(out.end(), {&attention_->w6, &attention_->w5, &attention_->a, &head_->w8, &head_->w7, w_d_.get()});
  return out;
}

std::vector<ad::Parameter*> ConchModel::parameters() {
  std::vector<ad::Parameter*> out;
  for (const ad::Parameter* p : std::as_const(*this).parameters()) out.push_back(const_cast<ad::Parameter*>(p));
  return out;
}

ConchModel::Branch ConchModel::encode_branch(std::span<const BipartiteOperators> graphs, const Tensor& features,
                                             const DropoutSpec& drop, std::vector<const ad::Node*>& used) const {
  std::vector<Tensor> per_metapath;
  per_metapath.reserve(graphs.size());
  for (std::size_t q = 0; q < graphs.size(); ++q) {
    for (const auto& l : layers_[q]) {
      used.insert(used.end(), {l.w1.id(), l.w2.id(), l.w3.id(), l.w4.id()});
    }
    per_metapath.push_back(encode_metapath(graphs[q], features, layers_[q], drop));
  }
  used.insert(used.end(), {attention_->w6.id(), attention_->w5.id(), attention_->a.id()});
  auto fused = semantic_attention(per_metapath, *attention_, config_.leaky_slope);
  return {fused.z, fused.weights};
}

ForwardOutput ConchModel::forward(std::span<const BipartiteOperators> graphs, const Matrix& features,
                                  const Matrix* corrupted, std::span<const int> labels,
                                  std::span<const ObjectIndex> train, bool train_mode, std::mt19937_64& rng) const {
  if (graphs.size() != layers_.size()) {
    throw Error("forward: expected " + std::to_string(layers_.size()) + " graphs, got " +
                std::to_string(graphs.size()));
  }
  const DropoutSpec drop{config_.dropout, train_mode, &rng};
  ForwardOutput out;
  Branch pos = encode_branch(graphs, Tensor::constant(features), drop, out.positive_params);
  out.z = pos.z;
  out.attention = pos.weights;
  out.scores = classify(pos.z, *head_, drop);
  out.summary = summary_vector(pos.z);
  if (corrupted != nullptr) {
    Branch neg = encode_branch(graphs, Tensor::constant(*corrupted), drop, out.negative_params);
    out.z_negative = neg.z;
    out.attention_negative = neg.weights;
  }
  if (train.empty()) return out;

  out.loss_supervised = supervised_loss(out.scores, labels, train);
  if (corrupted != nullptr) {
    out.loss_selfsup = selfsup_loss(out.z, out.z_negative, out.summary, *w_d_);
  } else {
    out.loss_selfsup = Tensor::constant(Matrix(1, 1, 0.0));
  }
  out.penalty = ad::l2_penalty(parameters());
  out.loss = total_loss(out.loss_supervised, out.loss_selfsup, config_.effective_lambda(), out.penalty,
                        config_.weight_decay);
  return out;
}

}  // namespace conch
