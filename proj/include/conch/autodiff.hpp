#pragma once

// Dense reverse-mode automatic differentiation over 2-D fp64 tensors.
//
// Every forward op records a node holding its value and a closure that
// pushes the node's gradient into its inputs. backward() runs the closures
// in reverse topological order from a scalar loss. Parameters are
// persistent leaf nodes whose gradients accumulate across graphs until
// zero_grad().

#include "conch/error.hpp"
#include "conch/matrix.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace conch::ad {

class NumericError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

struct Node {
  Matrix value;
  Matrix grad;  // empty until a gradient reaches the node
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool backward_done = false;

  void accumulate(const Matrix& g);
};

class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Zero matrix of the value's shape when no gradient was accumulated.
  Matrix grad() const;
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  // Reverse pass from a 1x1 tensor. Throws if already run on this graph.
  void backward() const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

private:
  std::shared_ptr<Node> node_;
};

// Trainable leaf with a stable name for checkpointing.
class Parameter {
public:
  Parameter(std::string name, Matrix init);

  const std::string& name() const noexcept { return name_; }
  Tensor tensor() const { return Tensor(node_); }
  Matrix& value() { return node_->value; }
  const Matrix& value() const { return node_->value; }
  Matrix grad() const { return Tensor(node_).grad(); }
  void zero_grad();
  const Node* id() const noexcept { return node_.get(); }

private:
  std::string name_;
  std::shared_ptr<Node> node_;
};

// Constant sparse matrix (CSR). Used to gather/scatter rows between object
// and context tensors; it is never differentiated itself.
struct SparseOperator {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> row_ptr{0};
  std::vector<std::uint32_t> col_idx;
  std::vector<double> values;

  static SparseOperator from_triplets(std::size_t rows, std::size_t cols,
                                      std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> triplets);
  SparseOperator transposed() const;
  Matrix apply(const Matrix& x) const;
};

// -- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_bt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
// axis 0: normalize each column; axis 1: normalize each row.
Tensor softmax(const Tensor& a, int axis);
Tensor log_softmax(const Tensor& a, int axis);
// Inverted dropout; identity when !train or rate == 0.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng, bool train);
Tensor row_mean(const Tensor& a);  // 1 x cols
Tensor sum(const Tensor& a);       // 1 x 1
Tensor sum_squares(const Tensor& a);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor column(const Tensor& a, std::size_t j);
// Scales row i of a (n x d) by w(i, 0) (w is n x 1).
Tensor mul_rows(const Tensor& a, const Tensor& w);
Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> rows);
// (k x 1) tensor of a(rows[i], cols[i]).
Tensor pick(const Tensor& a, std::span<const std::uint32_t> rows, std::span<const std::uint32_t> cols);
// op * a with a constant sparse operator.
Tensor spmm(std::shared_ptr<const SparseOperator> op, const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace conch::ad
