#include "conch/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <unordered_set>

namespace conch::ad {

void Node::accumulate(const Matrix& g) {
  if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
  auto& dst = grad.data();
  const auto& src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Matrix Tensor::grad() const {
  if (node_->grad.empty()) return Matrix(node_->value.rows(), node_->value.cols());
  return node_->grad;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar tensor " + value().shape_string());
  return value()(0, 0);
}

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("backward() needs a scalar loss, got " + value().shape_string());
  if (node_->backward_done) throw Error("backward() called twice on the same graph");
  node_->backward_done = true;
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Matrix(1, 1, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Parameter::Parameter(std::string name, Matrix init) : name_(std::move(name)), node_(std::make_shared<Node>()) {
  node_->value = std::move(init);
  node_->requires_grad = true;
}

void Parameter::zero_grad() { node_->grad = Matrix(); }

// ---------------------------------------------------------------------------

SparseOperator SparseOperator::from_triplets(std::size_t rows, std::size_t cols,
                                             std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> triplets) {
  std::stable_sort(triplets.begin(), triplets.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
  SparseOperator op;
  op.rows = rows;
  op.cols = cols;
  op.row_ptr.assign(rows + 1, 0);
  for (const auto& [r, c, v] : triplets) {
    if (r >= rows || c >= cols) throw ShapeError("sparse triplet out of range");
    ++op.row_ptr[r + 1];
    op.col_idx.push_back(c);
    op.values.push_back(v);
  }
  for (std::size_t r = 0; r < rows; ++r) op.row_ptr[r + 1] += op.row_ptr[r];
  return op;
}

SparseOperator SparseOperator::transposed() const {
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> t;
  t.reserve(values.size());
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) t.emplace_back(col_idx[p], r, values[p]);
  }
  return from_triplets(cols, rows, std::move(t));
}

Matrix SparseOperator::apply(const Matrix& x) const {
  if (x.rows() != cols) throw ShapeError("sparse apply shape mismatch");
  Matrix y(rows, x.cols());
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* out = y.data().data() + r * d;
    for (std::uint32_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) {
      const double v = values[p];
      const double* in = x.data().data() + std::size_t{col_idx[p]} * d;
      for (std::size_t j = 0; j < d; ++j) out[j] += v * in[j];
    }
  }
  return y;
}

// ---------------------------------------------------------------------------

namespace {

void check_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_string() + " vs " +
                     b.value().shape_string());
  }
}

Tensor make(Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> backward, const char* op) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Applies f elementwise; df(x, y) gives the local derivative from input x
// and output y.
template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df, const char* op) {
  Matrix out(a.rows(), a.cols());
  const auto& in = a.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out.data()[i] = f(in[i]);
  return make(std::move(out), {a},
              [df](Node& self) {
                Node& x = *self.inputs[0];
                if (!x.requires_grad) return;
                Matrix g(x.value.rows(), x.value.cols());
                for (std::size_t i = 0; i < g.size(); ++i) {
                  g.data()[i] = self.grad.data()[i] * df(x.value.data()[i], self.value.data()[i]);
                }
                x.accumulate(g);
              },
              op);
}

double stable_log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + a.value().shape_string() + " * " + b.value().shape_string());
  }
  return make(conch::matmul(a.value(), b.value()), {a, b},
              [](Node& self) {
                Node& x = *self.inputs[0];
                Node& y = *self.inputs[1];
                if (x.requires_grad) x.accumulate(conch::matmul_bt(self.grad, y.value));
                if (y.requires_grad) y.accumulate(conch::matmul_at(x.value, self.grad));
              },
              "matmul");
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt: shape mismatch " + a.value().shape_string() + " * " + b.value().shape_string() +
                     "^T");
  }
  return make(conch::matmul_bt(a.value(), b.value()), {a, b},
              [](Node& self) {
                Node& x = *self.inputs[0];
                Node& y = *self.inputs[1];
                if (x.requires_grad) x.accumulate(conch::matmul(self.grad, y.value));
                if (y.requires_grad) y.accumulate(conch::matmul_at(self.grad, x.value));
              },
              "matmul_bt");
}

Tensor transpose(const Tensor& a) {
  return make(conch::transpose(a.value()), {a},
              [](Node& self) {
                Node& x = *self.inputs[0];
                if (x.requires_grad) x.accumulate(conch::transpose(self.grad));
              },
              "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.value().data()[i];
  return make(std::move(out), {a, b},
              [](Node& self) {
                for (auto& in : self.inputs) {
                  if (in->requires_grad) in->accumulate(self.grad);
                }
              },
              "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  return make(std::move(out), {a, b},
              [](Node& self) {
                Node& x = *self.inputs[0];
                Node& y = *self.inputs[1];
                if (x.requires_grad) x.accumulate(self.grad);
                if (y.requires_grad) {
                  Matrix g = self.grad;
                  for (double& v : g.data()) v = -v;
                  y.accumulate(g);
                }
              },
              "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return make(std::move(out), {a, b},
              [](Node& self) {
                Node& x = *self.inputs[0];
                Node& y = *self.inputs[1];
                if (x.requires_grad) {
                  Matrix g = self.grad;
                  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= y.value.data()[i];
                  x.accumulate(g);
                }
                if (y.requires_grad) {
                  Matrix g = self.grad;
                  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= x.value.data()[i];
                  y.accumulate(g);
                }
              },
              "mul");
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; },
               "relu");
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(a, [slope](double x) { return x > 0 ? x : slope * x; },
               [slope](double x, double) { return x > 0 ? 1.0 : slope; }, "leaky_relu");
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(a, stable_log_sigmoid, [](double x, double) { return stable_sigmoid(-x); }, "log_sigmoid");
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

namespace {

// Visits the slices along `axis` as (start, stride, count).
template <class F>
void for_each_slice(const Matrix& m, int axis, F f) {
  if (axis == 1) {
    for (std::size_t r = 0; r < m.rows(); ++r) f(r * m.cols(), std::size_t{1}, m.cols());
  } else if (axis == 0) {
    for (std::size_t c = 0; c < m.cols(); ++c) f(c, m.cols(), m.rows());
  } else {
    throw ShapeError("softmax axis must be 0 or 1");
  }
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  Matrix out(a.rows(), a.cols());
  const auto& in = a.value().data();
  for_each_slice(a.value(), axis, [&](std::size_t start, std::size_t stride, std::size_t count) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < count; ++i) mx = std::max(mx, in[start + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double e = std::exp(in[start + i * stride] - mx);
      out.data()[start + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < count; ++i) out.data()[start + i * stride] /= total;
  });
  return make(std::move(out), {a},
              [axis](Node& self) {
                Node& x = *self.inputs[0];
                if (!x.requires_grad) return;
                Matrix g(x.value.rows(), x.value.cols());
                const auto& y = self.value.data();
                const auto& gy = self.grad.data();
                for_each_slice(self.value, axis, [&](std::size_t start, std::size_t stride, std::size_t count) {
                  double dot = 0.0;
                  for (std::size_t i = 0; i < count; ++i) dot += gy[start + i * stride] * y[start + i * stride];
                  for (std::size_t i = 0; i < count; ++i) {
                    const std::size_t k = start + i * stride;
                    g.data()[k] = y[k] * (gy[k] - dot);
                  }
                });
                x.accumulate(g);
              },
              "softmax");
}

Tensor log_softmax(const Tensor& a, int axis) {
  Matrix out(a.rows(), a.cols());
  const auto& in = a.value().data();
  for_each_slice(a.value(), axis, [&](std::size_t start, std::size_t stride, std::size_t count) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < count; ++i) mx = std::max(mx, in[start + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) total += std::exp(in[start + i * stride] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t i = 0; i < count; ++i) out.data()[start + i * stride] = in[start + i * stride] - lse;
  });
  return make(std::move(out), {a},
              [axis](Node& self) {
                Node& x = *self.inputs[0];
                if (!x.requires_grad) return;
                Matrix g(x.value.rows(), x.value.cols());
                const auto& y = self.value.data();
                const auto& gy = self.grad.data();
                for_each_slice(self.value, axis, [&](std::size_t start, std::size_t stride, std::size_t count) {
                  double total = 0.0;
                  for (std::size_t i = 0; i < count; ++i) total += gy[start + i * stride];
                  for (std::size_t i = 0; i < count; ++i) {
                    const std::size_t k = start + i * stride;
                    g.data()[k] = gy[k] - std::exp(y[k]) * total;
                  }
                });
                x.accumulate(g);
              },
              "log_softmax");
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng, bool train) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& m : mask.data()) m = u(rng) >= rate ? keep_scale : 0.0;
  return mul(a, Tensor::constant(std::move(mask)));
}

Tensor row_mean(const Tensor& a) {
  if (a.rows() == 0) throw ShapeError("row_mean of empty tensor");
  Matrix out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a.value()(r, c);
  }
  const double inv = 1.0 / static_cast<double>(a.rows());
  for (double& v : out.data()) v *= inv;
  return make(std::move(out), {a},
              [inv](Node& self) {
                Node& x = *self.inputs[0];
                if (!x.requires_grad) return;
                Matrix g(x.value.rows(), x.value.cols());
                for (std::size_t r = 0; r < g.rows(); ++r) {
                  for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = self.grad(0, c) * inv;
                }
                x.accumulate(g);
              },
              "row_mean");
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return make(Matrix(1, 1, total), {a},
              [](Node& self) {
                Node& x = *self.inputs[0];
                if (x.requires_grad) x.accumulate(Matrix(x.value.rows(), x.value.cols(), self.grad(0, 0)));
              },
              "sum");
}

Tensor sum_squares(const Tensor& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v * v;
  return make(Matrix(1, 1, total), {a},
              [](Node& self) {
                Node& x = *self.inputs[0];
                if (!x.requires_grad) return;
                Matrix g = x.value;
                const double s = 2.0 * self.grad(0, 0);
                for (double& v : g.data()) v *= s;
                x.accumulate(g);
              },
              "sum_squares");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < p.cols(); ++c) out(r, off + c) = p.value()(r, c);
    }
    off += p.cols();
  }
  return make(std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
              [offsets](Node& self) {
                for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                  Node& x = *self.inputs[k];
                  if (!x.requires_grad) continue;
                  Matrix g(x.value.rows(), x.value.cols());
                  for (std::size_t r = 0; r < g.rows(); ++r) {
                    for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = self.grad(r, offsets[k] + c);
                  }
                  x.accumulate(g);
                }
              },
              "concat_cols");
}

Tensor column(const Tensor& a, std::size_t j) {
  if (j >= a.cols()) throw ShapeError("column index out of range");
  Matrix out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r) out(r, 0) = a.value()(r, j);
  return make(std::move(out), {a},
              [j](Node& self) {
                Node& x = *self.inputs[0];
                if (!x.requires_grad) return;
                Matrix g(x.value.rows(), x.value.cols());
                for (std::size_t r = 0; r < g.rows(); ++r) g(r, j) = self.grad(r, 0);
                x.accumulate(g);
              },
              "column");
}

Tensor mul_rows(const Tensor& a, const Tensor& w) {
  if (w.rows() != a.rows() || w.cols() != 1) {
    throw ShapeError("mul_rows: weights " + w.value().shape_string() + " for " + a.value().shape_string());
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (double& v : out.row(r)) v *= w.value()(r, 0);
  }
  return make(std::move(out), {a, w},
              [](Node& self) {
                Node& x = *self.inputs[0];
                Node& wt = *self.inputs[1];
                if (x.requires_grad) {
                  Matrix g = self.grad;
                  for (std::size_t r = 0; r < g.rows(); ++r) {
                    for (double& v : g.row(r)) v *= wt.value(r, 0);
                  }
                  x.accumulate(g);
                }
                if (wt.requires_grad) {
                  Matrix g(wt.value.rows(), 1);
                  for (std::size_t r = 0; r < x.value.rows(); ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < x.value.cols(); ++c) dot += self.grad(r, c) * x.value(r, c);
                    g(r, 0) = dot;
                  }
                  wt.accumulate(g);
                }
              },
              "mul_rows");
}

Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> rows) {
  Matrix out(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) throw ShapeError("gather_rows index out of range");
    auto src = a.value().row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return make(std::move(out), {a},
              [idx](Node& self) {
                Node& x = *self.inputs[0];
                if (!x.requires_grad) return;
                Matrix g(x.value.rows(), x.value.cols());
                for (std::size_t i = 0; i < idx.size(); ++i) {
                  auto dst = g.row(idx[i]);
                  auto src = self.grad.row(i);
                  for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                }
                x.accumulate(g);
              },
              "gather_rows");
}

Tensor pick(const Tensor& a, std::span<const std::uint32_t> rows, std::span<const std::uint32_t> cols) {
  if (rows.size() != cols.size()) throw ShapeError("pick: rows/cols length mismatch");
  Matrix out(rows.size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows() || cols[i] >= a.cols()) throw ShapeError("pick index out of range");
    out(i, 0) = a.value()(rows[i], cols[i]);
  }
  std::vector<std::uint32_t> r(rows.begin(), rows.end());
  std::vector<std::uint32_t> c(cols.begin(), cols.end());
  return make(std::move(out), {a},
              [r, c](Node& self) {
                Node& x = *self.inputs[0];
                if (!x.requires_grad) return;
                Matrix g(x.value.rows(), x.value.cols());
                for (std::size_t i = 0; i < r.size(); ++i) g(r[i], c[i]) += self.grad(i, 0);
                x.accumulate(g);
              },
              "pick");
}

Tensor spmm(std::shared_ptr<const SparseOperator> op, const Tensor& a) {
  Matrix out = op->apply(a.value());
  return make(std::move(out), {a},
              [op](Node& self) {
                Node& x = *self.inputs[0];
                if (!x.requires_grad) return;
                Matrix g(x.value.rows(), x.value.cols());
                const std::size_t d = g.cols();
                for (std::size_t r = 0; r < op->rows; ++r) {
                  const double* gy = self.grad.data().data() + r * d;
                  for (std::uint32_t p = op->row_ptr[r]; p < op->row_ptr[r + 1]; ++p) {
                    double* dst = g.data().data() + std::size_t{op->col_idx[p]} * d;
                    const double v = op->values[p];
                    for (std::size_t j = 0; j < d; ++j) dst[j] += v * gy[j];
                  }
                }
                x.accumulate(g);
              },
              "spmm");
}

}  // namespace conch::ad
