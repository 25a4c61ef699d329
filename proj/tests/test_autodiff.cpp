#include "conch/autodiff.hpp"
#include "conch/optim.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

#include "doctest.h"

#include <cmath>

using namespace conch;
using namespace conch::ad;

TEST_CASE("every primitive passes the finite-difference check") {
  for (const auto& c : conch::testing::primitive_gradient_checks()) {
    INFO(c.name << " max relative error " << c.max_rel_error);
    CHECK(c.max_rel_error < 1e-4);
  }
}

TEST_CASE("relu values and gradients") {
  Parameter x("x", Matrix(1, 2, std::vector<double>{2.0, -1.0}));
  Tensor y = relu(x.tensor());
  CHECK(y.value()(0, 0) == 2.0);
  CHECK(y.value()(0, 1) == 0.0);
  sum(y).backward();
  CHECK(x.grad()(0, 0) == 1.0);
  CHECK(x.grad()(0, 1) == 0.0);
}

TEST_CASE("softmax normalization") {
  Tensor eq = softmax(Tensor::constant(Matrix(1, 2, std::vector<double>{3.0, 3.0})), 1);
  CHECK(eq.value()(0, 0) == 0.5);
  CHECK(eq.value()(0, 1) == 0.5);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m = conch::testing::random_matrix(5, 7, rng, -30.0, 30.0);
    Matrix rows = softmax(Tensor::constant(m), 1).value();
    Matrix cols = softmax(Tensor::constant(m), 0).value();
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (double v : rows.row(i)) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
    for (std::size_t j = 0; j < 7; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 5; ++i) s += cols(i, j);
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("dropout modes") {
  std::mt19937_64 rng(1);
  Matrix m = conch::testing::random_matrix(40, 50, rng);
  Tensor x = Tensor::constant(m);
  CHECK(dropout(x, 0.5, rng, false).value() == m);
  CHECK(dropout(x, 0.0, rng, true).value() == m);

  Tensor ones = Tensor::constant(Matrix(200, 100, 1.0));
  Matrix d = dropout(ones, 0.3, rng, true).value();
  double total = 0.0;
  for (double v : d.data()) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-15));
    total += v;
  }
  // Expectation preserved: mean of 20000 scaled Bernoulli draws.
  CHECK(std::abs(total / 20000.0 - 1.0) < 0.03);
  CHECK_THROWS(dropout(x, 1.0, rng, true));
}

TEST_CASE("backward basics") {
  Parameter w("w", Matrix(2, 3, 0.5));
  Parameter unused("u", Matrix(2, 2, 1.0));
  Tensor loss = sum(w.tensor());
  loss.backward();
  CHECK(w.grad() == Matrix(2, 3, 1.0));
  CHECK(unused.grad() == Matrix(2, 2, 0.0));
  CHECK_THROWS(loss.backward());
  CHECK_THROWS(w.tensor().backward());  // not a scalar
}

TEST_CASE("gradients accumulate until zero_grad") {
  Parameter w("w", Matrix(1, 2, 1.0));
  sum(w.tensor()).backward();
  sum(w.tensor()).backward();
  CHECK(w.grad() == Matrix(1, 2, 2.0));
  w.zero_grad();
  CHECK(w.grad() == Matrix(1, 2, 0.0));
}

TEST_CASE("shape errors and non-finite values are rejected") {
  Tensor a = Tensor::constant(Matrix(2, 3));
  Tensor b = Tensor::constant(Matrix(2, 2));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(mul(a, b), ShapeError);
  CHECK_THROWS_AS(log(Tensor::constant(Matrix(1, 1, 0.0))), NumericError);
  CHECK_THROWS_AS(scale(Tensor::constant(Matrix(1, 1, 1e308)), 10.0), NumericError);
}

TEST_CASE("forward and backward are reproducible") {
  auto run = [] {
    std::mt19937_64 rng(9);
    Parameter w("w", glorot_init(4, 3, 2));
    Tensor x = Tensor::constant(conch::testing::random_matrix(5, 3, rng));
    Tensor loss = sum_squares(dropout(tanh(matmul_bt(x, w.tensor())), 0.5, rng, true));
    loss.backward();
    return std::make_pair(loss.item(), w.grad());
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("glorot initialization") {
  Matrix m = glorot_init(2, 4, 1);
  for (double v : m.data()) CHECK(std::abs(v) <= 1.0);
  CHECK(glorot_init(2, 4, 1) == m);
  CHECK_FALSE(glorot_init(2, 4, 2) == m);

  Matrix big = glorot_init(100, 100, 7);
  const double bound = std::sqrt(6.0 / 200.0);
  double mean = 0.0, max_abs = 0.0;
  for (double v : big.data()) {
    mean += v;
    max_abs = std::max(max_abs, std::abs(v));
  }
  mean /= static_cast<double>(big.size());
  CHECK(max_abs <= bound);
  CHECK(max_abs > 0.95 * bound);
  CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("adam first step and zero gradient") {
  Parameter w("w", Matrix(1, 1, 0.0));
  Parameter idle("idle", Matrix(1, 1, 3.0));
  Adam opt({&w, &idle}, AdamConfig{});
  sum(w.tensor()).backward();  // g = 1
  opt.step();
  CHECK(std::abs(w.value()(0, 0) + 0.001 / (1.0 + 1e-8)) < 1e-15);
  CHECK(idle.value()(0, 0) == 3.0);
  CHECK(opt.steps() == 1);
}

TEST_CASE("adam minimizes a quadratic bowl") {
  Parameter w("w", Matrix(1, 1, 1.0));
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  Adam opt({&w}, cfg);
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    sum_squares(w.tensor()).backward();
    opt.step();
  }
  CHECK(std::abs(w.value()(0, 0)) < 1e-2);
}

TEST_CASE("adam weight decay adds 2 wd W to the gradient") {
  // With g = 0 and decay wd the first update direction follows 2 wd W, and
  // the bias-corrected step is lr * sign.
  Parameter w("w", Matrix(1, 2, std::vector<double>{2.0, -4.0}));
  Adam opt({&w}, AdamConfig{});
  opt.step(0.5);
  CHECK(std::abs(w.value()(0, 0) - (2.0 - 0.001 * 2.0 / (2.0 + 1e-8))) < 1e-15);
  CHECK(std::abs(w.value()(0, 1) - (-4.0 + 0.001 * 4.0 / (4.0 + 1e-8))) < 1e-15);

  Parameter a("a", Matrix(2, 2, 1.0)), b("b", Matrix(1, 3, 2.0));
  CHECK(l2_penalty({&a, &b}).item() == 4.0 + 12.0);
}

TEST_CASE("checkpoint round trip") {
  conch::testing::TempDir dir;
  Parameter a("layer.W1", glorot_init(3, 4, 1)), b("head.W7", glorot_init(2, 3, 2));
  save_checkpoint({&a, &b}, dir / "m.ckpt");
  const std::string bytes = conch::testing::read_file(dir / "m.ckpt");
  CHECK(bytes.rfind("CONCH-CKPT v1\n", 0) == 0);

  Parameter a2("layer.W1", Matrix(3, 4)), b2("head.W7", Matrix(2, 3));
  load_checkpoint({&b2, &a2}, dir / "m.ckpt");
  CHECK(a2.value() == a.value());
  CHECK(b2.value() == b.value());

  Parameter wrong("layer.W1", Matrix(4, 3));
  CHECK_THROWS(load_checkpoint({&wrong}, dir / "m.ckpt"));
  Parameter missing("other", Matrix(1, 1));
  CHECK_THROWS(load_checkpoint({&missing}, dir / "m.ckpt"));
  conch::testing::write_file(dir / "bad.ckpt", "nope");
  CHECK_THROWS(load_checkpoint({&a2}, dir / "bad.ckpt"));
}
