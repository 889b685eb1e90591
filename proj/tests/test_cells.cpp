#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "esrm/cells.hpp"
#include "esrm/training.hpp"
#include "test_support.hpp"

using namespace esrm;

namespace {

Vector random_vector(int n, Prng& rng, double scale = 1.0) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("param_count matches the closed formulas") {
  CHECK(param_count(CellKind::kSimpleRnn, 512, 512) == 524800);
  CHECK(param_count(CellKind::kLstm, 512, 512) == 2099200);
  CHECK_THROWS_AS(param_count(CellKind::kLstm, 0, 4), ConfigError);
}

TEST_CASE("an lstm always costs four simple cells") {
  Prng rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    const int i = 1 + static_cast<int>(rng.next_below(64));
    const int d = 1 + static_cast<int>(rng.next_below(64));
    CHECK(param_count(CellKind::kLstm, i, d) ==
          4 * param_count(CellKind::kSimpleRnn, i, d));
  }
}

TEST_CASE("cells with zero weights produce zero states") {
  SimpleRnnCell rnn;
  rnn.input_dim = 3;
  rnn.state_dim = 4;
  rnn.w_xh = Tensor("w_xh", 4, 3);
  rnn.w_hh = Tensor("w_hh", 4, 4);
  rnn.b = Tensor("b", 4, 1);
  Prng rng(1);
  CHECK(rnn.forward(random_vector(4, rng), random_vector(3, rng)).isZero(0.0));

  LstmCell lstm;
  lstm.input_dim = 3;
  lstm.state_dim = 4;
  lstm.w_x = Tensor("w_x", 16, 3);
  lstm.w_h = Tensor("w_h", 16, 4);
  lstm.b = Tensor("b", 16, 1);
  const auto out = lstm.forward({Vector::Zero(4), Vector::Zero(4)},
                                random_vector(3, rng));
  CHECK(out.h.isZero(0.0));
  CHECK(out.c.isZero(0.0));
}

TEST_CASE("a simple cell with zero recurrence is a feedforward tanh layer") {
  Prng rng(7);
  SimpleRnnCell cell = make_simple_rnn_cell(3, 5, rng);
  cell.w_hh.value.setZero();
  const Vector x = random_vector(3, rng);
  const Vector a = cell.forward(random_vector(5, rng), x);
  const Vector b = cell.forward(random_vector(5, rng), x);
  CHECK(a == b);
  const Vector want = elem_tanh(Vector(cell.w_xh.value * x + cell.b.value.col(0)));
  CHECK(a == want);
}

TEST_CASE("lstm forward matches a scalar-loop reference on dim 2") {
  Prng rng(9);
  LstmCell cell = make_lstm_cell(2, 2, rng);
  const Vector x = random_vector(2, rng);
  const Vector h_prev = random_vector(2, rng);
  const Vector c_prev = random_vector(2, rng);
  const auto out = cell.forward({h_prev, c_prev}, x);

  // Plain scalar arithmetic, no Eigen products.
  for (int r = 0; r < 2; ++r) {
    auto gate_pre = [&](int block) {
      double z = cell.b.value(block * 2 + r, 0);
      for (int k = 0; k < 2; ++k) {
        z += cell.w_x.value(block * 2 + r, k) * x[k];
        z += cell.w_h.value(block * 2 + r, k) * h_prev[k];
      }
      return z;
    };
    const double gi = sigmoid(gate_pre(0));
    const double gf = sigmoid(gate_pre(1));
    const double gg = std::tanh(gate_pre(2));
    const double go = sigmoid(gate_pre(3));
    const double c = gf * c_prev[r] + gi * gg;
    const double h = go * std::tanh(c);
    CHECK(std::abs(out.c[r] - c) <= 1e-12);
    CHECK(std::abs(out.h[r] - h) <= 1e-12);
  }
}

TEST_CASE("lstm init uses forget bias one and bounded weights") {
  Prng rng(11);
  const LstmCell cell = make_lstm_cell(3, 4, rng);
  for (int r = 0; r < 4; ++r) CHECK(cell.b.value(4 + r, 0) == 1.0);
  const double k = 1.0 / std::sqrt(4.0);
  CHECK(cell.w_x.value.cwiseAbs().maxCoeff() < k);
  CHECK(cell.w_h.value.cwiseAbs().maxCoeff() < k);
}

TEST_CASE("zero upstream gradient leaves everything zero") {
  Prng rng(13);
  LstmCell cell = make_lstm_cell(3, 4, rng);
  LstmCell::Cache cache;
  cell.forward({random_vector(4, rng), random_vector(4, rng)},
               random_vector(3, rng), &cache);
  Vector dx, dh_prev, dc_prev;
  cell.backward(cache, Vector::Zero(4), Vector::Zero(4), dx, dh_prev, dc_prev);
  CHECK(cell.w_x.grad.isZero(0.0));
  CHECK(cell.w_h.grad.isZero(0.0));
  CHECK(cell.b.grad.isZero(0.0));
  CHECK(dx.isZero(0.0));
  CHECK(dh_prev.isZero(0.0));
  CHECK(dc_prev.isZero(0.0));
}

TEST_CASE("simple-cell input gradient has the closed form when W_hh = 0") {
  Prng rng(17);
  SimpleRnnCell cell = make_simple_rnn_cell(3, 4, rng);
  cell.w_hh.value.setZero();
  const Vector x = random_vector(3, rng);
  const Vector h_prev = random_vector(4, rng);
  SimpleRnnCell::Cache cache;
  const Vector h = cell.forward(h_prev, x, &cache);
  for (int k = 0; k < 4; ++k) {
    cell.w_xh.zero_grad();
    cell.w_hh.zero_grad();
    cell.b.zero_grad();
    Vector dx, dh;
    cell.backward(cache, Vector::Unit(4, k), dx, dh);
    const Vector want = (1.0 - h[k] * h[k]) * cell.w_xh.value.row(k).transpose();
    CHECK((dx - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("backward rejects a cache from another cell") {
  Prng rng(19);
  LstmCell cell = make_lstm_cell(3, 4, rng);
  LstmCell other = make_lstm_cell(5, 6, rng);
  LstmCell::Cache cache;
  other.forward({Vector::Zero(6), Vector::Zero(6)}, random_vector(5, rng),
                &cache);
  Vector dx, dh, dc;
  CHECK_THROWS_AS(cell.backward(cache, Vector::Zero(4), Vector::Zero(4), dx,
                                dh, dc),
                  ShapeError);
}

// BPTT over a short sequence with a random linear functional on every state;
// gradients must match central differences, which also checks that per-step
// gradients accumulate instead of overwriting.
TEST_CASE("simple-cell BPTT gradients match central differences") {
  Prng rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const int i = 1 + static_cast<int>(rng.next_below(8));
    const int d = 1 + static_cast<int>(rng.next_below(8));
    SimpleRnnCell cell = make_simple_rnn_cell(i, d, rng);
    const int steps = 3;
    std::vector<Vector> xs, weights;
    for (int t = 0; t < steps; ++t) {
      xs.push_back(random_vector(i, rng));
      weights.push_back(random_vector(d, rng));
    }
    const auto loss = [&]() {
      Vector h = Vector::Zero(d);
      double total = 0.0;
      for (int t = 0; t < steps; ++t) {
        h = cell.forward(h, xs[static_cast<std::size_t>(t)]);
        total += weights[static_cast<std::size_t>(t)].dot(h);
      }
      return total;
    };
    // Analytic pass.
    cell.w_xh.zero_grad();
    cell.w_hh.zero_grad();
    cell.b.zero_grad();
    std::vector<SimpleRnnCell::Cache> caches(steps);
    Vector h = Vector::Zero(d);
    for (int t = 0; t < steps; ++t)
      h = cell.forward(h, xs[static_cast<std::size_t>(t)],
                       &caches[static_cast<std::size_t>(t)]);
    Vector carry = Vector::Zero(d);
    for (int t = steps - 1; t >= 0; --t) {
      Vector dx, dh_prev;
      const Vector dh = weights[static_cast<std::size_t>(t)] + carry;
      cell.backward(caches[static_cast<std::size_t>(t)], dh, dx, dh_prev);
      carry = dh_prev;
    }
    std::vector<Tensor*> params{&cell.w_xh, &cell.w_hh, &cell.b};
    const auto fd = finite_diff_against(params, loss, 1e-5);
    CHECK(fd.max_rel_error <= 1e-6);
  }
}

TEST_CASE("lstm BPTT gradients match central differences") {
  Prng rng(29);
  for (int trial = 0; trial < 25; ++trial) {
    const int i = 1 + static_cast<int>(rng.next_below(8));
    const int d = 1 + static_cast<int>(rng.next_below(8));
    LstmCell cell = make_lstm_cell(i, d, rng);
    const int steps = 3;
    std::vector<Vector> xs, weights;
    for (int t = 0; t < steps; ++t) {
      xs.push_back(random_vector(i, rng));
      weights.push_back(random_vector(d, rng));
    }
    const auto loss = [&]() {
      LstmCell::State st{Vector::Zero(d), Vector::Zero(d)};
      double total = 0.0;
      for (int t = 0; t < steps; ++t) {
        st = cell.forward(st, xs[static_cast<std::size_t>(t)]);
        total += weights[static_cast<std::size_t>(t)].dot(st.h);
      }
      return total;
    };
    cell.w_x.zero_grad();
    cell.w_h.zero_grad();
    cell.b.zero_grad();
    std::vector<LstmCell::Cache> caches(steps);
    LstmCell::State st{Vector::Zero(d), Vector::Zero(d)};
    for (int t = 0; t < steps; ++t)
      st = cell.forward(st, xs[static_cast<std::size_t>(t)],
                        &caches[static_cast<std::size_t>(t)]);
    Vector dh_carry = Vector::Zero(d);
    Vector dc_carry = Vector::Zero(d);
    for (int t = steps - 1; t >= 0; --t) {
      Vector dx, dh_prev, dc_prev;
      const Vector dh = weights[static_cast<std::size_t>(t)] + dh_carry;
      cell.backward(caches[static_cast<std::size_t>(t)], dh, dc_carry, dx,
                    dh_prev, dc_prev);
      dh_carry = dh_prev;
      dc_carry = dc_prev;
    }
    std::vector<Tensor*> params{&cell.w_x, &cell.w_h, &cell.b};
    const auto fd = finite_diff_against(params, loss, 1e-5);
    CHECK(fd.max_rel_error <= 1e-6);
  }
}
