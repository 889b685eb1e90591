#include "esrm/cells.hpp"

#include <cmath>
#include <string>

namespace esrm {

namespace {

Vector elem_sigmoid(const Vector& v) {
  return v.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

void check_dims(const char* who, int got, int want, const char* what) {
  if (got != want)
    throw ShapeError(std::string(who) + ": " + what + " has length " +
                     std::to_string(got) + ", expected " + std::to_string(want));
}

}  // namespace

std::int64_t param_count(CellKind kind, int input_dim, int state_dim) {
  if (input_dim <= 0 || state_dim <= 0)
    throw ConfigError("param_count: dims must be positive");
  const std::int64_t d = state_dim;
  const std::int64_t i = input_dim;
  const std::int64_t simple = d * d + d * i + d;
  return kind == CellKind::kSimpleRnn ? simple : 4 * simple;
}

Vector SimpleRnnCell::forward(const Vector& h_prev, const Vector& x,
                              Cache* cache) const {
  check_dims("SimpleRnnCell::forward", static_cast<int>(h_prev.size()),
             state_dim, "h_prev");
  check_dims("SimpleRnnCell::forward", static_cast<int>(x.size()), input_dim,
             "x");
  Vector h = elem_tanh(Vector(w_hh.value * h_prev + w_xh.value * x + b.value.col(0)));
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->h = h;
  }
  return h;
}

void SimpleRnnCell::backward(const Cache& cache, const Vector& dh, Vector& dx,
                             Vector& dh_prev) {
  if (cache.h.size() != state_dim || cache.x.size() != input_dim ||
      cache.h_prev.size() != state_dim)
    throw ShapeError("SimpleRnnCell::backward: cache does not match this cell");
  check_dims("SimpleRnnCell::backward", static_cast<int>(dh.size()), state_dim,
             "dh");
  const Vector dz =
      dh.array() * (1.0 - cache.h.array() * cache.h.array());
  w_hh.grad.noalias() += dz * cache.h_prev.transpose();
  w_xh.grad.noalias() += dz * cache.x.transpose();
  b.grad.col(0) += dz;
  dx.noalias() = w_xh.value.transpose() * dz;
  dh_prev.noalias() = w_hh.value.transpose() * dz;
}

LstmCell::State LstmCell::forward(const State& prev, const Vector& x,
                                  Cache* cache) const {
  check_dims("LstmCell::forward", static_cast<int>(prev.h.size()), state_dim,
             "h_prev");
  check_dims("LstmCell::forward", static_cast<int>(prev.c.size()), state_dim,
             "c_prev");
  check_dims("LstmCell::forward", static_cast<int>(x.size()), input_dim, "x");

  const int d = state_dim;
  const Vector z = w_x.value * x + w_h.value * prev.h + b.value.col(0);
  Vector gates(4 * d);
  gates.segment(0, d) = elem_sigmoid(z.segment(0, d));          // input
  gates.segment(d, d) = elem_sigmoid(z.segment(d, d));          // forget
  gates.segment(2 * d, d) = elem_tanh(Vector(z.segment(2 * d, d)));  // candidate
  gates.segment(3 * d, d) = elem_sigmoid(z.segment(3 * d, d));  // output

  Vector c = gates.segment(d, d).cwiseProduct(prev.c) +
             gates.segment(0, d).cwiseProduct(gates.segment(2 * d, d));
  Vector tc = elem_tanh(c);
  Vector h = gates.segment(3 * d, d).cwiseProduct(tc);

  if (cache) {
    cache->x = x;
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->gates = gates;
    cache->c = c;
    cache->tanh_c = tc;
  }
  return {std::move(h), std::move(c)};
}

void LstmCell::backward(const Cache& cache, const Vector& dh, const Vector& dc_in,
                        Vector& dx, Vector& dh_prev, Vector& dc_prev) {
  const int d = state_dim;
  if (cache.gates.size() != 4 * d || cache.x.size() != input_dim ||
      cache.h_prev.size() != d || cache.c_prev.size() != d)
    throw ShapeError("LstmCell::backward: cache does not match this cell");
  check_dims("LstmCell::backward", static_cast<int>(dh.size()), d, "dh");
  check_dims("LstmCell::backward", static_cast<int>(dc_in.size()), d, "dc");

  const auto i = cache.gates.segment(0, d).array();
  const auto f = cache.gates.segment(d, d).array();
  const auto g = cache.gates.segment(2 * d, d).array();
  const auto o = cache.gates.segment(3 * d, d).array();
  const auto tc = cache.tanh_c.array();

  const Eigen::ArrayXd dc = dc_in.array() + dh.array() * o * (1.0 - tc * tc);
  Vector dz(4 * d);
  dz.segment(0, d) = (dc * g) * i * (1.0 - i);                 // d input gate
  dz.segment(d, d) = (dc * cache.c_prev.array()) * f * (1.0 - f);  // d forget
  dz.segment(2 * d, d) = (dc * i) * (1.0 - g * g);             // d candidate
  dz.segment(3 * d, d) = (dh.array() * tc) * o * (1.0 - o);    // d output

  w_x.grad.noalias() += dz * cache.x.transpose();
  w_h.grad.noalias() += dz * cache.h_prev.transpose();
  b.grad.col(0) += dz;
  dx.noalias() = w_x.value.transpose() * dz;
  dh_prev.noalias() = w_h.value.transpose() * dz;
  dc_prev = (dc * f).matrix();
}

SimpleRnnCell make_simple_rnn_cell(int input_dim, int state_dim, Prng& rng) {
  if (input_dim <= 0 || state_dim <= 0)
    throw ConfigError("make_simple_rnn_cell: dims must be positive");
  SimpleRnnCell cell;
  cell.input_dim = input_dim;
  cell.state_dim = state_dim;
  cell.w_xh = Tensor("w_xh", state_dim, input_dim);
  cell.w_hh = Tensor("w_hh", state_dim, state_dim);
  cell.b = Tensor("b", state_dim, 1);
  const double k = 1.0 / std::sqrt(static_cast<double>(state_dim));
  fill_uniform(cell.w_xh.value, -k, k, rng);
  fill_uniform(cell.w_hh.value, -k, k, rng);
  return cell;
}

LstmCell make_lstm_cell(int input_dim, int state_dim, Prng& rng) {
  if (input_dim <= 0 || state_dim <= 0)
    throw ConfigError("make_lstm_cell: dims must be positive");
  LstmCell cell;
  cell.input_dim = input_dim;
  cell.state_dim = state_dim;
  cell.w_x = Tensor("w_x", 4 * state_dim, input_dim);
  cell.w_h = Tensor("w_h", 4 * state_dim, state_dim);
  cell.b = Tensor("b", 4 * state_dim, 1);
  const double k = 1.0 / std::sqrt(static_cast<double>(state_dim));
  fill_uniform(cell.w_x.value, -k, k, rng);
  fill_uniform(cell.w_h.value, -k, k, rng);
  cell.b.value.block(state_dim, 0, state_dim, 1).setOnes();  // forget gate
  return cell;
}

}  // namespace esrm
