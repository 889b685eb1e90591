#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "esrm/reservoir.hpp"
#include "test_support.hpp"

using namespace esrm;

namespace {

ReservoirConfig small_config(std::uint64_t seed = 11, int state = 48,
                             int input = 16) {
  ReservoirConfig cfg;
  cfg.state_dim = state;
  cfg.input_dim = input;
  cfg.seed = seed;
  return cfg;
}

Vector random_vector(int n, Prng& rng, double scale = 1.0) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

}  // namespace

TEST_CASE("80% sparsity leaves exactly 20% of entries nonzero") {
  ReservoirConfig cfg = small_config(3, 100, 40);
  const ReservoirLayer layer = generate_reservoir(cfg);
  CHECK(layer.w_res.nonZeros() == 2000);  // 0.2 * 100 * 100
  CHECK(layer.w_in.nonZeros() == 800);    // 0.2 * 100 * 40
  CHECK(reservoir_nonzeros(100, 100, 0.8) == 2000);
}

TEST_CASE("generation is deterministic in the config") {
  const ReservoirConfig cfg = small_config(77);
  const ReservoirLayer a = generate_reservoir(cfg);
  const ReservoirLayer b = generate_reservoir(cfg);
  CHECK(sparse_bit_equal(a.w_res, b.w_res));
  CHECK(sparse_bit_equal(a.w_in, b.w_in));
  CHECK(a.rho.value == b.rho.value);
  CHECK(a.gamma.value == b.gamma.value);
  CHECK(reservoir_matches_config(a));
}

TEST_CASE("different seeds give different reservoirs") {
  const ReservoirLayer a = generate_reservoir(small_config(1));
  const ReservoirLayer b = generate_reservoir(small_config(2));
  CHECK_FALSE(sparse_bit_equal(a.w_res, b.w_res));
}

TEST_CASE("normalized reservoirs have unit spectral radius") {
  for (const std::uint64_t seed : {5ULL, 6ULL, 7ULL}) {
    const ReservoirLayer layer = generate_reservoir(small_config(seed));
    CHECK(std::abs(estimate_spectral_radius(layer.w_res) - 1.0) <= 1e-6);
  }
  // Cross-check against the characteristic-polynomial oracle at a size the
  // oracle handles comfortably.
  const ReservoirLayer small = generate_reservoir(small_config(9, 10, 4));
  const double oracle =
      test_support::char_poly_spectral_radius(test_support::densify(small.w_res));
  CHECK(std::abs(oracle - 1.0) <= 1e-6);
}

TEST_CASE("initial scales are rho 0.9 and gamma 1.0") {
  const ReservoirLayer layer = generate_reservoir(small_config());
  CHECK(layer.rho_value() == 0.9);
  CHECK(layer.gamma_value() == 1.0);
  CHECK(layer.rho.trainable);
  CHECK(layer.gamma.trainable);
}

TEST_CASE("values respect the init range") {
  ReservoirConfig cfg = small_config(13);
  cfg.normalize_radius = false;  // keep raw draws
  cfg.init_lo = 0.25;
  cfg.init_hi = 0.5;
  const ReservoirLayer layer = generate_reservoir(cfg);
  for (int k = 0; k < layer.w_res.outerSize(); ++k)
    for (SpMat::InnerIterator it(layer.w_res, k); it; ++it) {
      CHECK(it.value() >= 0.25);
      CHECK(it.value() < 0.5);
    }
}

TEST_CASE("invalid configs are rejected") {
  ReservoirConfig cfg = small_config();
  cfg.state_dim = 0;
  CHECK_THROWS_AS(generate_reservoir(cfg), ConfigError);
  cfg = small_config();
  cfg.sparsity = 1.0;
  CHECK_THROWS_AS(generate_reservoir(cfg), ConfigError);
  cfg = small_config();
  cfg.init_lo = 1.0;
  cfg.init_hi = -1.0;
  CHECK_THROWS_AS(generate_reservoir(cfg), ConfigError);
}

TEST_CASE("a reservoir that cannot be normalized raises GenerationError") {
  ReservoirConfig cfg = small_config();
  cfg.state_dim = 1;  // round(0.2 * 1) = 0 nonzeros, radius 0
  cfg.input_dim = 1;
  CHECK_THROWS_AS(generate_reservoir(cfg), GenerationError);
}

TEST_CASE("esn_step maps zero state and input to zero") {
  const ReservoirLayer layer = generate_reservoir(small_config());
  const Vector h = esn_step(layer, Vector::Zero(layer.state_dim()),
                            Vector::Zero(layer.input_dim()));
  CHECK(h.isZero(0.0));
}

TEST_CASE("with rho 0 and identity input map the step is tanh(x)") {
  ReservoirLayer layer = generate_reservoir(small_config(21, 6, 6));
  layer.rho.value(0, 0) = 0.0;
  layer.gamma.value(0, 0) = 1.0;
  std::vector<Triplet> id;
  for (int i = 0; i < 6; ++i) id.emplace_back(i, i, 1.0);
  layer.w_in = sparse_from_triplets(6, 6, id);
  Prng rng(4);
  const Vector h_prev = random_vector(6, rng);
  const Vector x = random_vector(6, rng, 2.0);
  const Vector h = esn_step(layer, h_prev, x);
  for (int i = 0; i < 6; ++i) CHECK(h[i] == std::tanh(x[i]));
}

TEST_CASE("esn_step matches a dense reference") {
  Prng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    ReservoirLayer layer = generate_reservoir(small_config(100 + trial, 24, 9));
    layer.rho.value(0, 0) = rng.uniform(0.1, 1.5);
    layer.gamma.value(0, 0) = rng.uniform(0.1, 1.5);
    const Vector h_prev = random_vector(24, rng);
    const Vector x = random_vector(9, rng);
    const Vector got = esn_step(layer, h_prev, x);
    const Matrix wr = test_support::densify(layer.w_res);
    const Matrix wi = test_support::densify(layer.w_in);
    const Vector want = elem_tanh(Vector(
        layer.rho_value() * (wr * h_prev) + layer.gamma_value() * (wi * x)));
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("esn_step rejects shape mismatches") {
  const ReservoirLayer layer = generate_reservoir(small_config());
  CHECK_THROWS_AS(
      esn_step(layer, Vector::Zero(3), Vector::Zero(layer.input_dim())),
      ShapeError);
  CHECK_THROWS_AS(
      esn_step(layer, Vector::Zero(layer.state_dim()), Vector::Zero(3)),
      ShapeError);
}

TEST_CASE("single-layer esn_forward equals iterated esn_step") {
  const ReservoirLayer layer = generate_reservoir(small_config(55, 16, 8));
  DeepEsn stack;
  stack.layers.push_back(layer);
  Prng rng(6);
  Matrix inputs(5, 8);
  fill_uniform(inputs, -1.0, 1.0, rng);
  const auto states = esn_forward(stack, inputs);
  REQUIRE(states.size() == 1);
  Vector h = Vector::Zero(16);
  for (int t = 0; t < 5; ++t) {
    h = esn_step(layer, h, inputs.row(t).transpose());
    CHECK(states[0].row(t).transpose() == h);
  }
}

TEST_CASE("esn_forward with one step returns one state per layer") {
  DeepEsn stack;
  stack.layers.push_back(generate_reservoir(small_config(1, 12, 4)));
  stack.layers.push_back(generate_reservoir(small_config(2, 10, 12)));
  Prng rng(8);
  Matrix inputs(1, 4);
  fill_uniform(inputs, -1.0, 1.0, rng);
  const auto states = esn_forward(stack, inputs);
  REQUIRE(states.size() == 2);
  CHECK(states[0].rows() == 1);
  CHECK(states[1].rows() == 1);
  CHECK(states[1].cols() == 10);
}

TEST_CASE("two-layer esn_forward matches a hand-unrolled composition") {
  DeepEsn stack;
  stack.layers.push_back(generate_reservoir(small_config(3, 12, 4)));
  stack.layers.push_back(generate_reservoir(small_config(4, 10, 12)));
  Prng rng(9);
  Matrix inputs(3, 4);
  fill_uniform(inputs, -1.0, 1.0, rng);
  const auto states = esn_forward(stack, inputs);

  Vector h0 = Vector::Zero(12), h1 = Vector::Zero(10);
  for (int t = 0; t < 3; ++t) {
    h0 = esn_step(stack.layers[0], h0, inputs.row(t).transpose());
    h1 = esn_step(stack.layers[1], h1, h0);
    CHECK((states[0].row(t).transpose() - h0).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((states[1].row(t).transpose() - h1).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("esn_forward rejects an empty sequence") {
  DeepEsn stack;
  stack.layers.push_back(generate_reservoir(small_config()));
  CHECK_THROWS_AS(esn_forward(stack, Matrix(0, 16)), EmptyInputError);
}

TEST_CASE("identical start seeds give an all-zero decay curve") {
  const ReservoirLayer layer = generate_reservoir(small_config(61, 32, 8));
  Prng rng(10);
  Matrix inputs(20, 8);
  fill_uniform(inputs, -1.0, 1.0, rng);
  const auto curve = check_echo_state_property(layer, inputs, 5, 5);
  REQUIRE(curve.size() == 21);
  for (const double d : curve) CHECK(d == 0.0);
}

TEST_CASE("state distances decay below 1e-6 by step 200 at rho 0.9") {
  Prng rng(12);
  for (const std::uint64_t seed : {101ULL, 102ULL, 103ULL}) {
    const ReservoirLayer layer = generate_reservoir(small_config(seed, 64, 8));
    Matrix inputs(200, 8);
    fill_uniform(inputs, -1.0, 1.0, rng);
    const auto curve = check_echo_state_property(layer, inputs, 1, 2);
    CHECK(curve.front() > 0.0);
    CHECK(curve.back() < 1e-6);
  }
}

TEST_CASE("rho 0 wipes initial-state influence after one step") {
  ReservoirLayer layer = generate_reservoir(small_config(71, 24, 8));
  layer.rho.value(0, 0) = 0.0;
  Prng rng(14);
  Matrix inputs(5, 8);
  fill_uniform(inputs, -1.0, 1.0, rng);
  const auto curve = check_echo_state_property(layer, inputs, 3, 4);
  CHECK(curve[0] > 0.0);
  for (std::size_t t = 1; t < curve.size(); ++t) CHECK(curve[t] == 0.0);
}

TEST_CASE("states stay strictly inside (-1, 1)") {
  Prng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const ReservoirLayer layer =
        generate_reservoir(small_config(200 + trial, 64, 16));
    Vector h = random_vector(64, rng);
    for (int t = 0; t < 20; ++t) {
      h = esn_step(layer, h, random_vector(16, rng));
      CHECK(h.cwiseAbs().maxCoeff() < 1.0);
    }
  }
}

TEST_CASE("regenerating from the stored config reproduces forward outputs") {
  const ReservoirLayer original = generate_reservoir(small_config(81, 20, 6));
  const ReservoirLayer regenerated = generate_reservoir(original.config);
  DeepEsn a, b;
  a.layers.push_back(original);
  b.layers.push_back(regenerated);
  Prng rng(16);
  Matrix inputs(7, 6);
  fill_uniform(inputs, -1.0, 1.0, rng);
  const auto sa = esn_forward(a, inputs);
  const auto sb = esn_forward(b, inputs);
  CHECK(sa[0] == sb[0]);
}
