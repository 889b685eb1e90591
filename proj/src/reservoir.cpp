#include "esrm/reservoir.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace esrm {

namespace {

constexpr std::uint64_t kStreamWres = 0x5245531ULL;
constexpr std::uint64_t kStreamWin = 0x494E501ULL;
constexpr int kRadiusIters = 5000;
constexpr double kRadiusTol = 1e-10;

SpMat random_sparse(int rows, int cols, double sparsity, double lo, double hi,
                    Prng rng) {
  const std::int64_t total = static_cast<std::int64_t>(rows) * cols;
  const std::int64_t nnz = reservoir_nonzeros(rows, cols, sparsity);
  const auto positions = sample_without_replacement(total, nnz, rng);
  std::vector<Triplet> entries;
  entries.reserve(positions.size());
  for (const std::int64_t p : positions) {
    const int r = static_cast<int>(p / cols);
    const int c = static_cast<int>(p % cols);
    entries.emplace_back(r, c, rng.uniform(lo, hi));
  }
  return sparse_from_triplets(rows, cols, entries);
}

void validate(const ReservoirConfig& cfg) {
  if (cfg.state_dim <= 0)
    throw ConfigError("reservoir: state_dim must be positive");
  if (cfg.input_dim <= 0)
    throw ConfigError("reservoir: input_dim must be positive");
  if (!(cfg.sparsity >= 0.0 && cfg.sparsity < 1.0))
    throw ConfigError("reservoir: sparsity must lie in [0, 1)");
  if (!(cfg.init_lo < cfg.init_hi))
    throw ConfigError("reservoir: need init_lo < init_hi");
}

}  // namespace

std::int64_t reservoir_nonzeros(int rows, int cols, double sparsity) {
  return std::llround((1.0 - sparsity) * static_cast<double>(rows) *
                      static_cast<double>(cols));
}

ReservoirLayer generate_reservoir(const ReservoirConfig& cfg) {
  validate(cfg);
  Prng base(cfg.seed);
  SpMat w_res = random_sparse(cfg.state_dim, cfg.state_dim, cfg.sparsity,
                              cfg.init_lo, cfg.init_hi, base.split(kStreamWres));
  SpMat w_in = random_sparse(cfg.state_dim, cfg.input_dim, cfg.sparsity,
                             cfg.init_lo, cfg.init_hi, base.split(kStreamWin));
  if (cfg.normalize_radius) {
    double radius;
    try {
      radius = estimate_spectral_radius(w_res, kRadiusIters, kRadiusTol);
    } catch (const ConvergenceError& e) {
      throw GenerationError(std::string("generate_reservoir: ") + e.what());
    }
    if (radius == 0.0)
      throw GenerationError(
          "generate_reservoir: recurrence has zero spectral radius, cannot "
          "normalize (state_dim or density too small)");
    w_res *= 1.0 / radius;
  }

  ReservoirLayer layer;
  layer.w_res = std::move(w_res);
  layer.w_in = std::move(w_in);
  layer.rho = Tensor("rho", 1, 1);
  layer.gamma = Tensor("gamma", 1, 1);
  layer.rho.value(0, 0) = 0.9;
  layer.gamma.value(0, 0) = 1.0;
  layer.config = cfg;
  return layer;
}

Vector esn_step(const ReservoirLayer& layer, const Vector& h_prev,
                const Vector& x) {
  if (h_prev.size() != layer.w_res.cols())
    throw ShapeError("esn_step: state length " + std::to_string(h_prev.size()) +
                     " != state_dim " + std::to_string(layer.w_res.cols()));
  if (x.size() != layer.w_in.cols())
    throw ShapeError("esn_step: input length " + std::to_string(x.size()) +
                     " != input_dim " + std::to_string(layer.w_in.cols()));
  const Vector pre = layer.rho_value() * (layer.w_res * h_prev) +
                     layer.gamma_value() * (layer.w_in * x);
  return elem_tanh(pre);
}

std::vector<Matrix> esn_forward(const DeepEsn& stack, const Matrix& inputs,
                                const std::vector<Vector>* h0) {
  if (stack.layers.empty()) throw ConfigError("esn_forward: empty stack");
  if (inputs.rows() == 0) throw EmptyInputError("esn_forward: empty sequence");
  if (inputs.cols() != stack.layers.front().input_dim())
    throw ShapeError("esn_forward: input width does not match layer 0");
  for (std::size_t l = 1; l < stack.layers.size(); ++l) {
    if (stack.layers[l].input_dim() != stack.layers[l - 1].state_dim())
      throw ShapeError("esn_forward: layer " + std::to_string(l) +
                       " input_dim does not match layer " +
                       std::to_string(l - 1) + " state_dim");
  }

  const Eigen::Index steps = inputs.rows();
  const std::size_t depth = stack.layers.size();
  std::vector<Vector> h(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    if (h0) {
      if ((*h0)[l].size() != stack.layers[l].state_dim())
        throw ShapeError("esn_forward: bad initial state for layer " +
                         std::to_string(l));
      h[l] = (*h0)[l];
    } else {
      h[l] = Vector::Zero(stack.layers[l].state_dim());
    }
  }

  std::vector<Matrix> states(depth);
  for (std::size_t l = 0; l < depth; ++l)
    states[l] = Matrix(steps, stack.layers[l].state_dim());

  for (Eigen::Index t = 0; t < steps; ++t) {
    Vector x = inputs.row(t).transpose();
    for (std::size_t l = 0; l < depth; ++l) {
      h[l] = esn_step(stack.layers[l], h[l], l == 0 ? x : states[l - 1].row(t).transpose());
      states[l].row(t) = h[l].transpose();
    }
  }
  return states;
}

std::vector<double> check_echo_state_property(const ReservoirLayer& layer,
                                              const Matrix& inputs,
                                              std::uint64_t seed_a,
                                              std::uint64_t seed_b) {
  if (inputs.rows() < 1)
    throw EmptyInputError("check_echo_state_property: need at least one input");
  if (inputs.cols() != layer.input_dim())
    throw ShapeError("check_echo_state_property: input width mismatch");

  const int d = layer.state_dim();
  Prng rng_a(seed_a);
  Prng rng_b(seed_b);
  Vector ha(d), hb(d);
  for (int i = 0; i < d; ++i) ha[i] = rng_a.uniform(-1.0, 1.0);
  for (int i = 0; i < d; ++i) hb[i] = rng_b.uniform(-1.0, 1.0);

  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(inputs.rows()) + 1);
  curve.push_back((ha - hb).norm());
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    const Vector x = inputs.row(t).transpose();
    ha = esn_step(layer, ha, x);
    hb = esn_step(layer, hb, x);
    curve.push_back((ha - hb).norm());
  }
  return curve;
}

bool reservoir_matches_config(const ReservoirLayer& layer) {
  const ReservoirLayer fresh = generate_reservoir(layer.config);
  return sparse_bit_equal(layer.w_res, fresh.w_res) &&
         sparse_bit_equal(layer.w_in, fresh.w_in);
}

}  // namespace esrm
