// Fixed random recurrent layers (reservoirs) and deep stacks of them.
//
// A layer holds two sparse matrices that are generated once from a seed and
// never trained, plus two trainable scalars scaling the recurrence and the
// input map. Regenerating from the same config reproduces the matrices
// bit-for-bit, which is what makes seed-only storage possible.
#pragma once

#include <cstdint>
#include <vector>

#include "esrm/numerics.hpp"
#include "esrm/tensor.hpp"

namespace esrm {

struct ReservoirConfig {
  int state_dim = 0;
  int input_dim = 0;
  double sparsity = 0.8;  // fraction of entries forced to zero
  double init_lo = -1.0;
  double init_hi = 1.0;
  std::uint64_t seed = 0;
  bool normalize_radius = true;

  friend bool operator==(const ReservoirConfig&, const ReservoirConfig&) = default;
};

struct ReservoirLayer {
  SpMat w_res;  // state_dim x state_dim, frozen
  SpMat w_in;   // state_dim x input_dim, frozen
  Tensor rho;   // 1x1, scales the recurrence
  Tensor gamma; // 1x1, scales the input map
  ReservoirConfig config;

  int state_dim() const { return static_cast<int>(w_res.rows()); }
  int input_dim() const { return static_cast<int>(w_in.cols()); }
  double rho_value() const { return rho.scalar(); }
  double gamma_value() const { return gamma.scalar(); }
};

// Exact nonzero count for a (1 - sparsity) fill of a rows x cols matrix.
std::int64_t reservoir_nonzeros(int rows, int cols, double sparsity);

// Nonzero positions are sampled without replacement (exact count), values
// uniform on [init_lo, init_hi). With normalize_radius the recurrence is
// rescaled to unit spectral radius; rho starts at 0.9 and gamma at 1.0.
ReservoirLayer generate_reservoir(const ReservoirConfig& config);

// h = tanh(rho * W_res h_prev + gamma * W_in x)
Vector esn_step(const ReservoirLayer& layer, const Vector& h_prev,
                const Vector& x);

struct DeepEsn {
  std::vector<ReservoirLayer> layers;
};

// Runs the stack over a sequence (rows of `inputs` are time steps). Layer 0
// consumes the inputs; layer l consumes layer l-1 states at the same step.
// Returns all T states for every layer, each T x state_dim.
std::vector<Matrix> esn_forward(const DeepEsn& stack, const Matrix& inputs,
                                const std::vector<Vector>* h0 = nullptr);

// Distance curve between two trajectories started from random states (drawn
// uniform on [-1,1) from seed_a / seed_b) and driven by the same inputs.
// Entry 0 is the initial-state distance; entry t is after step t.
std::vector<double> check_echo_state_property(const ReservoirLayer& layer,
                                              const Matrix& inputs,
                                              std::uint64_t seed_a,
                                              std::uint64_t seed_b);

// Frozen-weight contract: both matrices compare bit-equal to a fresh
// generation from the stored config.
bool reservoir_matches_config(const ReservoirLayer& layer);

}  // namespace esrm
