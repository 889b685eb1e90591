// Seeded randomness, sparse helpers, and spectral-radius estimation.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "esrm/errors.hpp"

namespace esrm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

// One step of the splitmix64 sequence; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

// Child seed for an independent, reproducible stream:
// splitmix64(parent ^ label).
std::uint64_t derive_seed(std::uint64_t parent_seed, std::uint64_t stream_label);

// xoshiro256** generator seeded through splitmix64. Same seed, same stream,
// on every platform and build mode.
class Prng {
 public:
  explicit Prng(std::uint64_t seed);

  std::uint64_t next_u64();
  std::uint64_t next_below(std::uint64_t n);  // uniform on [0, n)
  double uniform01();                         // uniform on [0, 1)
  double uniform(double lo, double hi);       // uniform on [lo, hi)
  double gaussian(double mean = 0.0, double stddev = 1.0);

  // Independent child stream; the label keeps sibling streams distinct.
  Prng split(std::uint64_t stream_label) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::array<std::uint64_t, 4> state_;
  std::uint64_t seed_;
};

// Fills in row-major order so the draw sequence is layout-independent.
void fill_uniform(Matrix& m, double lo, double hi, Prng& rng);

// `count` distinct values from [0, total), sorted ascending.
std::vector<std::int64_t> sample_without_replacement(std::int64_t total,
                                                     std::int64_t count,
                                                     Prng& rng);

SpMat sparse_from_triplets(Eigen::Index rows, Eigen::Index cols,
                           const std::vector<Triplet>& entries);

Vector sparse_matvec(const SpMat& m, const Vector& v);

// Bitwise comparison of structure and values (distinguishes -0.0 from 0.0).
bool sparse_bit_equal(const SpMat& a, const SpMat& b);

// Largest |eigenvalue| by power iteration with random restarts. A two-term
// recurrence fit on the iterates lets complex-conjugate and opposite-sign
// dominant pairs converge; spectra that do not settle (three or more
// eigenvalues tied in modulus) raise ConvergenceError carrying the best
// estimate seen.
double estimate_spectral_radius(const SpMat& m, int max_iters = 2000,
                                double tol = 1e-10);

inline Matrix elem_tanh(const Matrix& m) {
  return m.unaryExpr([](double v) { return std::tanh(v); });
}
inline Vector elem_tanh(const Vector& v) {
  return v.unaryExpr([](double x) { return std::tanh(x); });
}

}  // namespace esrm
