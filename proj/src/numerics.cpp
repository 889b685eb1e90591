#include "esrm/numerics.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace esrm {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent_seed, std::uint64_t stream_label) {
  std::uint64_t s = parent_seed ^ stream_label;
  return splitmix64(s);
}

Prng::Prng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Prng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

std::uint64_t Prng::next_below(std::uint64_t n) {
  if (n == 0) throw ConfigError("next_below: n must be positive");
  // Lemire multiply-shift; bias is far below anything observable here.
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

double Prng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Prng::uniform(double lo, double hi) {
  if (!(lo < hi)) {
    throw ConfigError("uniform: need lo < hi, got [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + ")");
  }
  double v = lo + uniform01() * (hi - lo);
  if (v >= hi) v = std::nextafter(hi, lo);  // rounding can touch the upper edge
  return v;
}

double Prng::gaussian(double mean, double stddev) {
  // Box-Muller, one sample per pair; keeps the stream layout simple.
  double u1 = uniform01();
  while (u1 == 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

Prng Prng::split(std::uint64_t stream_label) const {
  return Prng(derive_seed(seed_, stream_label));
}

void fill_uniform(Matrix& m, double lo, double hi, Prng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(lo, hi);
}

std::vector<std::int64_t> sample_without_replacement(std::int64_t total,
                                                     std::int64_t count,
                                                     Prng& rng) {
  if (count < 0 || count > total)
    throw ConfigError("sample_without_replacement: count out of range");
  std::vector<std::int64_t> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), std::int64_t{0});
  // Partial Fisher-Yates: only the first `count` slots matter.
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t j =
        i + static_cast<std::int64_t>(
                rng.next_below(static_cast<std::uint64_t>(total - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

SpMat sparse_from_triplets(Eigen::Index rows, Eigen::Index cols,
                           const std::vector<Triplet>& entries) {
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= rows || t.col() < 0 || t.col() >= cols)
      throw ShapeError("sparse_from_triplets: entry out of bounds");
  }
  SpMat m(rows, cols);
  m.setFromTriplets(entries.begin(), entries.end());
  m.makeCompressed();
  return m;
}

Vector sparse_matvec(const SpMat& m, const Vector& v) {
  if (v.size() != m.cols()) {
    throw ShapeError("sparse_matvec: vector length " + std::to_string(v.size()) +
                     " does not match matrix cols " + std::to_string(m.cols()));
  }
  return m * v;
}

bool sparse_bit_equal(const SpMat& a, const SpMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  SpMat ca = a;
  SpMat cb = b;
  ca.makeCompressed();
  cb.makeCompressed();
  if (ca.nonZeros() != cb.nonZeros()) return false;
  const auto n = ca.nonZeros();
  if (!std::equal(ca.outerIndexPtr(), ca.outerIndexPtr() + ca.outerSize() + 1,
                  cb.outerIndexPtr()))
    return false;
  if (!std::equal(ca.innerIndexPtr(), ca.innerIndexPtr() + n, cb.innerIndexPtr()))
    return false;
  const auto* va = reinterpret_cast<const std::uint64_t*>(ca.valuePtr());
  const auto* vb = reinterpret_cast<const std::uint64_t*>(cb.valuePtr());
  return std::equal(va, va + n, vb);
}

namespace {

// Largest-modulus root of t^2 - a t - b = 0.
double dominant_root_magnitude(double a, double b) {
  const double disc = a * a + 4.0 * b;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    return std::max(std::abs((a + s) / 2.0), std::abs((a - s) / 2.0));
  }
  return std::sqrt(-b);  // conjugate pair: |root|^2 = -b
}

}  // namespace

double estimate_spectral_radius(const SpMat& m, int max_iters, double tol) {
  if (m.rows() != m.cols())
    throw ShapeError("estimate_spectral_radius: matrix must be square");
  if (m.rows() == 0)
    throw ShapeError("estimate_spectral_radius: matrix must be nonempty");
  if (max_iters < 1)
    throw ConfigError("estimate_spectral_radius: max_iters must be >= 1");
  if (m.nonZeros() == 0) return 0.0;

  const Eigen::Index n = m.rows();
  constexpr int kRestarts = 3;
  double best = 0.0;
  double best_delta = std::numeric_limits<double>::infinity();

  for (int attempt = 0; attempt < kRestarts; ++attempt) {
    Prng rng(derive_seed(0x9E3779B97F4A7C15ULL,
                         static_cast<std::uint64_t>(attempt)));
    Vector x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.uniform(-1.0, 1.0);
    x.normalize();
    Vector y = m * x;

    double prev = std::numeric_limits<double>::quiet_NaN();
    for (int it = 0; it < max_iters; ++it) {
      const double yy = y.squaredNorm();
      if (yy == 0.0) {
        // x reached the kernel; all growth so far was transient (nilpotent
        // directions), so the estimate collapses to zero.
        if (prev == 0.0) return 0.0;
        if (std::abs(0.0 - (std::isnan(prev) ? 0.0 : prev)) < best_delta) {
          best = 0.0;
          best_delta = std::isnan(prev) ? best_delta : std::abs(prev);
        }
        break;
      }
      const Vector z = m * y;
      const double xx = x.squaredNorm();
      const double xy = x.dot(y);
      const double det = yy * xx - xy * xy;

      double rho;
      double residual;
      if (det > 1e-10 * yy * xx) {
        // Galerkin fit z ~ a y + b x on the two-step Krylov basis.
        const double yz = y.dot(z);
        const double xz = x.dot(z);
        const double a = (xx * yz - xy * xz) / det;
        const double b = (yy * xz - xy * yz) / det;
        rho = dominant_root_magnitude(a, b);
        residual = (z - a * y - b * x).norm();
      } else {
        // x is already (nearly) an eigenvector; one-term Rayleigh quotient.
        const double a = y.dot(z) / yy;
        rho = std::abs(a);
        residual = (z - a * y).norm();
      }

      // A settled estimate with a large fit residual means the iterate never
      // entered a one- or two-dimensional dominant subspace (e.g. three
      // eigenvalues tied in modulus); that must not count as convergence.
      const bool subspace_ok = residual <= 1e-6 * std::max(z.norm(), 1e-300);
      if (!std::isnan(prev)) {
        const double delta = std::abs(rho - prev);
        if (delta < tol && subspace_ok) return rho;
        if (delta < best_delta) {
          best_delta = delta;
          best = rho;
        }
      }
      prev = rho;

      const double ny = std::sqrt(yy);
      x = y / ny;
      y = z / ny;
    }
  }
  throw ConvergenceError(
      "estimate_spectral_radius: no settle after " + std::to_string(max_iters) +
          " iterations x" + std::to_string(kRestarts) +
          " restarts (best estimate " + std::to_string(best) + ")",
      best);
}

}  // namespace esrm
