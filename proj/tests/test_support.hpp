// Shared helpers and independent oracles for the test suites. Everything here
// deliberately avoids the library's own algorithm paths: dense products for
// sparse ops, characteristic-polynomial roots for the radius estimator,
// explicit enumeration for edit distance.
#pragma once

#include <Eigen/Eigenvalues>

#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "esrm/numerics.hpp"

namespace test_support {

inline esrm::Matrix densify(const esrm::SpMat& m) { return esrm::Matrix(m); }

// Random sparse matrix for tests (Bernoulli density, not the library's
// exact-count sampler).
inline esrm::SpMat random_sparse(int rows, int cols, double density,
                                 esrm::Prng& rng) {
  std::vector<esrm::Triplet> entries;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (rng.uniform01() < density)
        entries.emplace_back(r, c, rng.uniform(-1.0, 1.0));
  return esrm::sparse_from_triplets(rows, cols, entries);
}

// Spectral radius through the characteristic polynomial: Faddeev-LeVerrier
// coefficients, companion matrix, QR eigenvalues of the companion.
inline double char_poly_spectral_radius(const esrm::Matrix& a) {
  const Eigen::Index n = a.rows();
  esrm::Matrix m = esrm::Matrix::Identity(n, n);
  std::vector<double> coeff(static_cast<std::size_t>(n) + 1, 0.0);
  coeff[static_cast<std::size_t>(n)] = 1.0;
  for (Eigen::Index k = 1; k <= n; ++k) {
    const esrm::Matrix am = a * m;
    const double ck = -am.trace() / static_cast<double>(k);
    coeff[static_cast<std::size_t>(n - k)] = ck;
    m = am + ck * esrm::Matrix::Identity(n, n);
  }
  esrm::Matrix companion = esrm::Matrix::Zero(n, n);
  for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i)
    companion(i, n - 1) = -coeff[static_cast<std::size_t>(i)];
  const Eigen::EigenSolver<esrm::Matrix> solver(companion, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

// Plain memoized edit distance, independent of the library's DP + traceback.
inline int edit_distance_oracle(const std::vector<int>& a,
                                const std::vector<int>& b) {
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  const std::function<int(std::size_t, std::size_t)> go =
      [&](std::size_t i, std::size_t j) -> int {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    const auto key = std::make_pair(i, j);
    if (const auto it = memo.find(key); it != memo.end()) return it->second;
    int best = go(i + 1, j + 1) + (a[i] != b[j]);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    memo[key] = best;
    return best;
  };
  return go(0, 0);
}

inline std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t r = 1;
  for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
  return r;
}

// Runs a shell command, returns its exit code (-1 if it did not exit cleanly).
inline int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

}  // namespace test_support
