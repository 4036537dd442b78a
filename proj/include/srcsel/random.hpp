#pragma once

// Seeded random draws of the matrix types used across the library. All draws
// go through std::mt19937_64 so a seed fixes the output.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

#include "srcsel/spd.hpp"

namespace srcsel {

using Rng = std::mt19937_64;

/// Independent stream for a (seed, salt) pair, e.g. one per subject.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, stable across platforms (std::hash is not).
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline MatrixX<double> standard_normal(Eigen::Index rows, Eigen::Index cols,
                                       Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  MatrixX<double> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n01(rng);
  return m;
}

/// Symmetric Gaussian matrix: diagonal entries N(0, scale²), off-diagonal
/// entries N(0, scale²/2).
inline MatrixX<double> symmetric_gaussian(Eigen::Index n, double scale,
                                          Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  MatrixX<double> m(n, n);
  const double off = scale / std::sqrt(2.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, i) = scale * n01(rng);
    for (Eigen::Index j = 0; j < i; ++j) {
      m(i, j) = off * n01(rng);
      m(j, i) = m(i, j);
    }
  }
  return m;
}

/// Haar-distributed orthogonal matrix: QR of a standard-normal matrix with
/// the signs of R's diagonal folded into Q.
inline MatrixX<double> random_orthogonal(Eigen::Index n, Rng& rng) {
  const MatrixX<double> g = standard_normal(n, n, rng);
  Eigen::HouseholderQR<MatrixX<double>> qr(g);
  MatrixX<double> q = qr.householderQ() * MatrixX<double>::Identity(n, n);
  const MatrixX<double> r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

/// Random SPD matrix exp(S) with S symmetric Gaussian of the given scale.
inline SpdMatrixd random_spd(Eigen::Index n, double scale, Rng& rng) {
  return SpdMatrixd(sym_exp(symmetric_gaussian(n, scale, rng)));
}

/// Random invertible matrix with condition number bounded by exp(2·scale).
inline MatrixX<double> random_invertible(Eigen::Index n, double scale,
                                         Rng& rng) {
  return sym_exp(symmetric_gaussian(n, scale, rng)) * random_orthogonal(n, rng);
}

}  // namespace srcsel
