#pragma once

// Geometry of symmetric positive definite matrices under the affine-invariant
// metric. Everything here is a pure function of its inputs; SpdMatrix values
// are immutable once constructed.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "srcsel/errors.hpp"

namespace srcsel {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& a) {
  return a.allFinite();
}

// U f(Λ) Uᵀ
template <typename Scalar, typename Fn>
MatrixX<Scalar> reconstruct(const MatrixX<Scalar>& vectors,
                            const VectorX<Scalar>& values, Fn&& fn) {
  VectorX<Scalar> mapped = values.unaryExpr(std::forward<Fn>(fn));
  MatrixX<Scalar> out = vectors * mapped.asDiagonal() * vectors.transpose();
  return (out + out.transpose()) / Scalar(2);
}

template <typename Scalar>
Scalar eigen_floor(const VectorX<Scalar>& values) {
  return Scalar(1e-14) * values.sum();
}

}  // namespace detail

/// An n×n symmetric positive definite matrix. The constructor symmetrizes
/// its input as (A + Aᵀ)/2 and rejects anything whose smallest eigenvalue is
/// not strictly positive. The eigendecomposition computed for that check is
/// kept, so matrix functions of an SpdMatrix cost one reconstruction.
template <typename Scalar>
class SpdMatrix {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  template <typename Derived>
  explicit SpdMatrix(const Eigen::MatrixBase<Derived>& a) {
    if (a.rows() != a.cols() || a.rows() == 0) {
      throw InputError("SpdMatrix: expected a non-empty square matrix, got " +
                       std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()));
    }
    if (!detail::all_finite(a)) {
      throw InputError("SpdMatrix: non-finite entries");
    }
    matrix_ = (a + a.transpose()) / Scalar(2);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(matrix_);
    if (solver.info() != Eigen::Success) {
      throw NumericalError("SpdMatrix: eigendecomposition failed");
    }
    eigenvalues_ = solver.eigenvalues();
    eigenvectors_ = solver.eigenvectors();
    if (!(eigenvalues_(0) > Scalar(0))) {
      throw ValidationError("SpdMatrix: not positive definite (smallest "
                            "eigenvalue " +
                            std::to_string(double(eigenvalues_(0))) + ")");
    }
  }

  static SpdMatrix identity(Eigen::Index n) {
    return SpdMatrix(Matrix::Identity(n, n));
  }

  Eigen::Index dim() const noexcept { return matrix_.rows(); }
  const Matrix& matrix() const noexcept { return matrix_; }
  /// Ascending.
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }
  const Matrix& eigenvectors() const noexcept { return eigenvectors_; }
  Scalar operator()(Eigen::Index i, Eigen::Index j) const {
    return matrix_(i, j);
  }
  Scalar trace() const { return matrix_.trace(); }

 private:
  Matrix matrix_;
  Vector eigenvalues_;
  Matrix eigenvectors_;
};

using SpdMatrixd = SpdMatrix<double>;

/// A symmetric matrix in the tangent space at `base`.
template <typename Scalar>
struct TangentVector {
  SpdMatrix<Scalar> base;
  MatrixX<Scalar> entries;

  TangentVector(SpdMatrix<Scalar> at, const MatrixX<Scalar>& v)
      : base(std::move(at)), entries((v + v.transpose()) / Scalar(2)) {
    if (v.rows() != base.dim() || v.cols() != base.dim()) {
      throw InputError("TangentVector: dimension does not match base point");
    }
  }
};

/// One trial: a covariance matrix and its class label.
template <typename Scalar>
struct LabeledSpd {
  SpdMatrix<Scalar> covariance;
  int label;
};

using Trial = LabeledSpd<double>;

enum class SpdFunction { kLog, kExp, kSqrt, kInvSqrt, kPower };

/// U f(Λ) Uᵀ for the eigendecomposition C = U Λ Uᵀ. Eigenvalues are floored at
/// 1e-14·trace before log, inverse square root and negative powers.
template <typename Scalar>
MatrixX<Scalar> spd_map(const SpdMatrix<Scalar>& c, SpdFunction f,
                        Scalar power = Scalar(1)) {
  const auto& u = c.eigenvectors();
  const auto& l = c.eigenvalues();
  const Scalar floor = detail::eigen_floor<Scalar>(l);
  using std::exp;
  using std::log;
  using std::pow;
  using std::sqrt;
  switch (f) {
    case SpdFunction::kLog:
      return detail::reconstruct<Scalar>(
          u, l, [floor](Scalar x) { return log(std::max(x, floor)); });
    case SpdFunction::kExp:
      return detail::reconstruct<Scalar>(u, l,
                                         [](Scalar x) { return exp(x); });
    case SpdFunction::kSqrt:
      return detail::reconstruct<Scalar>(u, l,
                                         [](Scalar x) { return sqrt(x); });
    case SpdFunction::kInvSqrt:
      return detail::reconstruct<Scalar>(u, l, [floor](Scalar x) {
        return Scalar(1) / sqrt(std::max(x, floor));
      });
    case SpdFunction::kPower:
      return detail::reconstruct<Scalar>(u, l, [floor, power](Scalar x) {
        return pow(power < Scalar(0) ? std::max(x, floor) : x, power);
      });
  }
  throw InputError("spd_map: unknown function");
}

template <typename Scalar>
MatrixX<Scalar> spd_log(const SpdMatrix<Scalar>& c) {
  return spd_map(c, SpdFunction::kLog);
}
template <typename Scalar>
MatrixX<Scalar> spd_sqrt(const SpdMatrix<Scalar>& c) {
  return spd_map(c, SpdFunction::kSqrt);
}
template <typename Scalar>
MatrixX<Scalar> spd_inv_sqrt(const SpdMatrix<Scalar>& c) {
  return spd_map(c, SpdFunction::kInvSqrt);
}
template <typename Scalar>
MatrixX<Scalar> spd_power(const SpdMatrix<Scalar>& c, Scalar p) {
  return spd_map(c, SpdFunction::kPower, p);
}

/// Matrix exponential of a symmetric (not necessarily definite) matrix.
template <typename Derived>
MatrixX<typename Derived::Scalar> sym_exp(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> sym = (s + s.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("sym_exp: eigendecomposition failed");
  }
  return detail::reconstruct<Scalar>(solver.eigenvectors(),
                                     solver.eigenvalues(),
                                     [](Scalar x) { return std::exp(x); });
}

/// Matrix logarithm of a symmetric positive definite matrix given as a plain
/// Eigen matrix. Used on intermediates that never need to be an SpdMatrix.
template <typename Derived>
MatrixX<typename Derived::Scalar> sym_log(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> sym = (s + s.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("sym_log: eigendecomposition failed");
  }
  const Scalar floor = detail::eigen_floor<Scalar>(solver.eigenvalues());
  return detail::reconstruct<Scalar>(
      solver.eigenvectors(), solver.eigenvalues(),
      [floor](Scalar x) { return std::log(std::max(x, floor)); });
}

/// Σ log²(λᵢ) over the eigenvalues of a symmetric positive definite matrix.
template <typename Derived>
typename Derived::Scalar sym_log_norm2(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> sym = (s + s.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(sym,
                                                        Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("airm: eigendecomposition failed");
  }
  const auto& l = solver.eigenvalues();
  const Scalar floor = detail::eigen_floor<Scalar>(l);
  Scalar acc(0);
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    const Scalar v = std::log(std::max(l(i), floor));
    acc += v * v;
  }
  return acc;
}

namespace detail {
template <typename Scalar>
void require_same_dim(const SpdMatrix<Scalar>& a, const SpdMatrix<Scalar>& b,
                      const char* where) {
  if (a.dim() != b.dim()) {
    throw InputError(std::string(where) + ": dimension mismatch (" +
                     std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()) + ")");
  }
}
}  // namespace detail

/// δ_R²(C1, C2) = ‖log(C1^{-1/2} C2 C1^{-1/2})‖_F².
template <typename Scalar>
Scalar airm_distance2(const SpdMatrix<Scalar>& c1, const SpdMatrix<Scalar>& c2) {
  detail::require_same_dim(c1, c2, "airm_distance");
  const MatrixX<Scalar> w = spd_inv_sqrt(c1);
  return sym_log_norm2(w * c2.matrix() * w);
}

template <typename Scalar>
Scalar airm_distance(const SpdMatrix<Scalar>& c1, const SpdMatrix<Scalar>& c2) {
  using std::sqrt;
  return sqrt(airm_distance2(c1, c2));
}

/// Point at parameter t on the geodesic from C1 (t = 0) to C2 (t = 1).
template <typename Scalar>
SpdMatrix<Scalar> geodesic(const SpdMatrix<Scalar>& c1,
                           const SpdMatrix<Scalar>& c2, Scalar t) {
  detail::require_same_dim(c1, c2, "geodesic");
  if (!(t >= Scalar(0) && t <= Scalar(1))) {
    throw InputError("geodesic: t must lie in [0, 1]");
  }
  if (t == Scalar(0)) return c1;
  if (t == Scalar(1)) return c2;
  const MatrixX<Scalar> isq = spd_inv_sqrt(c1);
  const MatrixX<Scalar> sq = spd_sqrt(c1);
  const SpdMatrix<Scalar> inner(isq * c2.matrix() * isq);
  return SpdMatrix<Scalar>(sq * spd_power(inner, t) * sq);
}

/// Riemannian logarithm: the tangent vector at `base` pointing to `c`.
template <typename Scalar>
TangentVector<Scalar> log_map(const SpdMatrix<Scalar>& base,
                              const SpdMatrix<Scalar>& c) {
  detail::require_same_dim(base, c, "log_map");
  const MatrixX<Scalar> isq = spd_inv_sqrt(base);
  const MatrixX<Scalar> sq = spd_sqrt(base);
  return TangentVector<Scalar>(base, sq * sym_log(isq * c.matrix() * isq) * sq);
}

/// Riemannian exponential: base^{1/2} exp(base^{-1/2} V base^{-1/2}) base^{1/2}.
template <typename Scalar>
SpdMatrix<Scalar> exp_map(const TangentVector<Scalar>& v) {
  const MatrixX<Scalar> isq = spd_inv_sqrt(v.base);
  const MatrixX<Scalar> sq = spd_sqrt(v.base);
  return SpdMatrix<Scalar>(sq * sym_exp(isq * v.entries * isq) * sq);
}

struct KarcherOptions {
  double tol = 1e-8;
  int max_iter = 64;
  double step = 1.0;
};

/// Karcher (geometric) mean by the fixed-point iteration
/// M ← M^{1/2} exp(ε T̄) M^{1/2}, T̄ = mean log(M^{-1/2} Cᵢ M^{-1/2}),
/// started from the arithmetic mean. Stops once ‖T̄‖_F < tol. Throws
/// ConvergenceError<MatrixX> with the last iterate after max_iter steps.
template <typename Scalar>
SpdMatrix<Scalar> karcher_mean(std::span<const SpdMatrix<Scalar>> set,
                               const KarcherOptions& opts = {}) {
  if (set.empty()) throw InputError("karcher_mean: empty set");
  const Eigen::Index n = set.front().dim();
  MatrixX<Scalar> arith = MatrixX<Scalar>::Zero(n, n);
  for (const auto& c : set) {
    detail::require_same_dim(set.front(), c, "karcher_mean");
    arith += c.matrix();
  }
  arith /= Scalar(set.size());
  SpdMatrix<Scalar> mean(arith);
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const MatrixX<Scalar> isq = spd_inv_sqrt(mean);
    MatrixX<Scalar> tbar = MatrixX<Scalar>::Zero(n, n);
    for (const auto& c : set) tbar += sym_log(isq * c.matrix() * isq);
    tbar /= Scalar(set.size());
    residual = tbar.norm();
    if (residual < Scalar(opts.tol)) return mean;
    const MatrixX<Scalar> sq = spd_sqrt(mean);
    mean = SpdMatrix<Scalar>(sq * sym_exp(Scalar(opts.step) * tbar) * sq);
  }
  throw ConvergenceError<MatrixX<Scalar>>(
      "karcher_mean: no convergence in " + std::to_string(opts.max_iter) +
          " iterations",
      mean.matrix(), double(residual));
}

template <typename Scalar>
SpdMatrix<Scalar> karcher_mean(const std::vector<SpdMatrix<Scalar>>& set,
                               const KarcherOptions& opts = {}) {
  return karcher_mean(std::span<const SpdMatrix<Scalar>>(set), opts);
}

/// Per-label Karcher means.
template <typename Scalar>
std::map<int, SpdMatrix<Scalar>> class_means(
    std::span<const LabeledSpd<Scalar>> trials,
    const KarcherOptions& opts = {}) {
  std::map<int, std::vector<SpdMatrix<Scalar>>> groups;
  for (const auto& t : trials) groups[t.label].push_back(t.covariance);
  if (groups.empty()) throw InputError("class_means: no trials");
  std::map<int, SpdMatrix<Scalar>> out;
  for (const auto& [label, set] : groups) {
    out.emplace(label, karcher_mean<Scalar>(set, opts));
  }
  return out;
}

template <typename Scalar>
std::map<int, SpdMatrix<Scalar>> class_means(
    const std::vector<LabeledSpd<Scalar>>& trials,
    const KarcherOptions& opts = {}) {
  return class_means(std::span<const LabeledSpd<Scalar>>(trials), opts);
}

/// (1/|set|) Σ δ_R²(M, Cᵢ).
template <typename Scalar>
Scalar dispersion(std::span<const SpdMatrix<Scalar>> set,
                  const SpdMatrix<Scalar>& mean) {
  if (set.empty()) throw InputError("dispersion: empty set");
  const MatrixX<Scalar> isq = spd_inv_sqrt(mean);
  Scalar acc(0);
  for (const auto& c : set) {
    detail::require_same_dim(mean, c, "dispersion");
    acc += sym_log_norm2(isq * c.matrix() * isq);
  }
  return acc / Scalar(set.size());
}

template <typename Scalar>
Scalar dispersion(const std::vector<SpdMatrix<Scalar>>& set,
                  const SpdMatrix<Scalar>& mean) {
  return dispersion(std::span<const SpdMatrix<Scalar>>(set), mean);
}

struct CovarianceOptions {
  bool ridge = false;
  double ridge_lambda = 1e-8;
};

/// (1/s) X Xᵀ for a ch×s trial. With ridging enabled, λ·trace/ch·I is added
/// when the smallest eigenvalue is below 1e-10·trace.
template <typename Derived>
SpdMatrix<typename Derived::Scalar> trial_covariance(
    const Eigen::MatrixBase<Derived>& x, const CovarianceOptions& opts = {}) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index ch = x.rows();
  const Eigen::Index s = x.cols();
  if (ch == 0 || s == 0) throw InputError("trial_covariance: empty trial");
  if (!x.allFinite()) throw InputError("trial_covariance: non-finite samples");
  if (s < ch && !opts.ridge) {
    throw InputError("trial_covariance: rank deficient (" + std::to_string(s) +
                     " samples < " + std::to_string(ch) +
                     " channels) and ridging is disabled");
  }
  MatrixX<Scalar> c = (x * x.transpose()) / Scalar(s);
  if (opts.ridge) {
    const Scalar tr = c.trace();
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(
        c, Eigen::EigenvaluesOnly);
    if (solver.eigenvalues()(0) < Scalar(1e-10) * tr) {
      c.diagonal().array() += Scalar(opts.ridge_lambda) * tr / Scalar(ch);
    }
  }
  return SpdMatrix<Scalar>(c);
}

}  // namespace srcsel
