#pragma once

// Riemannian Procrustes alignment of a labelled source dataset onto a target
// dataset: recenter both to the identity, optionally stretch the source to
// the target's dispersion, then rotate the source so its class means line up
// with the target's.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "srcsel/spd.hpp"

namespace srcsel {

struct RpaConfig {
  bool equalize_dispersion = false;
  double rotation_tol = 1e-8;
  int rotation_max_iter = 500;
  int rotation_restarts = 4;
  /// Seeds the random orthogonal restarts.
  std::uint64_t seed = 0;
  KarcherOptions karcher{};

  /// Throws InputError on non-positive tolerances or counts.
  void validate() const;
};

/// Overall and per-class Karcher means of one dataset.
struct DatasetMeans {
  SpdMatrixd overall;
  std::map<int, SpdMatrixd> classes;
};

DatasetMeans dataset_means(std::span<const Trial> trials,
                           const KarcherOptions& opts = {});

std::vector<Trial> recenter(std::span<const Trial> trials,
                            const SpdMatrixd& mean);

/// Replaces each C by C^s, s = √(d_reference / d_current). Expects trials
/// recentered about the identity.
std::vector<Trial> equalize_dispersion(std::span<const Trial> trials,
                                       double d_current, double d_reference);

/// J(R) = Σ_k δ_R²(T_k, R S_k Rᵀ), summed over the labels of `target`.
double rotation_objective(const std::map<int, SpdMatrixd>& source,
                          const std::map<int, SpdMatrixd>& target,
                          const MatrixX<double>& rotation);

/// Riemannian gradient of J on the orthogonal group (embedded metric).
MatrixX<double> rotation_gradient(const std::map<int, SpdMatrixd>& source,
                                  const std::map<int, SpdMatrixd>& target,
                                  const MatrixX<double>& rotation);

struct RotationResult {
  MatrixX<double> rotation;
  double objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  int start_index = 0;
  bool converged = false;
};

/// Minimizes J over O(n) by descent along limited-memory BFGS directions
/// (steepest descent whenever those fail to descend) with a QR retraction
/// and Armijo backtracking. Starts, in order: the identity, one eigenbasis
/// match per class (exact for a planted rotation with distinct eigenvalues),
/// and cfg.rotation_restarts random orthogonal matrices. Returns the
/// lowest-objective run (ties to the earliest start).
/// Throws ConvergenceError<RotationResult> carrying the best run when no
/// start reaches a gradient norm below cfg.rotation_tol.
RotationResult find_rotation(const std::map<int, SpdMatrixd>& source_means,
                             const std::map<int, SpdMatrixd>& target_means,
                             const RpaConfig& cfg);

/// The transforms RPA produces, without touching individual trials.
struct AlignmentTransform {
  MatrixX<double> source_whitener;  // (M^S)^{-1/2}
  MatrixX<double> target_whitener;  // (M^T)^{-1/2}
  /// s in C ↦ C^s, 1 when dispersion equalization is off.
  double stretch = 1.0;
  MatrixX<double> rotation;
  double rotation_objective = 0.0;
  bool rotation_converged = true;
  /// Class means of the fully aligned source.
  std::map<int, SpdMatrixd> aligned_source_means;
  /// Class means of the recentered target training data.
  std::map<int, SpdMatrixd> target_means;

  /// Whitening applied to any target trial (training or test).
  SpdMatrixd to_target_frame(const SpdMatrixd& c) const;
  /// Full source-side map: recenter, stretch, rotate.
  SpdMatrixd to_aligned_source(const SpdMatrixd& c) const;
};

/// Computes the alignment from precomputed dataset means. The source trials
/// are only read when dispersion equalization is on.
AlignmentTransform align_means(std::span<const Trial> source,
                               const DatasetMeans& source_means,
                               std::span<const Trial> target_train,
                               const DatasetMeans& target_means,
                               const RpaConfig& cfg);

struct AlignmentResult {
  std::vector<Trial> aligned_source;
  std::vector<Trial> recentered_target_train;
  MatrixX<double> target_whitener;
  MatrixX<double> rotation;
  double rotation_objective = 0.0;
  bool rotation_converged = true;
  AlignmentTransform transform;

  /// Applies the stored target whitener. Labels are carried, never used.
  std::vector<Trial> whiten_target(std::span<const Trial> trials) const;
};

AlignmentResult rpa_align(std::span<const Trial> source,
                          std::span<const Trial> target_train,
                          const RpaConfig& cfg = {});

}  // namespace srcsel
