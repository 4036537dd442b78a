#pragma once

// Experiment drivers: pairwise feature tables, per-fold predictors, and the
// method comparison / candidate sweep built on a precomputed accuracy matrix.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srcsel/cv.hpp"
#include "srcsel/features.hpp"
#include "srcsel/predictor.hpp"
#include "srcsel/selection.hpp"
#include "srcsel/transfer.hpp"

namespace srcsel {

std::vector<SubjectStats> compute_stats(std::span<const SubjectData> subjects,
                                        std::uint64_t seed,
                                        const CvConfig& cv = {},
                                        unsigned threads = 0);

/// Drops subjects whose intra accuracy is not above `threshold`. Both spans
/// must be index-aligned; returns the kept indices.
std::vector<std::size_t> intra_filter(std::span<const SubjectStats> stats,
                                      double threshold);

/// One ordered (source, target) pair: its features and true accuracy.
struct PairRecord {
  std::string source_id;
  std::string target_id;
  PairFeatures features;
  double accuracy = 0.0;
};

/// Every ordered pair of distinct subjects, target-major in subject order.
/// Target features use feature_calibration_set(target, seed, cv); accuracies
/// come from `matrix`.
std::vector<PairRecord> build_pair_table(std::span<const SubjectData> subjects,
                                         std::span<const SubjectStats> stats,
                                         const AccuracyMatrix& matrix,
                                         std::uint64_t seed,
                                         const CvConfig& cv = {},
                                         unsigned threads = 0);

/// Pairs whose source and target are both in `ids`.
std::vector<PairRecord> pairs_within(std::span<const PairRecord> records,
                                     std::span<const std::string> ids);

struct FoldPredictor {
  GroupFold fold;
  TppModel model;
};

/// Subject ids appearing in the records, first-appearance order.
std::vector<std::string> record_subjects(std::span<const PairRecord> records);

/// Leave-groups-out: for each fold, a TPP trained only on pairs among the
/// fold's training subjects. Fold f trains with seed derive_seed(seed, f).
std::vector<FoldPredictor> train_fold_predictors(
    std::span<const PairRecord> records, int n_folds, std::uint64_t seed,
    TrainConfig train = {}, unsigned threads = 0);

/// Everything needed to run the selection protocol without recomputing
/// transfer accuracies: the evaluator is a lookup into `matrix`, whose
/// entries are exactly what transfer_accuracy returns for the same seed.
struct SelectionBench {
  std::span<const SubjectData> subjects;
  std::span<const SubjectStats> stats;
  const AccuracyMatrix* matrix = nullptr;
  std::span<const FoldPredictor> folds;
  CvConfig cv;
  /// Seed the matrix and features were computed with.
  std::uint64_t data_seed = 0;
  /// Seed for Random.
  std::uint64_t selection_seed = 0;
};

/// Achieved accuracy per test target (rows, fold order) and method (cols).
struct MethodOutcomes {
  std::vector<std::string> targets;
  std::vector<Method> methods;
  Eigen::MatrixXd accuracy;
  std::vector<std::vector<std::optional<std::string>>> chosen;

  std::size_t column(Method m) const;
};

MethodOutcomes run_selection(const SelectionBench& bench,
                             std::span<const Method> methods, int k,
                             unsigned threads = 0);

struct MethodComparison {
  std::vector<Method> methods;
  /// mean over targets of (row − column) accuracy, percentage points.
  Eigen::MatrixXd mean_diff;
  Eigen::MatrixXd p_value;
  /// p ≥ 0.05: the pair is not statistically distinguishable.
  std::vector<std::vector<bool>> indistinguishable;
};

/// Per-target accuracies are averaged over the given runs (one per seed,
/// same targets and methods) before differencing.
MethodComparison compare_methods(std::span<const MethodOutcomes> runs);

struct SweepRow {
  Method method;
  int k;
  double gap;
};

/// Mean over targets (and runs) of Oracle minus method accuracy for each k.
/// Max of methods appears only at multiples of 3; Intra-subject is skipped.
std::vector<SweepRow> candidate_sweep(std::span<const SelectionBench> benches,
                                      std::span<const Method> methods,
                                      std::span<const int> k_values,
                                      unsigned threads = 0);

}  // namespace srcsel
