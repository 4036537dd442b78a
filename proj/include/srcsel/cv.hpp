#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srcsel/dataset.hpp"

namespace srcsel {

/// Target-side cross-validation: the trials are split into `folds` stratified
/// folds; each split trains on `train_folds` consecutive folds (the small
/// calibration set) and tests on the rest.
struct CvConfig {
  int folds = 5;
  int train_folds = 1;

  void validate() const;
};

/// Fold index per trial, stratified by label and seeded. Throws InputError
/// when any class has fewer trials than folds.
std::vector<int> stratified_fold_assignment(std::span<const Trial> trials,
                                            int folds, std::uint64_t seed);

struct TrialSplit {
  std::vector<Trial> train;
  std::vector<Trial> test;
};

/// One split per fold. The fold layout depends on (seed, subject id) only, so
/// every source paired with a given target sees the same splits.
std::vector<TrialSplit> calibration_splits(const SubjectData& subject,
                                           std::uint64_t seed,
                                           const CvConfig& cv = {});

/// Mean MDM accuracy over calibration_splits, training on each split's
/// training part with no transfer.
double intra_subject_accuracy(const SubjectData& subject, std::uint64_t seed,
                              const CvConfig& cv = {});

struct GroupFold {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Partitions subjects into n_folds disjoint, seeded test groups of sizes
/// differing by at most one.
std::vector<GroupFold> leave_groups_out_folds(
    std::span<const std::string> subject_ids, int n_folds, std::uint64_t seed);

}  // namespace srcsel
