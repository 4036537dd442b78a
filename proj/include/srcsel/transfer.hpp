#pragma once

// Cross-subject transfer accuracy (RPA alignment followed by MDM) and the
// all-pairs accuracy matrix.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srcsel/cv.hpp"
#include "srcsel/dataset.hpp"
#include "srcsel/rpa.hpp"

namespace srcsel {

/// Target rows × source columns over one list of subjects. Off-diagonal
/// entries are cross-subject accuracies averaged over the target's
/// calibration splits; the diagonal holds intra-subject accuracy.
struct AccuracyMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd values;
  std::vector<double> intra;
  /// Row (target) indices by descending off-diagonal row sum.
  std::vector<std::size_t> row_order;
  /// Column (source) indices by descending off-diagonal column sum.
  std::vector<std::size_t> col_order;

  std::size_t index_of(const std::string& id) const;
  double at(const std::string& target, const std::string& source) const;
  /// Sub-matrix over the given ids, in the given order, orders recomputed.
  AccuracyMatrix restricted(std::span<const std::string> keep) const;
  /// Fills row_order and col_order from values.
  void compute_orders();
};

/// Per-subject data reused across many pairings: overall and class means of
/// all trials, and for each calibration split the training means and the
/// test trials already whitened by the training mean.
struct PreparedSubject {
  const SubjectData* data = nullptr;
  DatasetMeans means;
  struct Split {
    std::vector<Trial> train;
    DatasetMeans train_means;
    std::vector<Trial> whitened_test;
  };
  std::vector<Split> splits;
};

PreparedSubject prepare_subject(const SubjectData& subject,
                                std::uint64_t fold_seed, const CvConfig& cv,
                                const KarcherOptions& karcher = {});

/// Accuracy on each calibration split's test trials of an MDM trained on
/// the source aligned to that split's training trials, averaged over splits.
double transfer_accuracy(const PreparedSubject& source,
                         const PreparedSubject& target, std::uint64_t fold_seed,
                         const RpaConfig& cfg);

double transfer_accuracy(const SubjectData& source, const SubjectData& target,
                         std::uint64_t fold_seed, const RpaConfig& cfg = {},
                         const CvConfig& cv = {});

/// Every ordered pair plus the intra-subject diagonal. `threads` = 0 uses
/// every core; the result does not depend on it.
AccuracyMatrix build_accuracy_matrix(std::span<const SubjectData> subjects,
                                     std::uint64_t fold_seed,
                                     const RpaConfig& cfg = {},
                                     const CvConfig& cv = {},
                                     unsigned threads = 0);

/// Two-sided Wilcoxon signed-rank p-value for median zero. Zeros are
/// dropped and tied magnitudes get averaged ranks. Exact null distribution
/// for up to 25 non-zero differences, normal approximation with continuity
/// and tie correction above. All-zero input gives 1.
double wilcoxon_signed_rank(std::span<const double> diffs);

}  // namespace srcsel
