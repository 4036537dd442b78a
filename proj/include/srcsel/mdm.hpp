#pragma once

#include <map>
#include <span>
#include <vector>

#include "srcsel/spd.hpp"

namespace srcsel {

/// Minimum-distance-to-mean classifier state: one Karcher mean per label.
class MdmModel {
 public:
  explicit MdmModel(std::map<int, SpdMatrixd> class_means);

  const std::map<int, SpdMatrixd>& class_means() const noexcept {
    return means_;
  }
  /// Ascending.
  const std::vector<int>& labels() const noexcept { return labels_; }
  Eigen::Index dim() const noexcept { return means_.begin()->second.dim(); }

 private:
  std::map<int, SpdMatrixd> means_;
  std::vector<int> labels_;
  // Cached M_k^{-1/2}, aligned with labels_.
  std::vector<MatrixX<double>> whiteners_;

  friend int mdm_predict(const MdmModel&, const SpdMatrixd&);
};

/// Requires at least two distinct labels.
MdmModel mdm_fit(std::span<const Trial> trials, const KarcherOptions& opts = {});

/// Label whose mean is nearest under the affine-invariant distance. Exact
/// ties go to the smallest label.
int mdm_predict(const MdmModel& model, const SpdMatrixd& c);

/// Fraction of trials whose predicted label equals the true one.
double mdm_accuracy(const MdmModel& model, std::span<const Trial> trials);

}  // namespace srcsel
