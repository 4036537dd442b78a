#include "srcsel/mdm.hpp"

#include <limits>
#include <string>

namespace srcsel {

MdmModel::MdmModel(std::map<int, SpdMatrixd> class_means)
    : means_(std::move(class_means)) {
  if (means_.empty()) throw InputError("MdmModel: no classes");
  const auto n = means_.begin()->second.dim();
  for (const auto& [label, mean] : means_) {
    if (mean.dim() != n) throw InputError("MdmModel: mixed dimensions");
    labels_.push_back(label);
    whiteners_.push_back(spd_inv_sqrt(mean));
  }
}

MdmModel mdm_fit(std::span<const Trial> trials, const KarcherOptions& opts) {
  auto means = class_means(trials, opts);
  if (means.size() < 2) {
    throw InputError("mdm_fit: need at least two classes, got " +
                     std::to_string(means.size()));
  }
  return MdmModel(std::move(means));
}

int mdm_predict(const MdmModel& model, const SpdMatrixd& c) {
  if (c.dim() != model.dim()) {
    throw InputError("mdm_predict: dimension mismatch (" +
                     std::to_string(c.dim()) + " vs " +
                     std::to_string(model.dim()) + ")");
  }
  int best = model.labels_.front();
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < model.labels_.size(); ++k) {
    const auto& w = model.whiteners_[k];
    const double d2 = sym_log_norm2(w * c.matrix() * w);
    // strict comparison over ascending labels keeps the smallest on ties
    if (d2 < best_d2) {
      best_d2 = d2;
      best = model.labels_[k];
    }
  }
  return best;
}

double mdm_accuracy(const MdmModel& model, std::span<const Trial> trials) {
  if (trials.empty()) throw InputError("mdm_accuracy: no trials");
  std::size_t correct = 0;
  for (const auto& t : trials) {
    if (mdm_predict(model, t.covariance) == t.label) ++correct;
  }
  return double(correct) / double(trials.size());
}

}  // namespace srcsel
