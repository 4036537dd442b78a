#include "srcsel/cv.hpp"

#include <algorithm>
#include <map>

#include "srcsel/mdm.hpp"
#include "srcsel/random.hpp"

namespace srcsel {

void CvConfig::validate() const {
  if (folds < 2) throw InputError("CvConfig: folds must be >= 2");
  if (train_folds < 1 || train_folds >= folds) {
    throw InputError("CvConfig: train_folds must lie in [1, folds)");
  }
}

std::vector<int> stratified_fold_assignment(std::span<const Trial> trials,
                                            int folds, std::uint64_t seed) {
  if (folds < 1) throw InputError("stratified folds: folds must be >= 1");
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    by_label[trials[i].label].push_back(i);
  }
  std::vector<int> fold(trials.size(), -1);
  Rng rng(seed);
  // Continue the round-robin across classes so fold sizes stay balanced.
  std::size_t offset = 0;
  for (auto& [label, idx] : by_label) {
    if (idx.size() < static_cast<std::size_t>(folds)) {
      throw InputError("stratified folds: class " + std::to_string(label) +
                       " has " + std::to_string(idx.size()) +
                       " trials, fewer than " + std::to_string(folds) +
                       " folds");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      fold[idx[k]] = static_cast<int>((offset + k) % folds);
    }
    offset += idx.size();
  }
  return fold;
}

std::vector<TrialSplit> calibration_splits(const SubjectData& subject,
                                           std::uint64_t seed,
                                           const CvConfig& cv) {
  cv.validate();
  const auto fold = stratified_fold_assignment(
      subject.trials, cv.folds, derive_seed(seed, stable_hash(subject.id)));
  std::vector<TrialSplit> splits(static_cast<std::size_t>(cv.folds));
  for (int f = 0; f < cv.folds; ++f) {
    auto& split = splits[static_cast<std::size_t>(f)];
    for (std::size_t i = 0; i < subject.trials.size(); ++i) {
      const int rel = (fold[i] - f + cv.folds) % cv.folds;
      (rel < cv.train_folds ? split.train : split.test)
          .push_back(subject.trials[i]);
    }
  }
  return splits;
}

double intra_subject_accuracy(const SubjectData& subject, std::uint64_t seed,
                              const CvConfig& cv) {
  const auto splits = calibration_splits(subject, seed, cv);
  double acc = 0.0;
  for (const auto& s : splits) {
    acc += mdm_accuracy(mdm_fit(s.train), s.test);
  }
  return acc / double(splits.size());
}

std::vector<GroupFold> leave_groups_out_folds(
    std::span<const std::string> subject_ids, int n_folds,
    std::uint64_t seed) {
  if (n_folds < 2) throw InputError("leave_groups_out_folds: n_folds < 2");
  if (subject_ids.size() < static_cast<std::size_t>(n_folds)) {
    throw InputError("leave_groups_out_folds: " +
                     std::to_string(subject_ids.size()) +
                     " subjects cannot fill " + std::to_string(n_folds) +
                     " folds");
  }
  std::vector<std::size_t> order(subject_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold_of(subject_ids.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    fold_of[order[k]] = static_cast<int>(k % static_cast<std::size_t>(n_folds));
  }
  std::vector<GroupFold> out(static_cast<std::size_t>(n_folds));
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    for (int f = 0; f < n_folds; ++f) {
      auto& g = out[static_cast<std::size_t>(f)];
      (fold_of[i] == f ? g.test_ids : g.train_ids).push_back(subject_ids[i]);
    }
  }
  return out;
}

}  // namespace srcsel
