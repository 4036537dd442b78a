#include "srcsel/features.hpp"

#include <vector>

#include "srcsel/rpa.hpp"

namespace srcsel {

namespace {

constexpr std::array<std::string_view, kFeatureCount> kNames = {
    "dist_t1_t2", "dist_s1_s2",  "dist_t1_s1",  "dist_t1_s2",
    "dist_t2_s1", "dist_t2_s2",  "disp_t",      "disp_t1",
    "disp_t2",    "disp_s",      "disp_s1",     "disp_s2",
    "source_intra_acc", "diff_class_gap", "diff_t1", "diff_t2",
    "diff_disp1", "diff_disp2"};

std::vector<SpdMatrixd> covariances(std::span<const Trial> trials, int label) {
  std::vector<SpdMatrixd> out;
  for (const auto& t : trials) {
    if (label == 0 || t.label == label) out.push_back(t.covariance);
  }
  return out;
}

SpdMatrixd whiten(const MatrixX<double>& w, const SpdMatrixd& m) {
  return SpdMatrixd(w * m.matrix() * w.transpose());
}

void require_two_classes(std::span<const Trial> trials, const char* what) {
  bool has1 = false, has2 = false;
  for (const auto& t : trials) {
    has1 = has1 || t.label == 1;
    has2 = has2 || t.label == 2;
  }
  if (!has1 || !has2) {
    throw InputError(std::string(what) + ": classes 1 and 2 must both be present");
  }
}

}  // namespace

std::span<const std::string_view, kFeatureCount> feature_names() {
  return kNames;
}

SubjectStats subject_stats(const SubjectData& subject, std::uint64_t seed,
                           const CvConfig& cv) {
  require_two_classes(subject.trials, "subject_stats");
  const auto all = covariances(subject.trials, 0);
  const auto c1 = covariances(subject.trials, 1);
  const auto c2 = covariances(subject.trials, 2);
  SubjectStats s{subject.id,
                 karcher_mean<double>(all),
                 karcher_mean<double>(c1),
                 karcher_mean<double>(c2)};
  s.overall_dispersion = dispersion<double>(all, s.overall_mean);
  s.class1_dispersion = dispersion<double>(c1, s.class1_mean);
  s.class2_dispersion = dispersion<double>(c2, s.class2_mean);
  s.intra_accuracy = intra_subject_accuracy(subject, seed, cv);
  return s;
}

TargetSide target_side(std::span<const Trial> target_train) {
  require_two_classes(target_train, "pair_features");
  const auto all = covariances(target_train, 0);
  const auto c1 = covariances(target_train, 1);
  const auto c2 = covariances(target_train, 2);
  const SpdMatrixd mean = karcher_mean<double>(all);
  const SpdMatrixd m1 = karcher_mean<double>(c1);
  const SpdMatrixd m2 = karcher_mean<double>(c2);
  const MatrixX<double> w = spd_inv_sqrt(mean);
  // Dispersions are congruence invariant, so the raw-frame values equal the
  // recentered ones.
  return TargetSide{whiten(w, m1), whiten(w, m2),
                    dispersion<double>(all, mean), dispersion<double>(c1, m1),
                    dispersion<double>(c2, m2)};
}

PairFeatures pair_features(const SubjectStats& source, const TargetSide& t) {
  const MatrixX<double> w = spd_inv_sqrt(source.overall_mean);
  const SpdMatrixd s1 = whiten(w, source.class1_mean);
  const SpdMatrixd s2 = whiten(w, source.class2_mean);

  PairFeatures f;
  f[Feature::kDistT1T2] = airm_distance2(t.class1, t.class2);
  f[Feature::kDistS1S2] = airm_distance2(s1, s2);
  f[Feature::kDistT1S1] = airm_distance2(t.class1, s1);
  f[Feature::kDistT1S2] = airm_distance2(t.class1, s2);
  f[Feature::kDistT2S1] = airm_distance2(t.class2, s1);
  f[Feature::kDistT2S2] = airm_distance2(t.class2, s2);
  f[Feature::kDispT] = t.dispersion;
  f[Feature::kDispT1] = t.dispersion1;
  f[Feature::kDispT2] = t.dispersion2;
  f[Feature::kDispS] = source.overall_dispersion;
  f[Feature::kDispS1] = source.class1_dispersion;
  f[Feature::kDispS2] = source.class2_dispersion;
  f[Feature::kSourceIntraAccuracy] = source.intra_accuracy;
  f[Feature::kDiffClassGap] = f[Feature::kDistT1T2] - f[Feature::kDistS1S2];
  f[Feature::kDiffT1] = f[Feature::kDistT1S2] - f[Feature::kDistT1S1];
  f[Feature::kDiffT2] = f[Feature::kDistT2S1] - f[Feature::kDistT2S2];
  f[Feature::kDiffDisp1] = f[Feature::kDispS1] - f[Feature::kDispT1];
  f[Feature::kDiffDisp2] = f[Feature::kDispS2] - f[Feature::kDispT2];
  return f;
}

PairFeatures pair_features(const SubjectStats& source_stats,
                           std::span<const Trial> target_train) {
  return pair_features(source_stats, target_side(target_train));
}

std::vector<Trial> feature_calibration_set(const SubjectData& target,
                                           std::uint64_t seed,
                                           const CvConfig& cv) {
  return calibration_splits(target, seed, cv).front().train;
}

}  // namespace srcsel
