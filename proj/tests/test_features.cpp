#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"
#include "srcsel/features.hpp"
#include "srcsel/rpa.hpp"

using namespace srcsel;
using Mat = MatrixX<double>;

TEST(Features, LayoutNames) {
  const auto names = feature_names();
  EXPECT_EQ(names.size(), 18u);
  EXPECT_EQ(std::set<std::string_view>(names.begin(), names.end()).size(), 18u);
  EXPECT_EQ(names[static_cast<std::size_t>(Feature::kDistT1T2)], "dist_t1_t2");
  EXPECT_EQ(names[static_cast<std::size_t>(Feature::kDiffDisp2)], "diff_disp2");
}

TEST(Features, SelfPairValues) {
  const auto pop = fixtures::small_population(1, 4);
  const auto& s = pop[0];
  const auto stats = subject_stats(s, 1);
  const auto f = pair_features(stats, s.trials);

  EXPECT_NEAR(f[Feature::kDistT1S1], 0.0, 1e-12);
  EXPECT_NEAR(f[Feature::kDistT2S2], 0.0, 1e-12);
  EXPECT_NEAR(f[Feature::kDiffClassGap], 0.0, 1e-12);
  EXPECT_NEAR(f[Feature::kDiffDisp1], 0.0, 1e-12);
  EXPECT_NEAR(f[Feature::kDiffDisp2], 0.0, 1e-12);
  // The two remaining differences reduce to the class-mean distance.
  EXPECT_NEAR(f[Feature::kDiffT1], f[Feature::kDistT1T2], 1e-12);
  EXPECT_NEAR(f[Feature::kDiffT2], f[Feature::kDistT1T2], 1e-12);
  EXPECT_NEAR(f[Feature::kDistT1T2], f[Feature::kDistS1S2], 1e-12);
  EXPECT_DOUBLE_EQ(f[Feature::kSourceIntraAccuracy], stats.intra_accuracy);
}

TEST(Features, DifferencesFollowDefinitions) {
  const auto pop = fixtures::small_population(2, 9);
  const auto stats = subject_stats(pop[0], 1);
  const auto f = pair_features(stats, feature_calibration_set(pop[1], 1));
  EXPECT_DOUBLE_EQ(f[Feature::kDiffClassGap], f[Feature::kDistT1T2] - f[Feature::kDistS1S2]);
  EXPECT_DOUBLE_EQ(f[Feature::kDiffT1], f[Feature::kDistT1S2] - f[Feature::kDistT1S1]);
  EXPECT_DOUBLE_EQ(f[Feature::kDiffT2], f[Feature::kDistT2S1] - f[Feature::kDistT2S2]);
  EXPECT_DOUBLE_EQ(f[Feature::kDiffDisp1], f[Feature::kDispS1] - f[Feature::kDispT1]);
  EXPECT_DOUBLE_EQ(f[Feature::kDiffDisp2], f[Feature::kDispS2] - f[Feature::kDispT2]);
  for (double v : f.values) EXPECT_TRUE(std::isfinite(v));
  EXPECT_GE(f[Feature::kDispT], 0.0);
}

// Recentering turns a congruence into a rotation, which moves the target
// class means relative to the source; only target-intrinsic features and the
// source side are invariant.
TEST(Features, IntrinsicFeaturesInvariantToTargetCongruence) {
  Rng rng(3);
  const auto pop = fixtures::small_population(2, 5);
  const auto stats = subject_stats(pop[0], 1);
  const auto train = feature_calibration_set(pop[1], 1);
  const Mat w = random_invertible(4, 0.5, rng);
  std::vector<Trial> moved;
  for (const auto& t : train)
    moved.push_back({SpdMatrixd(Mat(w * t.covariance.matrix() * w.transpose())), t.label});
  const auto a = pair_features(stats, train);
  const auto b = pair_features(stats, moved);
  for (Feature f : {Feature::kDistT1T2, Feature::kDistS1S2, Feature::kDispT, Feature::kDispT1,
                    Feature::kDispT2, Feature::kDispS, Feature::kDispS1, Feature::kDispS2,
                    Feature::kSourceIntraAccuracy, Feature::kDiffClassGap,
                    Feature::kDiffDisp1, Feature::kDiffDisp2}) {
    EXPECT_NEAR(a[f], b[f], 1e-6 * (1 + std::abs(a[f])));
  }
}

TEST(Features, CalibrationSetIsFirstSplitTrain) {
  const auto pop = fixtures::small_population(1, 2);
  const auto set = feature_calibration_set(pop[0], 3);
  const auto splits = calibration_splits(pop[0], 3);
  ASSERT_EQ(set.size(), splits[0].train.size());
  for (std::size_t i = 0; i < set.size(); ++i)
    EXPECT_EQ(set[i].covariance.matrix(), splits[0].train[i].covariance.matrix());
}

TEST(SubjectStats, Invariants) {
  const auto pop = fixtures::small_population(1, 6);
  const auto s = subject_stats(pop[0], 1);
  EXPECT_EQ(s.subject_id, pop[0].id);
  EXPECT_GE(s.overall_dispersion, 0.0);
  EXPECT_GE(s.class1_dispersion, 0.0);
  EXPECT_GE(s.class2_dispersion, 0.0);
  EXPECT_GE(s.intra_accuracy, 0.0);
  EXPECT_LE(s.intra_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(s.intra_accuracy, intra_subject_accuracy(pop[0], 1));
}
