#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "srcsel/cv.hpp"
#include "srcsel/dataset.hpp"

namespace srcsel {

/// Summary of one subject's full data set.
struct SubjectStats {
  std::string subject_id;
  SpdMatrixd overall_mean;
  SpdMatrixd class1_mean;
  SpdMatrixd class2_mean;
  double overall_dispersion = 0.0;
  double class1_dispersion = 0.0;
  double class2_dispersion = 0.0;
  /// Mean MDM accuracy over calibration splits of the subject's own trials.
  double intra_accuracy = 0.0;
};

SubjectStats subject_stats(const SubjectData& subject, std::uint64_t seed,
                           const CvConfig& cv = {});

/// Feature layout, fixed. Distances are squared affine-invariant distances
/// between class means after each side is recentered on its own mean.
enum class Feature : std::size_t {
  kDistT1T2,
  kDistS1S2,
  kDistT1S1,
  kDistT1S2,
  kDistT2S1,
  kDistT2S2,
  kDispT,
  kDispT1,
  kDispT2,
  kDispS,
  kDispS1,
  kDispS2,
  kSourceIntraAccuracy,
  kDiffClassGap,    // DistT1T2 − DistS1S2
  kDiffT1,          // DistT1S2 − DistT1S1
  kDiffT2,          // DistT2S1 − DistT2S2
  kDiffDisp1,       // DispS1 − DispT1
  kDiffDisp2,       // DispS2 − DispT2
};

inline constexpr std::size_t kFeatureCount = 18;

/// Column names in layout order.
std::span<const std::string_view, kFeatureCount> feature_names();

struct PairFeatures {
  std::array<double, kFeatureCount> values{};

  double operator[](Feature f) const {
    return values[static_cast<std::size_t>(f)];
  }
  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
};

/// Features for transferring `source` onto a target whose calibration data is
/// `target_train`. The source side uses source_stats (all source trials); the
/// target side uses only the given trials.
PairFeatures pair_features(const SubjectStats& source_stats,
                           std::span<const Trial> target_train);

/// Builds the target-side statistics once for reuse across many sources.
struct TargetSide {
  SpdMatrixd class1;  // recentered
  SpdMatrixd class2;
  double dispersion, dispersion1, dispersion2;
};
TargetSide target_side(std::span<const Trial> target_train);
PairFeatures pair_features(const SubjectStats& source_stats,
                           const TargetSide& target);

/// Calibration set used for a target's features: the training part of the
/// first calibration split.
std::vector<Trial> feature_calibration_set(const SubjectData& target,
                                           std::uint64_t seed,
                                           const CvConfig& cv = {});

}  // namespace srcsel
