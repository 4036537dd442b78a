#pragma once

// Run configuration and the on-disk forms of experiment results.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srcsel/cv.hpp"
#include "srcsel/experiment.hpp"
#include "srcsel/predictor.hpp"
#include "srcsel/rpa.hpp"

namespace srcsel {

struct RunConfig {
  /// Calibration splits, features and the accuracy matrix.
  std::uint64_t seed = 1;
  /// One selection run per entry (Random's shuffle); results are averaged.
  std::vector<std::uint64_t> selection_seeds{0};
  /// Leave-groups-out fold layout and predictor initialization.
  std::uint64_t predictor_seed = 0;
  int group_folds = 10;
  /// Unset: 0.65 for real data, none for synthetic data.
  std::optional<double> filter_intra;
  CvConfig cv;
  RpaConfig rpa;
  TrainConfig train;

  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& c);
/// Unknown keys are rejected with ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" to a JSON object. The value is parsed as JSON when
/// possible and kept as a string otherwise. Throws ConfigError on a
/// malformed assignment.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Shortest text that reads back to the same double.
std::string format_double(double x);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

// CSV forms. Every table starts with a header row.
std::string matrix_csv(const AccuracyMatrix& m);
nlohmann::json matrix_to_json(const AccuracyMatrix& m);
AccuracyMatrix matrix_from_json(const nlohmann::json& j);

nlohmann::json stats_to_json(std::span<const SubjectStats> stats);

std::string pair_table_csv(std::span<const PairRecord> records);
/// Throws ParseError naming the offending line.
std::vector<PairRecord> pair_table_from_csv(const std::string& text);

nlohmann::json folds_to_json(std::span<const GroupFold> folds);
std::vector<GroupFold> folds_from_json(const nlohmann::json& j);

std::string comparison_csv(const MethodComparison& c);
/// One row per unordered method pair: p-value and indistinguishable flag.
std::string significance_csv(const MethodComparison& c);
/// Per-run, per-target achieved accuracy, one column per method.
std::string outcomes_csv(std::span<const MethodOutcomes> runs,
                         std::span<const std::uint64_t> seeds);
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace srcsel
