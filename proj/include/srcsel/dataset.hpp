#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srcsel/spd.hpp"

namespace srcsel {

/// One subject's labelled trials. Labels are 1 and 2 for the two-class
/// motor-imagery task.
struct SubjectData {
  std::string id;
  std::vector<Trial> trials;
  std::map<std::string, std::string> metadata;

  Eigen::Index dim() const {
    return trials.empty() ? 0 : trials.front().covariance.dim();
  }
  std::size_t count(int label) const;
};

inline constexpr int kCovsetVersion = 1;

/// Covset document: {version, dim, subjects: [{id, metadata, trials:
/// [{label, matrix}]}]}, matrix being the row-major lower triangle
/// (a00, a10, a11, a20, ...). A full n² row-major list is also accepted on
/// read and must be symmetric to 1e-12 relative.
nlohmann::json covset_to_json(std::span<const SubjectData> subjects);
std::vector<SubjectData> covset_from_json(const nlohmann::json& doc);

/// Paths ending in ".gz" are gzip-compressed transparently.
std::vector<SubjectData> covset_read(const std::filesystem::path& path);
void covset_write(const std::filesystem::path& path,
                  std::span<const SubjectData> subjects);

/// Reads or writes a whole file, gunzipping / gzipping by extension.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& contents);

/// Which subject pairs are planted as compatible, and how strongly. Subject i
/// belongs to group i % groups; members of a group share a class-difference
/// direction and the rotational part of their domain shift. All subject-level
/// variation is multiplied by SynthConfig::domain_shift_scale.
struct TransferabilityStructure {
  int groups = 1;
  /// Per-subject perturbation of the group's class-difference direction.
  double direction_jitter = 0.2;
  /// Per-subject perturbation of the group's rotation, relative to its size.
  double rotation_jitter = 0.2;
  /// Log-normal spread of per-subject class separation.
  double separation_spread = 0.3;
  /// Exponent applied to group spectra; larger values make groups' class
  /// structure more distinct from each other.
  double spectrum_sharpness = 2.0;
};

struct SynthConfig {
  int n_subjects = 12;
  int trials_per_class = 22;
  int dim = 9;
  double class_separation = 1.0;
  /// Per-trial tangent noise: E δ_R²(class mean, trial) = dim · scale².
  double subject_dispersion = 0.2;
  double domain_shift_scale = 1.0;
  TransferabilityStructure transferability{};
  std::uint64_t seed = 0;

  void validate() const;
};

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& cfg);

/// Deterministic given cfg.seed. Subject ids are "synth-000", "synth-001", ...
/// and each subject records its group in metadata["group"].
std::vector<SubjectData> synth_generate(const SynthConfig& cfg);

}  // namespace srcsel
