#include "srcsel/dataset.hpp"

#include <unsupported/Eigen/MatrixFunctions>
#include <zlib.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "srcsel/random.hpp"

namespace srcsel {

namespace {

using nlohmann::json;
using Mat = MatrixX<double>;

bool ends_with_gz(const std::filesystem::path& p) {
  return p.extension() == ".gz";
}

json lower_triangle(const Mat& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out.push_back(m(i, j));
  return out;
}

Mat matrix_from_list(const json& list, Eigen::Index n, const std::string& where) {
  if (!list.is_array()) throw ParseError(where + ": matrix is not an array");
  const auto tri = static_cast<std::size_t>(n * (n + 1) / 2);
  const auto full = static_cast<std::size_t>(n * n);
  Mat m(n, n);
  auto value = [&](std::size_t idx) {
    const auto& v = list[idx];
    if (!v.is_number()) throw ParseError(where + ": non-numeric entry");
    return v.get<double>();
  };
  if (list.size() == tri) {
    std::size_t idx = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        m(i, j) = value(idx++);
        m(j, i) = m(i, j);
      }
    return m;
  }
  if (list.size() == full) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        m(i, j) = value(static_cast<std::size_t>(i * n + j));
    const double scale = m.cwiseAbs().maxCoeff();
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
      throw ValidationError(where + ": matrix is not symmetric (max |A-Aᵀ| = " +
                            std::to_string(asym) + ")");
    }
    return m;
  }
  throw ParseError(where + ": expected " + std::to_string(tri) + " or " +
                   std::to_string(full) + " entries, got " +
                   std::to_string(list.size()));
}

std::string gunzip_file(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw ParseError("cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  int got = 0;
  while ((got = gzread(f, buf, sizeof buf)) > 0) out.append(buf, got);
  const bool failed = got < 0;
  gzclose(f);
  if (failed) throw ParseError("gzip stream error in " + path.string());
  return out;
}

void gzip_file(const std::filesystem::path& path, const std::string& data) {
  // mtime and name are not stored by gzwrite, so output is reproducible
  gzFile f = gzopen(path.c_str(), "wb9");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const int wrote = gzwrite(f, data.data(), static_cast<unsigned>(data.size()));
  gzclose(f);
  if (wrote != static_cast<int>(data.size())) {
    throw std::runtime_error("short gzip write to " + path.string());
  }
}

Mat normalized(const Mat& m) { return m / m.norm(); }

// U diag(λ) Uᵀ with |λ| sharpened by the given exponent, unit Frobenius norm.
Mat random_direction(Eigen::Index n, double sharpness, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::VectorXd l(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = n01(rng);
    l(i) = std::copysign(std::pow(std::abs(z), sharpness), z);
  }
  const Mat u = random_orthogonal(n, rng);
  return normalized(u * l.asDiagonal() * u.transpose());
}

Mat random_skew(Eigen::Index n, Rng& rng) {
  const Mat g = standard_normal(n, n, rng);
  return (g - g.transpose()) / std::sqrt(2.0);
}

}  // namespace

std::size_t SubjectData::count(int label) const {
  std::size_t c = 0;
  for (const auto& t : trials) c += t.label == label ? 1 : 0;
  return c;
}

json covset_to_json(std::span<const SubjectData> subjects) {
  json doc;
  doc["version"] = kCovsetVersion;
  Eigen::Index dim = 0;
  for (const auto& s : subjects) {
    if (s.dim() == 0) continue;
    if (dim == 0) dim = s.dim();
    if (s.dim() != dim) throw InputError("covset: subjects differ in dimension");
  }
  doc["dim"] = dim;
  doc["subjects"] = json::array();
  for (const auto& s : subjects) {
    json js;
    js["id"] = s.id;
    js["metadata"] = json::object();
    for (const auto& [k, v] : s.metadata) js["metadata"][k] = v;
    js["trials"] = json::array();
    for (const auto& t : s.trials) {
      if (t.covariance.dim() != dim) {
        throw InputError("covset: subject " + s.id + " mixes dimensions");
      }
      js["trials"].push_back(
          json{{"label", t.label}, {"matrix", lower_triangle(t.covariance.matrix())}});
    }
    doc["subjects"].push_back(std::move(js));
  }
  return doc;
}

std::vector<SubjectData> covset_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("covset: top level is not an object");
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    throw ParseError("covset: missing integer 'version'");
  }
  if (doc["version"].get<int>() != kCovsetVersion) {
    throw ParseError("covset: unsupported version " + doc["version"].dump());
  }
  if (!doc.contains("dim") || !doc["dim"].is_number_integer() ||
      doc["dim"].get<long>() < 0) {
    throw ParseError("covset: missing non-negative integer 'dim'");
  }
  if (!doc.contains("subjects") || !doc["subjects"].is_array()) {
    throw ParseError("covset: missing 'subjects' array");
  }
  const auto dim = static_cast<Eigen::Index>(doc["dim"].get<long>());
  std::vector<SubjectData> out;
  std::size_t si = 0;
  for (const auto& js : doc["subjects"]) {
    const std::string where_s = "covset subject #" + std::to_string(si);
    if (!js.is_object() || !js.contains("id") || !js["id"].is_string()) {
      throw ParseError(where_s + ": missing string 'id'");
    }
    SubjectData s;
    s.id = js["id"].get<std::string>();
    if (js.contains("metadata")) {
      if (!js["metadata"].is_object()) {
        throw ParseError(where_s + ": 'metadata' is not an object");
      }
      for (const auto& [k, v] : js["metadata"].items()) {
        s.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    if (!js.contains("trials") || !js["trials"].is_array()) {
      throw ParseError(where_s + ": missing 'trials' array");
    }
    if (dim == 0 && !js["trials"].empty()) {
      throw ParseError(where_s + ": trials present but dim is 0");
    }
    std::size_t ti = 0;
    for (const auto& jt : js["trials"]) {
      const std::string where =
          "subject '" + s.id + "' trial " + std::to_string(ti);
      if (!jt.is_object() || !jt.contains("label") ||
          !jt["label"].is_number_integer() || !jt.contains("matrix")) {
        throw ParseError(where + ": expected {label: int, matrix: [...]}");
      }
      const Mat m = matrix_from_list(jt["matrix"], dim, where);
      try {
        s.trials.push_back(Trial{SpdMatrixd(m), jt["label"].get<int>()});
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      } catch (const InputError& e) {
        throw ValidationError(where + ": " + e.what());
      }
      ++ti;
    }
    out.push_back(std::move(s));
    ++si;
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  if (ends_with_gz(path)) return gunzip_file(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& contents) {
  if (ends_with_gz(path)) {
    gzip_file(path, contents);
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<SubjectData> covset_read(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return covset_from_json(doc);
}

void covset_write(const std::filesystem::path& path,
                  std::span<const SubjectData> subjects) {
  write_text_file(path, covset_to_json(subjects).dump() + "\n");
}

void SynthConfig::validate() const {
  if (n_subjects < 0 || trials_per_class < 1 || dim < 1) {
    throw InputError("SynthConfig: counts must be positive");
  }
  if (class_separation < 0 || subject_dispersion < 0 ||
      domain_shift_scale < 0 || transferability.direction_jitter < 0 ||
      transferability.rotation_jitter < 0 ||
      transferability.separation_spread < 0 ||
      transferability.spectrum_sharpness < 0) {
    throw InputError("SynthConfig: scales must be >= 0");
  }
  if (transferability.groups < 1) {
    throw InputError("SynthConfig: transferability.groups must be >= 1");
  }
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  try {
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    c.trials_per_class = j.value("trials_per_class", c.trials_per_class);
    c.dim = j.value("dim", c.dim);
    c.class_separation = j.value("class_separation", c.class_separation);
    c.subject_dispersion = j.value("subject_dispersion", c.subject_dispersion);
    c.domain_shift_scale = j.value("domain_shift_scale", c.domain_shift_scale);
    c.seed = j.value("seed", c.seed);
    if (j.contains("transferability_structure")) {
      const auto& t = j["transferability_structure"];
      auto& s = c.transferability;
      s.groups = t.value("groups", s.groups);
      s.direction_jitter = t.value("direction_jitter", s.direction_jitter);
      s.rotation_jitter = t.value("rotation_jitter", s.rotation_jitter);
      s.separation_spread = t.value("separation_spread", s.separation_spread);
      s.spectrum_sharpness = t.value("spectrum_sharpness", s.spectrum_sharpness);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

json synth_config_to_json(const SynthConfig& c) {
  const auto& s = c.transferability;
  return json{{"n_subjects", c.n_subjects},
              {"trials_per_class", c.trials_per_class},
              {"dim", c.dim},
              {"class_separation", c.class_separation},
              {"subject_dispersion", c.subject_dispersion},
              {"domain_shift_scale", c.domain_shift_scale},
              {"seed", c.seed},
              {"transferability_structure",
               {{"groups", s.groups},
                {"direction_jitter", s.direction_jitter},
                {"rotation_jitter", s.rotation_jitter},
                {"separation_spread", s.separation_spread},
                {"spectrum_sharpness", s.spectrum_sharpness}}}};
}

std::vector<SubjectData> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = cfg.dim;
  const double shift = cfg.domain_shift_scale;
  const auto& ts = cfg.transferability;

  Rng global(derive_seed(cfg.seed, 0));
  const Mat base_direction = random_direction(n, 1.0, global);

  struct Group {
    Mat direction;
    Mat skew;
  };
  std::vector<Group> groups;
  for (int g = 0; g < ts.groups; ++g) {
    Rng rng(derive_seed(cfg.seed, 1 + static_cast<std::uint64_t>(g)));
    Group grp;
    grp.direction = random_direction(n, ts.spectrum_sharpness, rng);
    grp.skew = random_skew(n, rng);
    groups.push_back(std::move(grp));
  }

  // Isotropic tangent noise with E‖S‖² = n σ²: diagonal variance 2σ²/(n+1),
  // off-diagonal σ²/(n+1).
  const double entry_scale =
      cfg.subject_dispersion * std::sqrt(2.0 / double(n + 1));

  std::vector<SubjectData> out;
  out.reserve(static_cast<std::size_t>(cfg.n_subjects));
  for (int s = 0; s < cfg.n_subjects; ++s) {
    Rng rng(derive_seed(cfg.seed, 1'000'000 + static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> n01(0.0, 1.0);
    const int g = s % ts.groups;
    const Group& grp = groups[static_cast<std::size_t>(g)];

    Mat direction = base_direction;
    Mat shift_map = Mat::Identity(n, n);
    double separation = cfg.class_separation;
    {
      const Mat jitter_dir = normalized(symmetric_gaussian(n, 1.0, rng));
      const Mat jitter_rot = random_skew(n, rng);
      const Mat spd_part = symmetric_gaussian(n, 0.5, rng);
      const double z = n01(rng);
      if (shift > 0.0) {
        direction = normalized(base_direction +
                               shift * (grp.direction - base_direction) +
                               shift * ts.direction_jitter * jitter_dir);
        const Mat rotation =
            (shift * (grp.skew + ts.rotation_jitter * jitter_rot)).exp();
        shift_map = sym_exp(shift * spd_part) * rotation;
        separation *= std::exp(shift * ts.separation_spread * z);
      }
    }

    SubjectData subject;
    subject.id = [&] {
      std::string num = std::to_string(s);
      return "synth-" + std::string(num.size() < 3 ? 3 - num.size() : 0, '0') +
             num;
    }();
    subject.metadata["source"] = "synthetic";
    subject.metadata["group"] = std::to_string(g);
    subject.metadata["separation"] = std::to_string(separation);

    for (int label = 1; label <= 2; ++label) {
      const double sign = label == 1 ? -1.0 : 1.0;
      const SpdMatrixd mean(sym_exp(sign * 0.5 * separation * direction));
      const Mat half = spd_sqrt(mean);
      for (int t = 0; t < cfg.trials_per_class; ++t) {
        Mat x = half * sym_exp(symmetric_gaussian(n, entry_scale, rng)) * half;
        Mat c = shift_map * x * shift_map.transpose();
        subject.trials.push_back(Trial{SpdMatrixd(c), label});
      }
    }
    out.push_back(std::move(subject));
  }
  return out;
}

}  // namespace srcsel
