#include "srcsel/report.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "srcsel/dataset.hpp"
#include "srcsel/random.hpp"

namespace srcsel {

using nlohmann::json;

namespace {

// Copies j[key] into out when present and records the key as known.
template <typename T>
void read_field(const json& j, const char* key, T& out,
                std::set<std::string>& known) {
  known.insert(key);
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw ConfigError("unknown config key '" + where + key + "'");
    }
  }
}

const json& object_at(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) {
    throw ConfigError(std::string("config key '") + key + "' must be an object");
  }
  return j.at(key);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": not a number: '" + s +
                     "'");
  }
}

std::string methods_header(std::span<const Method> methods) {
  std::string out;
  for (Method m : methods) out += "," + std::string(method_name(m));
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (selection_seeds.empty()) {
    throw ConfigError("selection_seeds must not be empty");
  }
  if (group_folds < 2) throw ConfigError("group_folds must be >= 2");
  if (filter_intra && !(*filter_intra >= 0.0 && *filter_intra < 1.0)) {
    throw ConfigError("filter_intra must lie in [0, 1)");
  }
  try {
    cv.validate();
    rpa.validate();
    train.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
}

json run_config_to_json(const RunConfig& c) {
  return json{
      {"seed", c.seed},
      {"selection_seeds", c.selection_seeds},
      {"predictor_seed", c.predictor_seed},
      {"group_folds", c.group_folds},
      {"filter_intra", c.filter_intra ? json(*c.filter_intra) : json(nullptr)},
      {"cv", {{"folds", c.cv.folds}, {"train_folds", c.cv.train_folds}}},
      {"rpa",
       {{"equalize_dispersion", c.rpa.equalize_dispersion},
        {"rotation_tol", c.rpa.rotation_tol},
        {"rotation_max_iter", c.rpa.rotation_max_iter},
        {"rotation_restarts", c.rpa.rotation_restarts},
        {"karcher_tol", c.rpa.karcher.tol},
        {"karcher_max_iter", c.rpa.karcher.max_iter}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"max_epochs", c.train.max_epochs},
        {"patience", c.train.patience},
        {"validation_fraction", c.train.validation_fraction}}}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  std::set<std::string> known{"cv", "rpa", "train", "filter_intra"};
  read_field(j, "seed", c.seed, known);
  read_field(j, "selection_seeds", c.selection_seeds, known);
  read_field(j, "predictor_seed", c.predictor_seed, known);
  read_field(j, "group_folds", c.group_folds, known);
  if (j.contains("filter_intra") && !j.at("filter_intra").is_null()) {
    if (!j.at("filter_intra").is_number()) {
      throw ConfigError("filter_intra must be a number or null");
    }
    c.filter_intra = j.at("filter_intra").get<double>();
  }
  reject_unknown(j, known, "");

  const json& cv = object_at(j, "cv");
  std::set<std::string> cv_known;
  read_field(cv, "folds", c.cv.folds, cv_known);
  read_field(cv, "train_folds", c.cv.train_folds, cv_known);
  reject_unknown(cv, cv_known, "cv.");

  const json& rpa = object_at(j, "rpa");
  std::set<std::string> rpa_known;
  read_field(rpa, "equalize_dispersion", c.rpa.equalize_dispersion, rpa_known);
  read_field(rpa, "rotation_tol", c.rpa.rotation_tol, rpa_known);
  read_field(rpa, "rotation_max_iter", c.rpa.rotation_max_iter, rpa_known);
  read_field(rpa, "rotation_restarts", c.rpa.rotation_restarts, rpa_known);
  read_field(rpa, "karcher_tol", c.rpa.karcher.tol, rpa_known);
  read_field(rpa, "karcher_max_iter", c.rpa.karcher.max_iter, rpa_known);
  reject_unknown(rpa, rpa_known, "rpa.");

  const json& tr = object_at(j, "train");
  std::set<std::string> tr_known;
  read_field(tr, "learning_rate", c.train.learning_rate, tr_known);
  read_field(tr, "batch_size", c.train.batch_size, tr_known);
  read_field(tr, "max_epochs", c.train.max_epochs, tr_known);
  read_field(tr, "patience", c.train.patience, tr_known);
  read_field(tr, "validation_fraction", c.train.validation_fraction, tr_known);
  reject_unknown(tr, tr_known, "train.");

  c.validate();
  return c;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("--set: empty key in '" + path + "'");
    if (!node->is_object()) {
      throw ConfigError("--set: '" + path + "' descends into a non-object");
    }
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string format_double(double x) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(stable_hash(bytes)));
  return buf;
}

std::string matrix_csv(const AccuracyMatrix& m) {
  std::string out = "target";
  for (const auto& id : m.ids) out += "," + id;
  out += "\n";
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    out += m.ids[i];
    for (std::size_t j = 0; j < m.ids.size(); ++j) {
      out += "," + format_double(m.values(Eigen::Index(i), Eigen::Index(j)));
    }
    out += "\n";
  }
  return out;
}

json matrix_to_json(const AccuracyMatrix& m) {
  json values = json::array();
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    std::vector<double> row(std::size_t(m.values.cols()));
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) row[std::size_t(j)] = m.values(i, j);
    values.push_back(row);
  }
  return json{{"ids", m.ids},
              {"values", values},
              {"intra", m.intra},
              {"row_order", m.row_order},
              {"col_order", m.col_order}};
}

AccuracyMatrix matrix_from_json(const json& j) {
  AccuracyMatrix m;
  try {
    m.ids = j.at("ids").get<std::vector<std::string>>();
    m.intra = j.at("intra").get<std::vector<double>>();
    const auto rows = j.at("values").get<std::vector<std::vector<double>>>();
    const auto n = Eigen::Index(m.ids.size());
    if (Eigen::Index(rows.size()) != n || m.intra.size() != m.ids.size()) {
      throw ParseError("accuracy matrix: inconsistent sizes");
    }
    m.values.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (Eigen::Index(rows[std::size_t(i)].size()) != n) {
        throw ParseError("accuracy matrix: ragged row " + std::to_string(i));
      }
      for (Eigen::Index k = 0; k < n; ++k) m.values(i, k) = rows[std::size_t(i)][std::size_t(k)];
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("accuracy matrix: ") + e.what());
  }
  m.compute_orders();
  return m;
}

json stats_to_json(std::span<const SubjectStats> stats) {
  auto lower = [](const SpdMatrixd& c) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < c.dim(); ++i)
      for (Eigen::Index k = 0; k <= i; ++k) v.push_back(c.matrix()(i, k));
    return v;
  };
  json out = json::array();
  for (const auto& s : stats) {
    out.push_back({{"subject_id", s.subject_id},
                   {"intra_accuracy", s.intra_accuracy},
                   {"overall_dispersion", s.overall_dispersion},
                   {"class1_dispersion", s.class1_dispersion},
                   {"class2_dispersion", s.class2_dispersion},
                   {"overall_mean", lower(s.overall_mean)},
                   {"class1_mean", lower(s.class1_mean)},
                   {"class2_mean", lower(s.class2_mean)}});
  }
  return out;
}

std::string pair_table_csv(std::span<const PairRecord> records) {
  std::string out = "source_id,target_id";
  for (auto name : feature_names()) out += "," + std::string(name);
  out += ",accuracy\n";
  for (const auto& r : records) {
    out += r.source_id + "," + r.target_id;
    for (double v : r.features.values) out += "," + format_double(v);
    out += "," + format_double(r.accuracy) + "\n";
  }
  return out;
}

std::vector<PairRecord> pair_table_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("feature table: empty file");
  const auto header = split_csv_line(line);
  if (header.size() != kFeatureCount + 3 || header[0] != "source_id" ||
      header[1] != "target_id" || header.back() != "accuracy") {
    throw ParseError("feature table: line 1: unexpected header");
  }
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    if (header[f + 2] != feature_names()[f]) {
      throw ParseError("feature table: line 1: column " + std::to_string(f + 3) +
                       " should be " + std::string(feature_names()[f]));
    }
  }
  std::vector<PairRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("feature table: line " + std::to_string(lineno) +
                       ": expected " + std::to_string(header.size()) +
                       " cells, got " + std::to_string(cells.size()));
    }
    PairRecord r;
    r.source_id = cells[0];
    r.target_id = cells[1];
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      r.features.values[f] = parse_double(cells[f + 2], lineno);
    }
    r.accuracy = parse_double(cells.back(), lineno);
    out.push_back(std::move(r));
  }
  return out;
}

json folds_to_json(std::span<const GroupFold> folds) {
  json out = json::array();
  for (const auto& f : folds) {
    out.push_back({{"train_ids", f.train_ids}, {"test_ids", f.test_ids}});
  }
  return out;
}

std::vector<GroupFold> folds_from_json(const json& j) {
  std::vector<GroupFold> out;
  try {
    for (const auto& f : j) {
      out.push_back(GroupFold{f.at("train_ids").get<std::vector<std::string>>(),
                              f.at("test_ids").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("folds: ") + e.what());
  }
  return out;
}

std::string comparison_csv(const MethodComparison& c) {
  std::string out = "method" + methods_header(c.methods) + "\n";
  for (std::size_t a = 0; a < c.methods.size(); ++a) {
    out += std::string(method_name(c.methods[a]));
    for (std::size_t b = 0; b < c.methods.size(); ++b) {
      out += "," + format_double(c.mean_diff(Eigen::Index(a), Eigen::Index(b)));
    }
    out += "\n";
  }
  return out;
}

std::string significance_csv(const MethodComparison& c) {
  std::string out = "method_a,method_b,p_value,indistinguishable\n";
  for (std::size_t a = 0; a < c.methods.size(); ++a) {
    for (std::size_t b = a + 1; b < c.methods.size(); ++b) {
      out += std::string(method_name(c.methods[a])) + "," +
             std::string(method_name(c.methods[b])) + "," +
             format_double(c.p_value(Eigen::Index(a), Eigen::Index(b))) + "," +
             (c.indistinguishable[a][b] ? "true" : "false") + "\n";
    }
  }
  return out;
}

std::string outcomes_csv(std::span<const MethodOutcomes> runs,
                         std::span<const std::uint64_t> seeds) {
  if (runs.size() != seeds.size()) {
    throw InputError("outcomes_csv: one seed per run expected");
  }
  if (runs.empty()) return "selection_seed,target\n";
  std::string out =
      "selection_seed,target" + methods_header(runs.front().methods) + "\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& o = runs[r];
    for (std::size_t i = 0; i < o.targets.size(); ++i) {
      out += std::to_string(seeds[r]) + "," + o.targets[i];
      for (std::size_t m = 0; m < o.methods.size(); ++m) {
        out += "," + format_double(o.accuracy(Eigen::Index(i), Eigen::Index(m)));
      }
      out += "\n";
    }
  }
  return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "method,k,gap\n";
  for (const auto& r : rows) {
    out += std::string(method_name(r.method)) + "," + std::to_string(r.k) + "," +
           format_double(r.gap) + "\n";
  }
  return out;
}

}  // namespace srcsel
