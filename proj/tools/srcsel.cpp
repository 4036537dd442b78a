// srcsel: command-line driver for the source-selection experiments.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "srcsel/dataset.hpp"
#include "srcsel/errors.hpp"
#include "srcsel/experiment.hpp"
#include "srcsel/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace srcsel;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

// Files and directories created by this run, removed again on failure.
class Outputs {
 public:
  void directory(const fs::path& dir) {
    if (dir.empty() || fs::exists(dir)) {
      if (!dir.empty() && !fs::is_directory(dir)) {
        throw InputError(dir.string() + " exists and is not a directory");
      }
      return;
    }
    directory(dir.parent_path());
    fs::create_directory(dir);
    dirs_.push_back(dir);
  }

  void file(const fs::path& path, const std::string& content,
            const json& meta) {
    directory(path.parent_path());
    write(path, content);
    write(fs::path(path.string() + ".meta.json"), meta.dump(2) + "\n");
  }

  // For files written by other code.
  void track(const fs::path& path) { files_.push_back(path); }

  void rollback() noexcept {
    std::error_code ec;
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(*it, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove(*it, ec);
  }

 private:
  void write(const fs::path& path, const std::string& content) {
    files_.push_back(path);
    write_text_file(path, content);
  }

  std::vector<fs::path> files_;
  std::vector<fs::path> dirs_;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides,
                  "Override a config key, e.g. --set rpa.rotation_restarts=2");
  cmd->add_option("--threads", c.threads,
                  "Worker threads (0 = all cores); results do not depend on it");
}

json load_config_json(const Common& c) {
  json j = json::object();
  if (!c.config_path.empty()) {
    j = json::parse(read_text_file(c.config_path), nullptr, false);
    if (j.is_discarded()) {
      throw ConfigError("config " + c.config_path + " is not valid JSON");
    }
  }
  for (const auto& o : c.overrides) apply_override(j, o);
  return j;
}

struct LoadedData {
  std::vector<SubjectData> subjects;
  std::vector<SubjectStats> stats;
  std::string digest;
  std::optional<double> filter;
  std::size_t dropped = 0;
};

bool all_synthetic(std::span<const SubjectData> subjects) {
  return std::all_of(subjects.begin(), subjects.end(), [](const SubjectData& s) {
    const auto it = s.metadata.find("source");
    return it != s.metadata.end() && it->second == "synthetic";
  });
}

LoadedData load_data(const std::string& path, const RunConfig& cfg,
                     std::optional<double> filter_flag, bool no_filter,
                     unsigned threads) {
  LoadedData d;
  d.digest = file_digest(path);
  auto subjects = covset_read(path);
  if (subjects.size() < 2) {
    throw ValidationError(path + ": need at least two subjects");
  }
  auto stats = compute_stats(subjects, cfg.seed, cfg.cv, threads);
  d.filter = filter_flag ? filter_flag : cfg.filter_intra;
  if (!d.filter && !all_synthetic(subjects)) d.filter = 0.65;
  if (no_filter) d.filter.reset();
  if (!d.filter) {
    d.subjects = std::move(subjects);
    d.stats = std::move(stats);
    return d;
  }
  for (std::size_t i : intra_filter(stats, *d.filter)) {
    d.subjects.push_back(std::move(subjects[i]));
    d.stats.push_back(std::move(stats[i]));
  }
  d.dropped = stats.size() - d.subjects.size();
  if (d.subjects.size() < 2) {
    throw ValidationError("fewer than two subjects pass the intra-subject filter");
  }
  return d;
}

json metadata(const std::string& command, const RunConfig& cfg,
              const LoadedData* data, json inputs = json::object()) {
  json m{{"command", command},
         {"config", run_config_to_json(cfg)},
         {"seeds",
          {{"seed", cfg.seed},
           {"selection_seeds", cfg.selection_seeds},
           {"predictor_seed", cfg.predictor_seed}}},
         {"inputs", std::move(inputs)}};
  if (data) {
    m["dataset_digest"] = data->digest;
    m["filter_intra"] = data->filter ? json(*data->filter) : json(nullptr);
    m["filtered_out"] = data->dropped;
    json ids = json::array();
    for (const auto& s : data->subjects) ids.push_back(s.id);
    m["subjects"] = ids;
  }
  return m;
}

AccuracyMatrix obtain_matrix(const LoadedData& d, const RunConfig& cfg,
                             const std::string& matrix_path, unsigned threads) {
  if (matrix_path.empty()) {
    return build_accuracy_matrix(d.subjects, cfg.seed, cfg.rpa, cfg.cv, threads);
  }
  const json j = json::parse(read_text_file(matrix_path), nullptr, false);
  if (j.is_discarded()) throw ParseError(matrix_path + ": not valid JSON");
  AccuracyMatrix full = matrix_from_json(j);
  std::vector<std::string> ids;
  for (const auto& s : d.subjects) ids.push_back(s.id);
  try {
    return full.restricted(ids);
  } catch (const InputError& e) {
    throw ValidationError(matrix_path + " does not cover the data: " + e.what());
  }
}

std::vector<FoldPredictor> load_models(const fs::path& dir,
                                       std::span<const SubjectData> subjects) {
  const json j = json::parse(read_text_file(dir / "folds.json"), nullptr, false);
  if (j.is_discarded()) throw ParseError((dir / "folds.json").string() + ": not valid JSON");
  const auto folds = folds_from_json(j);
  std::vector<FoldPredictor> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "fold_%02zu.json", f);
    out.push_back(FoldPredictor{folds[f], model_read(dir / name)});
  }
  std::set<std::string> present;
  for (const auto& s : subjects) present.insert(s.id);
  for (const auto& f : out) {
    for (const auto* ids : {&f.fold.train_ids, &f.fold.test_ids}) {
      for (const auto& id : *ids) {
        if (!present.contains(id)) {
          throw ValidationError("model folds mention subject " + id +
                                " which is not in the data");
        }
      }
    }
  }
  return out;
}

std::vector<int> parse_candidates(const std::string& text) {
  std::vector<int> ks;
  auto to_int = [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || v < 1) {
      throw ConfigError("--candidates: '" + text + "' is not a count, list or range");
    }
    return v;
  };
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const int lo = to_int(text.substr(0, dots));
    const int hi = to_int(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("--candidates: empty range " + text);
    for (int k = lo; k <= hi; ++k) ks.push_back(k);
    return ks;
  }
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    ks.push_back(to_int(text.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

std::vector<SelectionBench> benches_for(const LoadedData& d,
                                        const AccuracyMatrix& m,
                                        std::span<const FoldPredictor> folds,
                                        const RunConfig& cfg) {
  std::vector<SelectionBench> out;
  for (auto s : cfg.selection_seeds) {
    out.push_back(SelectionBench{d.subjects, d.stats, &m, folds, cfg.cv, cfg.seed, s});
  }
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source selection for covariance-based BCI transfer learning"};
  app.require_subcommand(1);

  Common common;
  std::string data_path, out_path, matrix_path, features_path, models_path;
  std::string synth_config, compare_k = "6", sweep_k = "1..10";
  std::optional<double> filter_intra;
  bool no_filter = false;
  int group_folds = 0;

  auto add_filter = [&](CLI::App* cmd) {
    cmd->add_option("--filter-intra", filter_intra,
                    "Keep subjects with intra-subject accuracy above this "
                    "(default 0.65 for real data, off for synthetic)");
    cmd->add_flag("--no-filter-intra", no_filter, "Disable the intra filter");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic covset");
  synth->add_option("--config", synth_config, "Synthetic generator config (JSON)")
      ->check(CLI::ExistingFile);
  synth->add_option("--set", common.overrides, "Override a generator key");
  synth->add_option("--out", out_path, "Output covset (.json or .json.gz)")->required();

  auto* stats = app.add_subcommand("stats", "Per-subject means, dispersions, intra accuracy");
  auto* matrix = app.add_subcommand("matrix", "Pairwise transfer accuracy matrix");
  auto* features = app.add_subcommand("features", "Pair features with true accuracies");
  auto* train = app.add_subcommand("train-predictor", "Leave-groups-out TPP models");
  auto* compare = app.add_subcommand("compare", "Method comparison with significance");
  auto* sweep = app.add_subcommand("sweep", "Gap to Oracle against candidate count");

  for (auto* cmd : {stats, matrix, features, train, compare, sweep}) {
    add_common(cmd, common);
    cmd->add_option("--out", out_path, "Output file or directory")->required();
  }
  for (auto* cmd : {stats, matrix, features, compare, sweep}) {
    cmd->add_option("--data", data_path, "Input covset")->required()->check(CLI::ExistingFile);
    add_filter(cmd);
  }
  for (auto* cmd : {features, compare, sweep}) {
    cmd->add_option("--matrix", matrix_path,
                    "Reuse an accuracy_matrix.json computed with the same seed")
        ->check(CLI::ExistingFile);
  }
  train->add_option("--features", features_path, "Feature table from `features`")
      ->required()->check(CLI::ExistingFile);
  train->add_option("--folds", group_folds, "Leave-groups-out folds (default from config)");
  for (auto* cmd : {compare, sweep}) {
    cmd->add_option("--models", models_path, "Directory from train-predictor")
        ->required()->check(CLI::ExistingDirectory);
  }
  compare->add_option("--candidates", compare_k, "Candidates k per method");
  sweep->add_option("--candidates", sweep_k, "Range a..b or list a,b,c");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "srcsel: " << e.what() << "\n";
    return kExitUsage;
  }

  Outputs outputs;
  try {
    if (synth->parsed()) {
      json j = json::object();
      if (!synth_config.empty()) {
        j = json::parse(read_text_file(synth_config), nullptr, false);
        if (j.is_discarded()) throw ConfigError(synth_config + " is not valid JSON");
      }
      for (const auto& o : common.overrides) apply_override(j, o);
      SynthConfig cfg;
      try {
        cfg = synth_config_from_json(j);
        cfg.validate();
      } catch (const InputError& e) {
        throw ConfigError(e.what());
      } catch (const ParseError& e) {
        throw ConfigError(e.what());
      }
      const auto subjects = synth_generate(cfg);
      const fs::path out(out_path);
      outputs.directory(out.parent_path());
      const fs::path meta_path(out.string() + ".meta.json");
      outputs.track(out);
      outputs.track(meta_path);
      covset_write(out, subjects);
      write_text_file(meta_path, json{{"command", "synth"},
                                      {"config", synth_config_to_json(cfg)},
                                      {"seeds", {{"seed", cfg.seed}}},
                                      {"dataset_digest", file_digest(out)}}
                                         .dump(2) + "\n");
      return 0;
    }

    RunConfig cfg = run_config_from_json(load_config_json(common));
    if (group_folds > 0) cfg.group_folds = group_folds;
    cfg.validate();
    const unsigned threads = common.threads;
    std::vector<int> ks;
    if (compare->parsed() || sweep->parsed()) {
      ks = parse_candidates(compare->parsed() ? compare_k : sweep_k);
      if (compare->parsed() && ks.size() != 1) {
        throw ConfigError("compare takes a single candidate count");
      }
    }

    if (train->parsed()) {
      const auto records = pair_table_from_csv(read_text_file(features_path));
      if (records.empty()) throw ValidationError(features_path + ": no pairs");
      const auto folds = train_fold_predictors(records, cfg.group_folds,
                                               cfg.predictor_seed, cfg.train, threads);
      const fs::path dir(out_path);
      const json inputs{{"features", features_path},
                        {"features_digest", file_digest(features_path)}};
      const json meta = metadata("train-predictor", cfg, nullptr, inputs);
      std::vector<GroupFold> layout;
      for (const auto& f : folds) layout.push_back(f.fold);
      outputs.file(dir / "folds.json", folds_to_json(layout).dump(2) + "\n", meta);
      for (std::size_t f = 0; f < folds.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "fold_%02zu.json", f);
        outputs.file(dir / name, model_to_json(folds[f].model).dump() + "\n", meta);
      }
      return 0;
    }

    const LoadedData data = load_data(data_path, cfg, filter_intra, no_filter, threads);
    const std::string command = app.get_subcommands().front()->get_name();
    json inputs{{"data", data_path}};
    if (!matrix_path.empty()) inputs["matrix"] = matrix_path;
    if (!models_path.empty()) inputs["models"] = models_path;
    const json meta = metadata(command, cfg, &data, inputs);

    if (stats->parsed()) {
      outputs.file(out_path, stats_to_json(data.stats).dump(2) + "\n", meta);
      return 0;
    }

    const AccuracyMatrix m = obtain_matrix(data, cfg, matrix_path, threads);
    if (matrix->parsed()) {
      const fs::path dir(out_path);
      outputs.file(dir / "accuracy_matrix.csv", matrix_csv(m), meta);
      outputs.file(dir / "accuracy_matrix.json", matrix_to_json(m).dump(2) + "\n", meta);
      return 0;
    }
    if (features->parsed()) {
      const auto records =
          build_pair_table(data.subjects, data.stats, m, cfg.seed, cfg.cv, threads);
      outputs.file(out_path, pair_table_csv(records), meta);
      return 0;
    }

    const auto folds = load_models(models_path, data.subjects);
    const auto benches = benches_for(data, m, folds, cfg);
    const fs::path dir(out_path);
    json run_meta = meta;
    run_meta["candidates"] = ks;
    if (compare->parsed()) {
      std::vector<MethodOutcomes> runs;
      for (const auto& b : benches) {
        runs.push_back(run_selection(b, all_methods(), ks.front(), threads));
      }
      const MethodComparison c = compare_methods(runs);
      outputs.file(dir / "comparison.csv", comparison_csv(c), run_meta);
      outputs.file(dir / "significance.csv", significance_csv(c), run_meta);
      outputs.file(dir / "outcomes.csv", outcomes_csv(runs, cfg.selection_seeds), run_meta);
      return 0;
    }
    if (sweep->parsed()) {
      const auto rows = candidate_sweep(benches, all_methods(), ks, threads);
      outputs.file(dir / "sweep.csv", sweep_csv(rows), run_meta);
      return 0;
    }
  } catch (const std::exception& e) {
    outputs.rollback();
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "srcsel: " << msg << "\n";
    return exit_code_for(e);
  }
  return 0;
}
