#include "srcsel/experiment.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "srcsel/parallel.hpp"
#include "srcsel/random.hpp"

namespace srcsel {

std::vector<SubjectStats> compute_stats(std::span<const SubjectData> subjects,
                                        std::uint64_t seed, const CvConfig& cv,
                                        unsigned threads) {
  std::vector<std::optional<SubjectStats>> slots(subjects.size());
  parallel_for(subjects.size(), threads, [&](std::size_t i) {
    slots[i] = subject_stats(subjects[i], seed, cv);
  });
  std::vector<SubjectStats> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<std::size_t> intra_filter(std::span<const SubjectStats> stats,
                                      double threshold) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].intra_accuracy > threshold) keep.push_back(i);
  }
  return keep;
}

std::vector<PairRecord> build_pair_table(std::span<const SubjectData> subjects,
                                         std::span<const SubjectStats> stats,
                                         const AccuracyMatrix& matrix,
                                         std::uint64_t seed, const CvConfig& cv,
                                         unsigned threads) {
  if (stats.size() != subjects.size()) {
    throw InputError("build_pair_table: stats and subjects differ in length");
  }
  const std::size_t n = subjects.size();
  std::vector<std::vector<PairRecord>> per_target(n);
  parallel_for(n, threads, [&](std::size_t t) {
    const TargetSide side =
        target_side(feature_calibration_set(subjects[t], seed, cv));
    for (std::size_t s = 0; s < n; ++s) {
      if (s == t) continue;
      per_target[t].push_back(PairRecord{
          subjects[s].id, subjects[t].id, pair_features(stats[s], side),
          matrix.at(subjects[t].id, subjects[s].id)});
    }
  });
  std::vector<PairRecord> out;
  out.reserve(n * (n > 0 ? n - 1 : 0));
  for (auto& rows : per_target) {
    for (auto& r : rows) out.push_back(std::move(r));
  }
  return out;
}

std::vector<PairRecord> pairs_within(std::span<const PairRecord> records,
                                     std::span<const std::string> ids) {
  const std::set<std::string> keep(ids.begin(), ids.end());
  std::vector<PairRecord> out;
  for (const auto& r : records) {
    if (keep.contains(r.source_id) && keep.contains(r.target_id)) {
      out.push_back(r);
    }
  }
  return out;
}

std::vector<std::string> record_subjects(std::span<const PairRecord> records) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& r : records) {
    for (const auto* id : {&r.target_id, &r.source_id}) {
      if (seen.insert(*id).second) ids.push_back(*id);
    }
  }
  return ids;
}

std::vector<FoldPredictor> train_fold_predictors(
    std::span<const PairRecord> records, int n_folds, std::uint64_t seed,
    TrainConfig train, unsigned threads) {
  train.validate();
  const auto ids = record_subjects(records);
  const auto folds = leave_groups_out_folds(ids, n_folds, seed);
  std::vector<std::optional<FoldPredictor>> slots(folds.size());
  parallel_for(folds.size(), threads, [&](std::size_t f) {
    const auto pairs = pairs_within(records, folds[f].train_ids);
    if (pairs.size() < 2) {
      throw InputError("train_fold_predictors: fold " + std::to_string(f) +
                       " has fewer than two training pairs");
    }
    std::vector<PairFeatures> x;
    std::vector<double> y;
    for (const auto& p : pairs) {
      x.push_back(p.features);
      y.push_back(p.accuracy);
    }
    TrainConfig cfg = train;
    cfg.seed = derive_seed(seed, f);
    slots[f] = FoldPredictor{folds[f], tpp_train(x, y, cfg)};
  });
  std::vector<FoldPredictor> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::size_t MethodOutcomes::column(Method m) const {
  const auto it = std::find(methods.begin(), methods.end(), m);
  if (it == methods.end()) {
    throw InputError("MethodOutcomes: method " + std::string(method_name(m)) +
                     " not present");
  }
  return static_cast<std::size_t>(it - methods.begin());
}

MethodOutcomes run_selection(const SelectionBench& bench,
                             std::span<const Method> methods, int k,
                             unsigned threads) {
  if (!bench.matrix) throw InputError("run_selection: no accuracy matrix");
  if (k < 1) throw InputError("run_selection: k must be >= 1");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < bench.subjects.size(); ++i) {
    index[bench.subjects[i].id] = i;
  }
  auto lookup = [&](const std::string& id) {
    const auto it = index.find(id);
    if (it == index.end()) throw InputError("run_selection: unknown id " + id);
    return it->second;
  };

  struct Task {
    std::size_t fold;
    std::string target;
  };
  std::vector<Task> tasks;
  for (std::size_t f = 0; f < bench.folds.size(); ++f) {
    for (const auto& t : bench.folds[f].fold.test_ids) tasks.push_back({f, t});
  }
  std::vector<AccuracyMatrix> training(bench.folds.size());
  for (std::size_t f = 0; f < bench.folds.size(); ++f) {
    training[f] = bench.matrix->restricted(bench.folds[f].fold.train_ids);
  }

  MethodOutcomes out;
  out.methods.assign(methods.begin(), methods.end());
  out.accuracy.resize(Eigen::Index(tasks.size()), Eigen::Index(methods.size()));
  out.chosen.resize(tasks.size());
  for (const auto& t : tasks) out.targets.push_back(t.target);

  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    const auto& task = tasks[i];
    const auto& fp = bench.folds[task.fold];
    const std::size_t ti = lookup(task.target);
    SelectionContext ctx;
    ctx.target_id = task.target;
    ctx.target_train =
        feature_calibration_set(bench.subjects[ti], bench.data_seed, bench.cv);
    for (const auto& id : fp.fold.train_ids) {
      ctx.pool.push_back(PoolSource{id, &bench.stats[lookup(id)]});
    }
    ctx.training_matrix = &training[task.fold];
    ctx.predictor = &fp.model;
    ctx.seed = bench.selection_seed;
    const Evaluator evaluate = [&](const std::string& source) {
      return bench.matrix->at(task.target, source);
    };
    const double intra = bench.matrix->intra[bench.matrix->index_of(task.target)];
    auto& chosen = out.chosen[i];
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const Selection sel = select_with_method(methods[m], ctx, k, evaluate, intra);
      out.accuracy(Eigen::Index(i), Eigen::Index(m)) = sel.accuracy;
      chosen.push_back(sel.source_id);
    }
  });
  return out;
}

MethodComparison compare_methods(std::span<const MethodOutcomes> runs) {
  if (runs.empty()) throw InputError("compare_methods: no runs");
  const auto& first = runs.front();
  for (const auto& r : runs) {
    if (r.methods != first.methods || r.accuracy.rows() != first.accuracy.rows()) {
      throw InputError("compare_methods: runs disagree in methods or targets");
    }
  }
  // Average over runs per target id, so differing fold orders still line up.
  std::map<std::string, Eigen::VectorXd> per_target;
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.targets.size(); ++i) {
      auto [it, fresh] = per_target.try_emplace(
          r.targets[i], Eigen::VectorXd::Zero(r.accuracy.cols()));
      it->second += r.accuracy.row(Eigen::Index(i)).transpose();
    }
  }
  const auto m = first.accuracy.cols();
  const auto n_targets = Eigen::Index(per_target.size());
  if (n_targets != first.accuracy.rows()) {
    throw InputError("compare_methods: runs cover different targets");
  }
  Eigen::MatrixXd acc(n_targets, m);
  Eigen::Index row = 0;
  for (const auto& [id, v] : per_target) acc.row(row++) = v / double(runs.size());

  MethodComparison out;
  out.methods = first.methods;
  out.mean_diff = Eigen::MatrixXd::Zero(m, m);
  out.p_value = Eigen::MatrixXd::Ones(m, m);
  out.indistinguishable.assign(std::size_t(m), std::vector<bool>(std::size_t(m), true));
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a + 1; b < m; ++b) {
      std::vector<double> diffs(static_cast<std::size_t>(n_targets));
      for (Eigen::Index t = 0; t < n_targets; ++t) {
        diffs[std::size_t(t)] = acc(t, a) - acc(t, b);
      }
      double sum = 0.0;
      for (double d : diffs) sum += d;
      const double mean = 100.0 * sum / double(n_targets);
      const double p = wilcoxon_signed_rank(diffs);
      out.mean_diff(a, b) = mean;
      out.mean_diff(b, a) = -mean;
      out.p_value(a, b) = out.p_value(b, a) = p;
      out.indistinguishable[std::size_t(a)][std::size_t(b)] =
          out.indistinguishable[std::size_t(b)][std::size_t(a)] = p >= 0.05;
    }
  }
  return out;
}

std::vector<SweepRow> candidate_sweep(std::span<const SelectionBench> benches,
                                      std::span<const Method> methods,
                                      std::span<const int> k_values,
                                      unsigned threads) {
  if (benches.empty()) throw InputError("candidate_sweep: no benches");
  if (!std::is_sorted(k_values.begin(), k_values.end())) {
    throw InputError("candidate_sweep: k values must be ascending");
  }
  std::vector<Method> ms;
  for (Method m : methods) {
    if (m != Method::kIntraSubject && m != Method::kOracle) ms.push_back(m);
  }
  ms.push_back(Method::kOracle);

  std::vector<SweepRow> rows;
  for (int k : k_values) {
    std::vector<double> gap(ms.size(), 0.0);
    std::size_t count = 0;
    for (const auto& bench : benches) {
      const auto out = run_selection(bench, ms, k, threads);
      const auto oracle = out.accuracy.col(Eigen::Index(ms.size() - 1));
      for (std::size_t j = 0; j < ms.size(); ++j) {
        gap[j] += (oracle - out.accuracy.col(Eigen::Index(j))).sum();
      }
      count += out.targets.size();
    }
    for (std::size_t j = 0; j < ms.size(); ++j) {
      if (ms[j] == Method::kMaxOfMethods && k % 3 != 0) continue;
      if (std::find(methods.begin(), methods.end(), ms[j]) == methods.end()) {
        continue;
      }
      rows.push_back(SweepRow{ms[j], k, gap[j] / double(count)});
    }
  }
  return rows;
}

}  // namespace srcsel
