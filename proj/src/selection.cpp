#include "srcsel/selection.hpp"

#include <algorithm>
#include <array>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>

#include "srcsel/random.hpp"

namespace srcsel {

namespace {

constexpr std::array<Method, 8> kMethods = {
    Method::kIntraSubject, Method::kRandom,       Method::kDistance,
    Method::kBestSource,   Method::kBestTeacher,  Method::kMaxOfMethods,
    Method::kTpp,          Method::kOracle};

// Stable ordering of pool indices by key (ascending when `ascending`).
RankedCandidates rank_by(Method method, const SelectionContext& ctx,
                         const std::vector<double>& key, bool ascending) {
  std::vector<std::size_t> idx(ctx.pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return ascending ? key[a] < key[b] : key[a] > key[b];
  });
  RankedCandidates out{method, {}, {}};
  for (auto i : idx) {
    out.ids.push_back(ctx.pool[i].id);
    out.scores.push_back(key[i]);
  }
  return out;
}

std::vector<PairFeatures> pool_features(const SelectionContext& ctx) {
  const TargetSide target = target_side(ctx.target_train);
  std::vector<PairFeatures> out;
  out.reserve(ctx.pool.size());
  for (const auto& p : ctx.pool) out.push_back(pair_features(*p.stats, target));
  return out;
}

RankedCandidates rank_best_teacher(const SelectionContext& ctx) {
  if (!ctx.training_matrix) {
    throw ConfigError("Best teacher needs a training accuracy matrix");
  }
  const AccuracyMatrix& m = *ctx.training_matrix;
  const auto n = m.values.rows();
  std::vector<double> wins(std::size_t(n), 0.0);
  std::vector<double> col_mean(std::size_t(n), 0.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != j) sum += m.values(i, j);
    col_mean[std::size_t(j)] = n > 1 ? sum / double(n - 1) : 0.0;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (best < 0 || m.values(i, j) > m.values(i, best) ||
          (m.values(i, j) == m.values(i, best) &&
           col_mean[std::size_t(j)] > col_mean[std::size_t(best)])) {
        best = j;
      }
    }
    if (best >= 0) wins[std::size_t(best)] += 1.0;
  }
  // Sources absent from the training matrix rank after all present ones.
  std::vector<double> count(ctx.pool.size(), -1.0);
  std::vector<double> mean(ctx.pool.size(),
                           -std::numeric_limits<double>::infinity());
  for (std::size_t p = 0; p < ctx.pool.size(); ++p) {
    const auto it = std::find(m.ids.begin(), m.ids.end(), ctx.pool[p].id);
    if (it == m.ids.end()) continue;
    const auto j = std::size_t(it - m.ids.begin());
    count[p] = wins[j];
    mean[p] = col_mean[j];
  }
  std::vector<std::size_t> idx(ctx.pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (count[a] != count[b]) return count[a] > count[b];
    return mean[a] > mean[b];
  });
  RankedCandidates out{Method::kBestTeacher, {}, {}};
  for (auto i : idx) {
    out.ids.push_back(ctx.pool[i].id);
    out.scores.push_back(count[i]);
  }
  return out;
}

}  // namespace

std::span<const Method> all_methods() { return kMethods; }

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kIntraSubject: return "intra-subject";
    case Method::kRandom: return "random";
    case Method::kDistance: return "distance";
    case Method::kBestSource: return "best-source";
    case Method::kBestTeacher: return "best-teacher";
    case Method::kMaxOfMethods: return "max-of-methods";
    case Method::kTpp: return "tpp";
    case Method::kOracle: return "oracle";
  }
  return "unknown";
}

Method method_from_name(std::string_view name) {
  for (Method m : kMethods) {
    if (method_name(m) == name) return m;
  }
  throw InputError("unknown selection method '" + std::string(name) + "'");
}

void SelectionContext::validate() const {
  if (pool.empty()) throw InputError("selection: empty source pool");
  std::set<std::string> seen;
  for (const auto& p : pool) {
    if (p.id == target_id) {
      throw InputError("selection: target " + target_id + " is in the pool");
    }
    if (!seen.insert(p.id).second) {
      throw InputError("selection: duplicate pool id " + p.id);
    }
    if (!p.stats) throw InputError("selection: pool entry without stats");
  }
  if (training_matrix &&
      std::find(training_matrix->ids.begin(), training_matrix->ids.end(),
                target_id) != training_matrix->ids.end()) {
    throw InputError("selection: training matrix contains the target");
  }
}

RankedCandidates rank_sources(Method method, const SelectionContext& ctx) {
  ctx.validate();
  switch (method) {
    case Method::kRandom: {
      std::vector<std::size_t> idx(ctx.pool.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      Rng rng(derive_seed(ctx.seed, stable_hash(ctx.target_id)));
      std::shuffle(idx.begin(), idx.end(), rng);
      RankedCandidates out{method, {}, {}};
      for (auto i : idx) out.ids.push_back(ctx.pool[i].id);
      return out;
    }
    case Method::kDistance: {
      const auto feats = pool_features(ctx);
      std::vector<double> key;
      for (const auto& f : feats) {
        key.push_back((f[Feature::kDistT1S1] + f[Feature::kDistT2S2]) / 2.0);
      }
      return rank_by(method, ctx, key, true);
    }
    case Method::kBestSource: {
      std::vector<double> key;
      for (const auto& p : ctx.pool) key.push_back(p.stats->intra_accuracy);
      return rank_by(method, ctx, key, false);
    }
    case Method::kBestTeacher:
      return rank_best_teacher(ctx);
    case Method::kTpp: {
      if (!ctx.predictor) {
        throw ConfigError("TPP selection requires a trained predictor");
      }
      const auto feats = pool_features(ctx);
      std::vector<double> key;
      for (const auto& f : feats) key.push_back(ctx.predictor->predict_raw(f));
      return rank_by(method, ctx, key, false);
    }
    case Method::kMaxOfMethods:
    case Method::kOracle:
    case Method::kIntraSubject:
      break;
  }
  throw InputError("rank_sources: method '" + std::string(method_name(method)) +
                   "' has no ranking");
}

RankedCandidates max_of_methods(const SelectionContext& ctx,
                                int per_method_count) {
  if (per_method_count < 1) {
    throw InputError("max_of_methods: per_method_count must be >= 1");
  }
  const std::array<RankedCandidates, 3> ranked = {
      rank_sources(Method::kBestSource, ctx),
      rank_sources(Method::kBestTeacher, ctx), rank_sources(Method::kTpp, ctx)};
  const auto want = std::min(ctx.pool.size(),
                             std::size_t(3) * std::size_t(per_method_count));
  RankedCandidates out{Method::kMaxOfMethods, {}, {}};
  std::set<std::string> seen;
  auto take = [&](const std::string& id) {
    if (out.ids.size() < want && seen.insert(id).second) out.ids.push_back(id);
  };
  for (std::size_t r = 0; r < std::size_t(per_method_count); ++r) {
    for (const auto& list : ranked) {
      if (r < list.ids.size()) take(list.ids[r]);
    }
  }
  for (const auto& id : ranked[2].ids) {
    if (out.ids.size() >= want) break;
    take(id);
  }
  return out;
}

Selection select_best(const RankedCandidates& candidates, int k,
                      const Evaluator& evaluator) {
  if (k < 1) throw InputError("select_best: k must be >= 1");
  Selection best;
  bool found = false;
  const auto limit = std::min(candidates.ids.size(), std::size_t(k));
  for (std::size_t i = 0; i < limit; ++i) {
    const auto& id = candidates.ids[i];
    double acc = 0.0;
    try {
      acc = evaluator(id);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping candidate " << id << ": " << e.what()
                << "\n";
      continue;
    }
    ++best.evaluated;
    if (!found || acc > best.accuracy) {
      best.accuracy = acc;
      best.source_id = id;
      found = true;
    }
  }
  if (!found) {
    throw NumericalError("select_best: every candidate failed to evaluate");
  }
  return best;
}

RankedCandidates candidates_for(Method method, const SelectionContext& ctx,
                                int k) {
  switch (method) {
    case Method::kOracle: {
      ctx.validate();
      RankedCandidates all{method, {}, {}};
      for (const auto& p : ctx.pool) all.ids.push_back(p.id);
      return all;
    }
    case Method::kMaxOfMethods:
      return max_of_methods(ctx, std::max(1, k / 3));
    case Method::kIntraSubject:
      throw InputError("candidates_for: intra-subject uses no source");
    default:
      return rank_sources(method, ctx);
  }
}

Selection select_with_method(Method method, const SelectionContext& ctx, int k,
                             const Evaluator& evaluator, double intra_accuracy) {
  if (method == Method::kIntraSubject) {
    return Selection{std::nullopt, intra_accuracy, 0};
  }
  const auto cands = candidates_for(method, ctx, k);
  const int limit = method == Method::kOracle || method == Method::kMaxOfMethods
                        ? static_cast<int>(cands.ids.size())
                        : k;
  return select_best(cands, std::max(1, limit), evaluator);
}

}  // namespace srcsel
