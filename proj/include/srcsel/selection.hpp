#pragma once

// Source-selection strategies and the k-candidate evaluation protocol.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srcsel/features.hpp"
#include "srcsel/predictor.hpp"
#include "srcsel/transfer.hpp"

namespace srcsel {

enum class Method {
  kIntraSubject,
  kRandom,
  kDistance,
  kBestSource,
  kBestTeacher,
  kMaxOfMethods,
  kTpp,
  kOracle,
};

/// All eight, in reporting order.
std::span<const Method> all_methods();
std::string_view method_name(Method m);
/// Throws InputError for unknown names.
Method method_from_name(std::string_view name);

struct PoolSource {
  std::string id;
  const SubjectStats* stats = nullptr;
};

struct SelectionContext {
  std::string target_id;
  std::vector<Trial> target_train;
  std::vector<PoolSource> pool;
  /// Restricted to training users; used by Best teacher.
  const AccuracyMatrix* training_matrix = nullptr;
  const TppModel* predictor = nullptr;
  std::uint64_t seed = 0;

  /// Throws InputError if the pool is empty, has duplicates, or holds the
  /// target; or if the training matrix contains the target.
  void validate() const;
};

struct RankedCandidates {
  Method method = Method::kRandom;
  std::vector<std::string> ids;
  std::vector<double> scores;
};

/// Full ordering of the pool, best first, deterministic given ctx.seed.
/// Random: seeded shuffle. Distance: ascending mean of the two same-class
/// cross distances. Best source: descending intra accuracy. Best teacher:
/// descending count of training targets for which the source is the row
/// argmax, ties by descending column mean. TPP: descending raw prediction.
/// Oracle and Intra-subject have no ranking and are rejected here, as is
/// Max of methods (see max_of_methods). Ties keep pool order.
RankedCandidates rank_sources(Method method, const SelectionContext& ctx);

/// Round-robin merge (Best source, Best teacher, TPP) of each method's top
/// per_method_count, first occurrence kept, then backfilled from TPP's ranking
/// until 3·per_method_count distinct ids (or the pool runs out).
RankedCandidates max_of_methods(const SelectionContext& ctx,
                                int per_method_count);

/// Cross-subject accuracy of a candidate source for the current target.
using Evaluator = std::function<double(const std::string& source_id)>;

struct Selection {
  std::optional<std::string> source_id;
  double accuracy = 0.0;
  int evaluated = 0;
};

/// Evaluates the first k candidates and keeps the most accurate (ties to the
/// earlier rank). Candidates whose evaluation throws are skipped with a
/// warning on stderr; throws NumericalError if every candidate fails.
Selection select_best(const RankedCandidates& candidates, int k,
                      const Evaluator& evaluator);

/// Candidate list a method evaluates when allowed k evaluations. Oracle
/// returns the whole pool, Max of methods uses k/3 per method.
RankedCandidates candidates_for(Method method, const SelectionContext& ctx,
                                int k);

/// The full protocol for one method: Intra-subject returns no source and
/// `intra_accuracy`; Oracle evaluates the entire pool; everything else
/// evaluates its top k.
Selection select_with_method(Method method, const SelectionContext& ctx, int k,
                             const Evaluator& evaluator, double intra_accuracy);

}  // namespace srcsel
