#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"
#include "srcsel/errors.hpp"
#include "srcsel/selection.hpp"

using namespace srcsel;

namespace {

// Pool of `n` subjects whose stats carry the given intra accuracies.
struct Fixture {
  std::vector<SubjectData> subjects;
  std::vector<SubjectStats> stats;
  SubjectData target;

  explicit Fixture(int n) {
    auto pop = fixtures::small_population(n + 1, 77);
    target = pop.back();
    pop.pop_back();
    subjects = pop;
    for (const auto& s : subjects) stats.push_back(subject_stats(s, 1));
  }

  SelectionContext context() const {
    SelectionContext ctx;
    ctx.target_id = target.id;
    ctx.target_train = feature_calibration_set(target, 1);
    for (std::size_t i = 0; i < subjects.size(); ++i)
      ctx.pool.push_back({subjects[i].id, &stats[i]});
    return ctx;
  }
};

AccuracyMatrix constructed_matrix(const std::vector<std::string>& ids,
                                  const Eigen::MatrixXd& v) {
  AccuracyMatrix m;
  m.ids = ids;
  m.values = v;
  m.intra.assign(ids.size(), 0.5);
  m.compute_orders();
  return m;
}

}  // namespace

TEST(MethodNames, RoundTrip) {
  EXPECT_EQ(all_methods().size(), 8u);
  for (Method m : all_methods()) EXPECT_EQ(method_from_name(method_name(m)), m);
  EXPECT_THROW(method_from_name("psychic"), InputError);
}

TEST(RankSources, PoolOfOne) {
  Fixture fx(1);
  auto ctx = fx.context();
  const auto m = constructed_matrix({fx.subjects[0].id}, Eigen::MatrixXd::Constant(1, 1, 0.7));
  ctx.training_matrix = &m;
  for (Method method : {Method::kRandom, Method::kDistance, Method::kBestSource,
                        Method::kBestTeacher}) {
    EXPECT_EQ(rank_sources(method, ctx).ids, std::vector<std::string>{fx.subjects[0].id});
  }
}

TEST(RankSources, DistancePutsDuplicateFirst) {
  Fixture fx(4);
  auto ctx = fx.context();
  // A duplicate of the target whose stats are computed from exactly the
  // calibration trials the target side uses.
  SubjectData dup = fixtures::subject("dup", ctx.target_train);
  const auto dup_stats = subject_stats(dup, 1, CvConfig{2, 1});
  ctx.pool.push_back({"dup", &dup_stats});
  const auto ranked = rank_sources(Method::kDistance, ctx);
  EXPECT_EQ(ranked.ids.front(), "dup");
  EXPECT_NEAR(ranked.scores.front(), 0.0, 1e-12);
}

TEST(RankSources, BestSourceByIntraAccuracy) {
  Fixture fx(4);
  fx.stats[2].intra_accuracy = 0.99;
  fx.stats[0].intra_accuracy = 0.01;
  const auto ranked = rank_sources(Method::kBestSource, fx.context());
  EXPECT_EQ(ranked.ids.front(), fx.subjects[2].id);
  EXPECT_EQ(ranked.ids.back(), fx.subjects[0].id);
}

TEST(RankSources, BestTeacherConstructedColumn) {
  Fixture fx(4);
  auto ctx = fx.context();
  std::vector<std::string> ids;
  for (const auto& s : fx.subjects) ids.push_back(s.id);
  Eigen::MatrixXd v = Eigen::MatrixXd::Constant(4, 4, 0.6);
  v.col(3).setConstant(0.9);
  v(3, 3) = 0.5;
  v(3, 1) = 0.8;  // row 3 cannot pick itself; its best is column 1
  const auto m = constructed_matrix(ids, v);
  ctx.training_matrix = &m;
  const auto ranked = rank_sources(Method::kBestTeacher, ctx);
  EXPECT_EQ(ranked.ids[0], ids[3]);
  EXPECT_EQ(ranked.ids[1], ids[1]);
  EXPECT_EQ(ranked.scores[0], 3.0);
}

TEST(RankSources, RandomIsSeededPermutation) {
  Fixture fx(6);
  auto ctx = fx.context();
  ctx.seed = 5;
  const auto a = rank_sources(Method::kRandom, ctx);
  EXPECT_EQ(a.ids, rank_sources(Method::kRandom, ctx).ids);
  EXPECT_EQ(std::set<std::string>(a.ids.begin(), a.ids.end()).size(), 6u);
  bool differs = false;
  for (std::uint64_t s = 6; s < 12 && !differs; ++s) {
    ctx.seed = s;
    differs = rank_sources(Method::kRandom, ctx).ids != a.ids;
  }
  EXPECT_TRUE(differs);
}

TEST(RankSources, Errors) {
  Fixture fx(2);
  auto ctx = fx.context();
  EXPECT_THROW(rank_sources(Method::kTpp, ctx), ConfigError);
  EXPECT_THROW(rank_sources(Method::kBestTeacher, ctx), ConfigError);
  EXPECT_THROW(rank_sources(Method::kOracle, ctx), InputError);
  ctx.pool.push_back({ctx.target_id, &fx.stats[0]});
  EXPECT_THROW(rank_sources(Method::kRandom, ctx), InputError);
  ctx.pool.clear();
  EXPECT_THROW(rank_sources(Method::kRandom, ctx), InputError);
}

TEST(MaxOfMethods, MergeDedupAndBackfill) {
  // Best source by intra accuracy (descending id order), Best teacher from a
  // matrix, TPP from a model that ranks by a single feature.
  Fixture fx(8);
  auto ctx = fx.context();
  std::vector<std::string> ids;
  for (const auto& s : fx.subjects) ids.push_back(s.id);
  for (std::size_t i = 0; i < 8; ++i) fx.stats[i].intra_accuracy = 0.1 * double(i);
  Eigen::MatrixXd v = Eigen::MatrixXd::Constant(8, 8, 0.5);
  for (Eigen::Index i = 0; i < 8; ++i) v(i, i == 7 ? 6 : 7) = 0.9;
  const auto m = constructed_matrix(ids, v);
  ctx.training_matrix = &m;
  TppModel tpp;  // zero network: every prediction ties, so pool order
  for (auto& x : tpp.scaler.iqr) x = 1.0;
  ctx.predictor = &tpp;

  const auto bs = rank_sources(Method::kBestSource, ctx);
  const auto bt = rank_sources(Method::kBestTeacher, ctx);
  const auto tp = rank_sources(Method::kTpp, ctx);
  EXPECT_EQ(bs.ids[0], ids[7]);
  EXPECT_EQ(bt.ids[0], ids[7]);
  EXPECT_EQ(tp.ids[0], ids[0]);

  // per_method_count = 1: BS and BT both propose ids[7]; backfill from TPP.
  const auto merged = max_of_methods(ctx, 1);
  EXPECT_EQ(merged.ids, (std::vector<std::string>{ids[7], ids[0], ids[1]}));
  const auto six = max_of_methods(ctx, 2);
  EXPECT_EQ(six.ids.size(), 6u);
  EXPECT_EQ(std::set<std::string>(six.ids.begin(), six.ids.end()).size(), 6u);
  EXPECT_EQ(max_of_methods(ctx, 5).ids.size(), 8u);  // truncated to the pool
  EXPECT_THROW(max_of_methods(ctx, 0), InputError);
}

TEST(SelectBest, ArgmaxTiesSkipsAndFailures) {
  RankedCandidates c{Method::kRandom, {"a", "b", "c", "d"}, {}};
  const std::map<std::string, double> acc{{"a", 0.6}, {"b", 0.8}, {"c", 0.8}, {"d", 0.9}};
  const Evaluator eval = [&](const std::string& id) { return acc.at(id); };
  EXPECT_EQ(*select_best(c, 1, eval).source_id, "a");
  const auto three = select_best(c, 3, eval);
  EXPECT_EQ(*three.source_id, "b");  // tie with c goes to the earlier rank
  EXPECT_EQ(three.evaluated, 3);
  EXPECT_EQ(*select_best(c, 10, eval).source_id, "d");

  const Evaluator flaky = [&](const std::string& id) {
    if (id == "b") throw NumericalError("boom");
    return acc.at(id);
  };
  const auto skipped = select_best(c, 3, flaky);
  EXPECT_EQ(*skipped.source_id, "c");
  EXPECT_EQ(skipped.evaluated, 2);
  const Evaluator broken = [](const std::string&) -> double { throw NumericalError("x"); };
  EXPECT_THROW(select_best(c, 2, broken), NumericalError);
  EXPECT_THROW(select_best(c, 0, eval), InputError);
}

TEST(SelectWithMethod, OracleIntraAndExhaustiveK) {
  Fixture fx(5);
  auto ctx = fx.context();
  std::map<std::string, double> acc;
  for (std::size_t i = 0; i < fx.subjects.size(); ++i)
    acc[fx.subjects[i].id] = 0.5 + 0.07 * double((i * 3) % 5);
  const Evaluator eval = [&](const std::string& id) { return acc.at(id); };

  const auto oracle = select_with_method(Method::kOracle, ctx, 1, eval, 0.4);
  double best = 0;
  for (const auto& [id, a] : acc) best = std::max(best, a);
  EXPECT_EQ(oracle.accuracy, best);

  const auto intra = select_with_method(Method::kIntraSubject, ctx, 3, eval, 0.4);
  EXPECT_FALSE(intra.source_id.has_value());
  EXPECT_EQ(intra.accuracy, 0.4);

  for (Method m : {Method::kRandom, Method::kDistance, Method::kBestSource}) {
    EXPECT_EQ(select_with_method(m, ctx, 5, eval, 0.4).accuracy, best);
    double prev = 0;
    for (int k = 1; k <= 5; ++k) {
      const double a = select_with_method(m, ctx, k, eval, 0.4).accuracy;
      EXPECT_GE(a, prev);
      prev = a;
    }
  }
}
