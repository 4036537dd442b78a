#include <gtest/gtest.h>

#include <filesystem>

#include "helpers.hpp"
#include "srcsel/errors.hpp"
#include "srcsel/report.hpp"

using namespace srcsel;
using nlohmann::json;

TEST(RunConfigJson, DefaultsRoundTripAndOverrides) {
  const RunConfig d;
  const auto j = run_config_to_json(d);
  EXPECT_EQ(run_config_to_json(run_config_from_json(j)), j);

  json cfg = json::object();
  apply_override(cfg, "rpa.rotation_restarts=2");
  apply_override(cfg, "selection_seeds=[1,2,3]");
  apply_override(cfg, "filter_intra=0.7");
  const auto c = run_config_from_json(cfg);
  EXPECT_EQ(c.rpa.rotation_restarts, 2);
  EXPECT_EQ(c.selection_seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.filter_intra, 0.7);
}

TEST(RunConfigJson, RejectsUnknownAndInvalid) {
  EXPECT_THROW(run_config_from_json(json{{"sede", 1}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"rpa", {{"tol", 1}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"cv", {{"folds", 1}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"seed", "x"}}), ConfigError);
  json cfg = json::object();
  EXPECT_THROW(apply_override(cfg, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "a..b=1"), ConfigError);
  apply_override(cfg, "name=plain text");
  EXPECT_EQ(cfg["name"], "plain text");
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, 0.8571428571428571, 1e-300, -2.5, 0.0}) {
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(PairTableCsv, RoundTripAndErrors) {
  PairRecord r{"s1", "t1", {}, 0.75};
  for (std::size_t i = 0; i < kFeatureCount; ++i) r.features.values[i] = 1.0 / double(i + 3);
  const std::vector<PairRecord> records{r, r};
  const auto back = pair_table_from_csv(pair_table_csv(records));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].features.values, r.features.values);
  EXPECT_EQ(back[1].accuracy, 0.75);

  EXPECT_THROW(pair_table_from_csv(""), ParseError);
  EXPECT_THROW(pair_table_from_csv("a,b\n"), ParseError);
  auto text = pair_table_csv(records);
  text += "s2,t2,1,2\n";
  try {
    pair_table_from_csv(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(MatrixJson, RoundTrip) {
  AccuracyMatrix m;
  m.ids = {"a", "b", "c"};
  m.values = Eigen::MatrixXd::Random(3, 3).cwiseAbs();
  m.intra = {m.values(0, 0), m.values(1, 1), m.values(2, 2)};
  m.compute_orders();
  const auto back = matrix_from_json(matrix_to_json(m));
  EXPECT_EQ(back.values, m.values);
  EXPECT_EQ(back.row_order, m.row_order);
  EXPECT_EQ(back.col_order, m.col_order);
  EXPECT_THROW(matrix_from_json(json{{"ids", {"a"}}}), ParseError);
  const auto csv = matrix_csv(m);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "target,a,b,c");
}

TEST(Tables, HeadersPresent) {
  MethodComparison c;
  c.methods = {Method::kRandom, Method::kOracle};
  c.mean_diff = Eigen::MatrixXd::Zero(2, 2);
  c.p_value = Eigen::MatrixXd::Ones(2, 2);
  c.indistinguishable.assign(2, std::vector<bool>(2, true));
  EXPECT_EQ(comparison_csv(c).substr(0, 20), "method,random,oracle");
  EXPECT_EQ(significance_csv(c), "method_a,method_b,p_value,indistinguishable\nrandom,oracle,1,true\n");
  const std::vector<SweepRow> rows{{Method::kTpp, 3, 0.5}};
  EXPECT_EQ(sweep_csv(rows), "method,k,gap\ntpp,3,0.5\n");
  const std::vector<GroupFold> folds{{{"a", "b"}, {"c"}}};
  const auto back = folds_from_json(folds_to_json(folds));
  EXPECT_EQ(back[0].train_ids, folds[0].train_ids);
  EXPECT_EQ(back[0].test_ids, folds[0].test_ids);
}

TEST(FileDigest, StableAndSensitive) {
  const auto p = std::filesystem::temp_directory_path() / "srcsel_test_digest.txt";
  write_text_file(p, "abc");
  const auto a = file_digest(p);
  EXPECT_EQ(a.size(), 16u);
  EXPECT_EQ(a, file_digest(p));
  write_text_file(p, "abd");
  EXPECT_NE(a, file_digest(p));
  std::filesystem::remove(p);
}
