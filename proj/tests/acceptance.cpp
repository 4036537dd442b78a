// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria are checked at the sizes they are stated for, so this
// takes a few minutes (the 30-subject accuracy matrix dominates).

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srcsel/dataset.hpp"
#include "srcsel/experiment.hpp"
#include "srcsel/mdm.hpp"
#include "srcsel/predictor.hpp"
#include "srcsel/random.hpp"
#include "srcsel/rpa.hpp"
#include "srcsel/spd.hpp"
#include "srcsel/transfer.hpp"

using namespace srcsel;
using Mat = MatrixX<double>;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %-22s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double rel(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Congruence by a fixed orthogonal basis of a diagonal matrix: commuting family.
SpdMatrixd in_basis(const Mat& q, const Eigen::VectorXd& d) {
  return SpdMatrixd(Mat(q * d.asDiagonal() * q.transpose()));
}

void manifold_suite() {
  const auto t0 = Clock::now();
  constexpr int kCases = 200;
  constexpr Eigen::Index n = 9;
  Rng rng(9001);
  double axiom_err = 0, invariance = 0, stationarity = 0, closed_form = 0, arc = 0;
  bool triangle = true, positive = true;

  for (int i = 0; i < kCases; ++i) {
    const auto a = random_spd(n, 1.0, rng);
    const auto b = random_spd(n, 1.0, rng);
    const auto c = random_spd(n, 1.0, rng);
    const double ab = airm_distance(a, b);
    axiom_err = std::max({axiom_err, airm_distance(a, a), rel(ab, airm_distance(b, a))});
    positive = positive && ab > 0;
    triangle = triangle && airm_distance(a, c) <= ab + airm_distance(b, c) + 1e-12;
  }
  for (int i = 0; i < kCases; ++i) {
    const auto a = random_spd(n, 1.0, rng);
    const auto b = random_spd(n, 1.0, rng);
    const Mat w = random_invertible(n, 0.7, rng);
    const double ab = airm_distance(a, b);
    const SpdMatrixd wa(Mat(w * a.matrix() * w.transpose()));
    const SpdMatrixd wb(Mat(w * b.matrix() * w.transpose()));
    const SpdMatrixd ia(Mat(a.matrix().inverse()));
    const SpdMatrixd ib(Mat(b.matrix().inverse()));
    invariance = std::max({invariance, rel(airm_distance(wa, wb), ab),
                           rel(airm_distance(ia, ib), ab)});
  }
  for (int i = 0; i < kCases; ++i) {
    std::vector<SpdMatrixd> set;
    for (int k = 0; k < 10; ++k) set.push_back(random_spd(n, 0.6, rng));
    const auto m = karcher_mean(set);
    Mat tbar = Mat::Zero(n, n);
    const Mat isq = spd_inv_sqrt(m);
    for (const auto& s : set) tbar += sym_log(Mat(isq * s.matrix() * isq));
    stationarity = std::max(stationarity, (tbar / double(set.size())).norm());
  }
  for (int i = 0; i < kCases; ++i) {
    const Mat q = random_orthogonal(n, rng);
    std::vector<Eigen::VectorXd> diags;
    std::vector<SpdMatrixd> set;
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd d(n);
      for (auto& x : d) x = std::exp(u(rng));
      diags.push_back(d);
      set.push_back(in_basis(q, d));
    }
    const double expect = (diags[0].array().log() - diags[1].array().log()).matrix().norm();
    closed_form = std::max(closed_form, rel(airm_distance(set[0], set[1]), expect));
    Eigen::ArrayXd logmean = Eigen::ArrayXd::Zero(n);
    for (const auto& d : diags) logmean += d.array().log() / double(diags.size());
    const Mat geo = in_basis(q, logmean.exp().matrix()).matrix();
    const Mat km = karcher_mean(set).matrix();
    closed_form = std::max(closed_form, (km - geo).norm() / geo.norm());
    const double t = 0.3;
    const Eigen::VectorXd gd =
        (diags[0].array().pow(1 - t) * diags[1].array().pow(t)).matrix();
    const Mat g = geodesic(set[0], set[1], t).matrix();
    const Mat ge = in_basis(q, gd).matrix();
    closed_form = std::max(closed_form, (g - ge).norm() / ge.norm());
  }
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  for (int i = 0; i < kCases; ++i) {
    const auto a = random_spd(n, 1.0, rng);
    const auto b = random_spd(n, 1.0, rng);
    const double ab = airm_distance(a, b);
    const double t = ut(rng);
    const auto g = geodesic(a, b, t);
    arc = std::max({arc, std::abs(airm_distance(a, g) - t * ab) / ab,
                    std::abs(airm_distance(g, b) - (1 - t) * ab) / ab});
  }
  const double secs = seconds_since(t0);
  const bool ok = axiom_err <= 1e-10 && positive && triangle && invariance <= 1e-9 &&
                  stationarity < 1e-8 && closed_form <= 1e-10 && arc <= 1e-9 && secs < 60;
  report("manifold", ok,
         fmt("axioms %.1e invariance %.1e stationarity %.1e closed-form %.1e", axiom_err,
             invariance, stationarity, closed_form) +
             fmt(" arc %.1e; %.0f cases each, 9x9, %.1fs", arc, kCases, secs) +
             (triangle ? "" : "; triangle inequality violated") +
             (positive ? "" : "; zero distance between distinct draws"));
}

void mlp_gradient_check() {
  double worst = 0, worst_zero = 0;
  int zero = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 500);
    auto net = MlpRegressor::initialized(seed);
    Eigen::VectorXd p = net.parameters();
    std::normal_distribution<double> g(0.0, 0.1);
    for (auto& v : p) v += g(rng);
    net.set_parameters(p);
    const Mat x = standard_normal(Eigen::Index(kFeatureCount), 16, rng);
    Eigen::VectorXd y(16);
    for (auto& v : y) v = g(rng);
    Eigen::VectorXd grad, unused;
    net.loss_and_gradient(x, y, grad);
    auto loss_at = [&](Eigen::Index i, double delta) {
      Eigen::VectorXd q = p;
      q(i) += delta;
      MlpRegressor shifted;
      shifted.set_parameters(q);
      return shifted.loss_and_gradient(x, y, unused);
    };
    std::uniform_int_distribution<Eigen::Index> pick(0, p.size() - 1);
    for (int k = 0; k < 10; ++k) {
      const Eigen::Index i = pick(rng);
      // Fourth-order central difference.
      const double h = 1e-5;
      const double fd = (-loss_at(i, 2 * h) + 8 * loss_at(i, h) - 8 * loss_at(i, -h) +
                         loss_at(i, -2 * h)) / (12 * h);
      if (grad(i) == 0.0) {
        // Dead ReLU path: the difference quotient is rounding noise.
        ++zero;
        worst_zero = std::max(worst_zero, std::abs(fd));
      } else {
        worst = std::max(worst, rel(fd, grad(i)));
      }
    }
  }
  report("mlp-gradient", worst <= 1e-5 && worst_zero <= 1e-9,
         fmt("worst relative error %.2e over 10 coordinates x 5 seeds", worst) +
             fmt(" (%.0f exactly-zero gradients, |fd| <= %.1e)", zero, worst_zero));
}

// Two-sided p over all 2^n sign patterns of the midranks.
double wilcoxon_enumerated(const std::vector<double>& diffs) {
  std::vector<double> nz;
  for (double d : diffs)
    if (d != 0.0) nz.push_back(d);
  const std::size_t n = nz.size();
  if (n == 0) return 1.0;
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (double d : nz) {
      less += std::abs(d) < std::abs(nz[i]);
      equal += std::abs(d) == std::abs(nz[i]);
    }
    rank[i] = less + (equal + 1) / 2;
  }
  double observed = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (nz[i] > 0) observed += rank[i];
  double lower = 0, upper = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) w += rank[i];
    lower += w <= observed;
    upper += w >= observed;
  }
  return std::min(1.0, 2 * std::min(lower, upper) / std::ldexp(1.0, int(n)));
}

void wilcoxon_check() {
  Rng rng(77);
  std::uniform_int_distribution<int> len(1, 12), val(-6, 6);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> d(static_cast<std::size_t>(len(rng)));
    // Half the cases draw from a small lattice to force ties and zeros.
    for (auto& x : d) x = rep % 2 ? val(rng) * 0.5 : g(rng);
    worst = std::max(worst, std::abs(wilcoxon_signed_rank(d) - wilcoxon_enumerated(d)));
  }
  const double p5 = wilcoxon_signed_rank(std::vector<double>{0.3, 1.1, 2.0, 0.7, 4.2});
  report("wilcoxon", worst <= 1e-12 && p5 == 0.0625,
         fmt("max |p - enumeration| %.1e over 100 cases; n=5 all positive p=%.4f", worst, p5));
}

std::vector<Trial> congruence(const std::vector<Trial>& trials, const Mat& a) {
  std::vector<Trial> out;
  for (const auto& t : trials)
    out.push_back({SpdMatrixd(Mat(a * t.covariance.matrix() * a.transpose())), t.label});
  return out;
}

std::vector<Trial> two_class(const SpdMatrixd& m1, const SpdMatrixd& m2, int per_class,
                             double noise, Rng& rng) {
  std::vector<Trial> out;
  for (int label = 1; label <= 2; ++label) {
    const Mat half = spd_sqrt(label == 1 ? m1 : m2);
    for (int i = 0; i < per_class; ++i) {
      const Mat e = sym_exp(symmetric_gaussian(m1.dim(), noise, rng));
      out.push_back(Trial{SpdMatrixd(Mat(half * e * half)), label});
    }
  }
  return out;
}

void rpa_planted() {
  Rng rng(4242);
  constexpr Eigen::Index n = 9;
  double min_acc = 1, max_obj = 0;
  for (int rep = 0; rep < 10; ++rep) {
    // Class means two AIRM units apart, tangent noise of Frobenius size ~0.7.
    const auto m1 = random_spd(n, 0.3, rng);
    Mat dir = symmetric_gaussian(n, 1.0, rng);
    dir *= 2.0 / dir.norm();
    const Mat half = spd_sqrt(m1);
    const SpdMatrixd m2(Mat(half * sym_exp(dir) * half));
    const auto source = two_class(m1, m2, 20, 0.1, rng);
    // Arbitrary congruence: a symmetric stretch composed with a rotation.
    const Mat a = random_invertible(n, 0.8, rng);
    const auto target = congruence(two_class(m1, m2, 20, 0.1, rng), a);
    RpaConfig cfg;
    cfg.seed = std::uint64_t(rep);
    const auto aligned = rpa_align(source, target, cfg);
    const auto model = mdm_fit(aligned.aligned_source);
    min_acc = std::min(min_acc, mdm_accuracy(model, aligned.whiten_target(target)));
    const auto exact = rpa_align(source, congruence(source, a), cfg);
    max_obj = std::max(max_obj, exact.rotation_objective);
  }
  report("rpa-planted", min_acc >= 0.95 && max_obj <= 1e-6,
         fmt("min MDM accuracy %.3f over 10 draws; max rotation objective %.1e", min_acc, max_obj));
}

struct Benchmark {
  std::vector<SubjectData> subjects;
  std::vector<SubjectStats> stats;
  AccuracyMatrix matrix;
  std::vector<PairRecord> records;
};

constexpr std::uint64_t kDataSeed = 1;

Benchmark load_benchmark() {
  const auto text = read_text_file(fs::path(SRCSEL_CONFIG_DIR) / "bench30.json");
  Benchmark b;
  b.subjects = synth_generate(synth_config_from_json(nlohmann::json::parse(text)));
  b.stats = compute_stats(b.subjects, kDataSeed);
  b.matrix = build_accuracy_matrix(b.subjects, kDataSeed);
  b.records = build_pair_table(b.subjects, b.stats, b.matrix, kDataSeed);
  return b;
}

struct SeedRun {
  std::vector<FoldPredictor> folds;
  MethodOutcomes outcomes;
};

SelectionBench bench_for(const Benchmark& b, const std::vector<FoldPredictor>& folds,
                         std::uint64_t seed) {
  return SelectionBench{b.subjects, b.stats, &b.matrix, folds, {}, kDataSeed, seed};
}

void oracle_and_prefix(const Benchmark& b, const std::vector<SeedRun>& runs) {
  bool dominance = true;
  for (const auto& r : runs) {
    const auto& o = r.outcomes;
    const auto oc = Eigen::Index(o.column(Method::kOracle));
    for (Eigen::Index m = 0; m < o.accuracy.cols(); ++m) {
      if (o.methods[std::size_t(m)] == Method::kIntraSubject) continue;
      dominance = dominance && (o.accuracy.col(oc).array() >= o.accuracy.col(m).array()).all();
    }
  }
  // Prefix monotonicity for every ranked method, k from 1 to the full pool.
  bool monotone = true, exhaustive = true;
  const std::vector<Method> ranked{Method::kRandom, Method::kDistance, Method::kBestSource,
                                   Method::kBestTeacher, Method::kTpp, Method::kMaxOfMethods,
                                   Method::kOracle};
  const int pool = int(b.subjects.size()) - 1;
  for (std::size_t s = 0; s < 3 && s < runs.size(); ++s) {
    const auto bench = bench_for(b, runs[s].folds, s);
    Eigen::MatrixXd prev;
    for (int k = 1; k <= pool; ++k) {
      const auto o = run_selection(bench, ranked, k);
      if (k > 1) monotone = monotone && (o.accuracy.array() >= prev.array()).all();
      prev = o.accuracy;
    }
    for (Eigen::Index m = 0; m < prev.cols(); ++m)
      exhaustive = exhaustive && prev.col(m) == prev.col(prev.cols() - 1);
  }
  report("oracle-prefix", dominance && monotone && exhaustive,
         std::string("dominance ") + (dominance ? "exact" : "violated") + ", prefix " +
             (monotone ? "monotone" : "violated") + ", full pool " +
             (exhaustive ? "ties Oracle" : "differs") + " (k = 1.." + std::to_string(pool) +
             ", 3 seeds)");
}

void comparison_skew(const std::vector<SeedRun>& runs) {
  std::vector<MethodOutcomes> outs;
  for (const auto& r : runs) outs.push_back(r.outcomes);
  const auto c = compare_methods(outs);
  const bool skew = c.mean_diff == Eigen::MatrixXd(-c.mean_diff.transpose());
  const bool sym = c.p_value == Eigen::MatrixXd(c.p_value.transpose());
  report("comparison-skew", skew && sym,
         std::string("mean difference ") + (skew ? "exactly" : "not") +
             " skew-symmetric, p-values " + (sym ? "symmetric" : "asymmetric"));
}

void selection_quality(const std::vector<SeedRun>& runs, double secs) {
  const auto& methods = runs.front().outcomes.methods;
  const std::size_t n_methods = methods.size();
  std::vector<std::vector<double>> gaps(n_methods);
  std::vector<double> mean_acc(n_methods, 0.0);
  for (const auto& r : runs) {
    const auto& o = r.outcomes;
    const auto oracle = o.accuracy.col(Eigen::Index(o.column(Method::kOracle)));
    for (std::size_t m = 0; m < n_methods; ++m) {
      gaps[m].push_back((oracle - o.accuracy.col(Eigen::Index(m))).mean());
      mean_acc[m] += o.accuracy.col(Eigen::Index(m)).mean() / double(runs.size());
    }
  }
  auto col = [&](Method m) { return runs.front().outcomes.column(m); };
  const auto& tpp = gaps[col(Method::kTpp)];
  const auto& rnd = gaps[col(Method::kRandom)];
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  std::vector<double> diff;
  for (std::size_t i = 0; i < tpp.size(); ++i) diff.push_back(rnd[i] - tpp[i]);
  const double p = wilcoxon_signed_rank(diff);
  const std::size_t intra = col(Method::kIntraSubject);
  bool intra_worst = true;
  for (std::size_t m = 0; m < n_methods; ++m)
    if (m != intra) intra_worst = intra_worst && mean_acc[intra] < mean_acc[m];
  const bool ok = mean(tpp) < mean(rnd) && p < 0.05 && intra_worst && secs < 1800;
  report("selection-quality", ok,
         fmt("gap TPP %.4f vs Random %.4f (Wilcoxon p=%.2g, 20 seeds, k=6)", mean(tpp),
             mean(rnd), p) +
             fmt("; Intra-subject %.4f", mean_acc[intra]) +
             (intra_worst ? " is the worst" : " is NOT the worst") + fmt("; %.0fs", secs));
  for (std::size_t m = 0; m < n_methods; ++m) {
    std::printf("     %-22s mean accuracy %.4f  gap %.4f\n",
                std::string(method_name(methods[m])).c_str(), mean_acc[m], mean(gaps[m]));
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool run_pipeline(const fs::path& dir, int threads) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = SRCSEL_CLI;
  const std::string config = fs::path(SRCSEL_CONFIG_DIR) / "synth12.json";
  const std::string t = " --threads " + std::to_string(threads) +
                        " --set selection_seeds=[0,1,2] --set group_folds=4";
  const std::vector<std::string> steps{
      "synth --config '" + config + "' --out data.json",
      "matrix --data data.json --out matrix" + t,
      "features --data data.json --matrix matrix/accuracy_matrix.json --out features.csv" + t,
      "train-predictor --features features.csv --out models" + t,
      "compare --data data.json --matrix matrix/accuracy_matrix.json --models models --out compare" + t,
      "sweep --data data.json --matrix matrix/accuracy_matrix.json --models models --candidates 1..5 --out sweep" + t,
  };
  for (const auto& s : steps) {
    // Relative paths keep the metadata sidecars comparable across runs.
    const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + s + " > /dev/null";
    if (std::system(cmd.c_str()) != 0) {
      std::printf("     command failed: %s\n", cmd.c_str());
      return false;
    }
  }
  return true;
}

void cli_determinism() {
  const fs::path root = fs::current_path() / "acceptance_work";
  const fs::path a = root / "threads1", b = root / "threads4";
  const auto t0 = Clock::now();
  if (!run_pipeline(a, 1) || !run_pipeline(b, 4)) {
    report("cli-determinism", false, "pipeline failed");
    return;
  }
  int files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto other = b / fs::relative(e.path(), a);
    ++files;
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      ++differing;
      std::printf("     differs: %s\n", fs::relative(e.path(), a).c_str());
    }
  }
  report("cli-determinism", files > 0 && differing == 0,
         std::to_string(files) + " output files compared at 1 vs 4 threads, " +
             std::to_string(differing) + " differ" + fmt(" (%.0fs)", seconds_since(t0)));
}

}  // namespace

int main() {
  manifold_suite();
  mlp_gradient_check();
  wilcoxon_check();
  rpa_planted();

  const auto t0 = Clock::now();
  const Benchmark b = load_benchmark();
  std::vector<SeedRun> runs;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeedRun r;
    r.folds = train_fold_predictors(b.records, 10, seed);
    r.outcomes = run_selection(bench_for(b, r.folds, seed), all_methods(), 6);
    runs.push_back(std::move(r));
  }
  const double bench_secs = seconds_since(t0);
  oracle_and_prefix(b, runs);
  comparison_skew(runs);
  selection_quality(runs, bench_secs);

  cli_determinism();
  std::printf("%s: %d failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
