#include "srcsel/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "srcsel/mdm.hpp"
#include "srcsel/parallel.hpp"
#include "srcsel/random.hpp"

namespace srcsel {

namespace {

std::vector<std::size_t> order_by_descending(const Eigen::VectorXd& sums) {
  std::vector<std::size_t> order(static_cast<std::size_t>(sums.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sums(Eigen::Index(a)) > sums(Eigen::Index(b));
  });
  return order;
}

std::uint64_t pair_seed(std::uint64_t fold_seed, const std::string& source,
                        const std::string& target, std::size_t split) {
  return derive_seed(derive_seed(fold_seed, stable_hash(source)),
                     stable_hash(target) + split);
}

}  // namespace

std::size_t AccuracyMatrix::index_of(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw InputError("AccuracyMatrix: unknown id " + id);
  return static_cast<std::size_t>(it - ids.begin());
}

double AccuracyMatrix::at(const std::string& target,
                          const std::string& source) const {
  return values(Eigen::Index(index_of(target)), Eigen::Index(index_of(source)));
}

void AccuracyMatrix::compute_orders() {
  Eigen::MatrixXd off = values;
  off.diagonal().setZero();
  row_order = order_by_descending(off.rowwise().sum());
  col_order = order_by_descending(off.colwise().sum().transpose());
}

AccuracyMatrix AccuracyMatrix::restricted(
    std::span<const std::string> keep) const {
  AccuracyMatrix out;
  std::vector<std::size_t> idx;
  for (const auto& id : keep) idx.push_back(index_of(id));
  const auto n = static_cast<Eigen::Index>(idx.size());
  out.ids.assign(keep.begin(), keep.end());
  out.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.intra.push_back(intra[idx[std::size_t(i)]]);
    for (Eigen::Index j = 0; j < n; ++j)
      out.values(i, j) = values(Eigen::Index(idx[std::size_t(i)]),
                                Eigen::Index(idx[std::size_t(j)]));
  }
  out.compute_orders();
  return out;
}

PreparedSubject prepare_subject(const SubjectData& subject,
                                std::uint64_t fold_seed, const CvConfig& cv,
                                const KarcherOptions& karcher) {
  PreparedSubject p{&subject, dataset_means(subject.trials, karcher), {}};
  for (auto& split : calibration_splits(subject, fold_seed, cv)) {
    PreparedSubject::Split s{{}, dataset_means(split.train, karcher), {}};
    const MatrixX<double> w = spd_inv_sqrt(s.train_means.overall);
    s.whitened_test.reserve(split.test.size());
    for (const auto& t : split.test) {
      s.whitened_test.push_back(
          Trial{SpdMatrixd(w * t.covariance.matrix() * w), t.label});
    }
    s.train = std::move(split.train);
    p.splits.push_back(std::move(s));
  }
  return p;
}

double transfer_accuracy(const PreparedSubject& source,
                         const PreparedSubject& target, std::uint64_t fold_seed,
                         const RpaConfig& cfg) {
  double acc = 0.0;
  for (std::size_t f = 0; f < target.splits.size(); ++f) {
    const auto& split = target.splits[f];
    RpaConfig run = cfg;
    run.seed = pair_seed(fold_seed, source.data->id, target.data->id, f);
    const AlignmentTransform tf = align_means(
        source.data->trials, source.means, split.train, split.train_means, run);
    // MDM trained on the aligned source: by congruence equivariance of the
    // Karcher mean its class means are the aligned source class means.
    const MdmModel model(tf.aligned_source_means);
    acc += mdm_accuracy(model, split.whitened_test);
  }
  return acc / double(target.splits.size());
}

double transfer_accuracy(const SubjectData& source, const SubjectData& target,
                         std::uint64_t fold_seed, const RpaConfig& cfg,
                         const CvConfig& cv) {
  const auto s = prepare_subject(source, fold_seed, cv, cfg.karcher);
  const auto t = prepare_subject(target, fold_seed, cv, cfg.karcher);
  return transfer_accuracy(s, t, fold_seed, cfg);
}

AccuracyMatrix build_accuracy_matrix(std::span<const SubjectData> subjects,
                                     std::uint64_t fold_seed,
                                     const RpaConfig& cfg, const CvConfig& cv,
                                     unsigned threads) {
  if (subjects.size() < 2) {
    throw InputError("build_accuracy_matrix: need at least two subjects");
  }
  cfg.validate();
  cv.validate();
  const std::size_t n = subjects.size();
  std::vector<std::optional<PreparedSubject>> prepared(n);
  std::vector<double> intra(n);
  parallel_for(n, threads, [&](std::size_t i) {
    prepared[i] = prepare_subject(subjects[i], fold_seed, cv, cfg.karcher);
    intra[i] = intra_subject_accuracy(subjects[i], fold_seed, cv);
  });

  AccuracyMatrix m;
  for (const auto& s : subjects) m.ids.push_back(s.id);
  m.values = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
  m.intra = intra;
  parallel_for(n * n, threads, [&](std::size_t k) {
    const std::size_t t = k / n;
    const std::size_t s = k % n;
    m.values(Eigen::Index(t), Eigen::Index(s)) =
        t == s ? intra[t]
               : transfer_accuracy(*prepared[s], *prepared[t], fold_seed, cfg);
  });
  m.compute_orders();
  return m;
}

double wilcoxon_signed_rank(std::span<const double> diffs) {
  if (diffs.empty()) throw InputError("wilcoxon_signed_rank: no differences");
  std::vector<double> nz;
  for (double d : diffs) {
    if (!std::isfinite(d)) throw InputError("wilcoxon_signed_rank: non-finite");
    if (d != 0.0) nz.push_back(d);
  }
  const std::size_t n = nz.size();
  if (n == 0) return 1.0;

  // Doubled average ranks are integers, which keeps the exact count exact.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(nz[a]) < std::abs(nz[b]);
  });
  std::vector<long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(nz[order[j + 1]]) == std::abs(nz[order[i]])) ++j;
    const long r2 = long(i + 1) + long(j + 1);  // 2 · mean of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const double t = double(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long w2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (nz[i] > 0) w2 += rank2[i];
  }

  if (n <= 25) {
    // count[s] = number of sign assignments with doubled W+ equal to s
    std::vector<double> count(std::size_t(total2) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      reach += rank2[i];
      for (long s = reach; s >= rank2[i]; --s) {
        count[std::size_t(s)] += count[std::size_t(s - rank2[i])];
      }
    }
    double lower = 0.0, upper = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w2) lower += count[std::size_t(s)];
      if (s >= w2) upper += count[std::size_t(s)];
    }
    const double denom = std::ldexp(1.0, int(n));
    return std::min(1.0, 2.0 * std::min(lower, upper) / denom);
  }

  const double nn = double(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) return 1.0;
  const double w = double(w2) / 2.0;
  const double z = std::max(0.0, std::abs(w - mean) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace srcsel
