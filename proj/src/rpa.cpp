#include "srcsel/rpa.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <string>

#include "srcsel/random.hpp"

namespace srcsel {

namespace {

using Mat = MatrixX<double>;

void require_labels(std::span<const Trial> trials, const char* what) {
  std::set<int> labels;
  for (const auto& t : trials) labels.insert(t.label);
  if (labels.size() < 2) {
    throw InputError(std::string("rpa: ") + what +
                     " needs at least two classes");
  }
}

void require_same_labels(const std::map<int, SpdMatrixd>& a,
                         const std::map<int, SpdMatrixd>& b) {
  if (a.size() != b.size()) {
    throw InputError("find_rotation: source and target label sets differ");
  }
  for (const auto& [label, m] : a) {
    auto it = b.find(label);
    if (it == b.end()) {
      throw InputError("find_rotation: label " + std::to_string(label) +
                       " missing from target");
    }
    if (it->second.dim() != m.dim()) {
      throw InputError("find_rotation: dimension mismatch");
    }
  }
}

Mat congruence(const Mat& a, const Mat& c) {
  Mat out = a * c * a.transpose();
  return (out + out.transpose()) * 0.5;
}

// Per-class terms precomputed once per problem: T_k^{-1/2} and S_k.
struct RotationProblem {
  std::vector<Mat> target_isqrt;
  std::vector<Mat> source;

  RotationProblem(const std::map<int, SpdMatrixd>& src,
                  const std::map<int, SpdMatrixd>& tgt) {
    for (const auto& [label, t] : tgt) {
      target_isqrt.push_back(spd_inv_sqrt(t));
      source.push_back(src.at(label).matrix());
    }
  }

  double objective(const Mat& r) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < source.size(); ++k) {
      const Mat& w = target_isqrt[k];
      acc += sym_log_norm2(w * congruence(r, source[k]) * w);
    }
    return acc;
  }

  // Objective and Euclidean gradient. With W = T^{-1/2} B T^{-1/2} and
  // B = R S Rᵀ, d tr(log² W) = 2 tr(log(W) W⁻¹ dW), so
  // ∂J/∂B = 2 T^{-1/2} log(W) W⁻¹ T^{-1/2} and ∂J/∂R = 2 (∂J/∂B) R S.
  double objective_and_gradient(const Mat& r, Mat& egrad) const {
    const auto n = r.rows();
    egrad = Mat::Zero(n, n);
    double acc = 0.0;
    for (std::size_t k = 0; k < source.size(); ++k) {
      const Mat& w = target_isqrt[k];
      const Mat rs = r * source[k];
      Mat inner = w * rs * r.transpose() * w;
      inner = (inner + inner.transpose()) * 0.5;
      Eigen::SelfAdjointEigenSolver<Mat> solver(inner);
      if (solver.info() != Eigen::Success) {
        throw NumericalError("find_rotation: eigendecomposition failed");
      }
      const auto& l = solver.eigenvalues();
      const double floor = 1e-14 * l.sum();
      Eigen::VectorXd weights(l.size());
      for (Eigen::Index i = 0; i < l.size(); ++i) {
        const double li = std::max(l(i), floor);
        const double lg = std::log(li);
        acc += lg * lg;
        weights(i) = lg / li;
      }
      const Mat& u = solver.eigenvectors();
      const Mat db = 2.0 * w * (u * weights.asDiagonal() * u.transpose()) * w;
      egrad += 2.0 * db * rs;
    }
    return acc;
  }
};

// Riemannian gradient in body coordinates: skew(Rᵀ E), the tangent vector
// being R skew(Rᵀ E).
Mat body_gradient(const Mat& r, const Mat& egrad) {
  const Mat a = r.transpose() * egrad;
  return (a - a.transpose()) * 0.5;
}

Mat project_tangent(const Mat& r, const Mat& egrad) {
  return r * body_gradient(r, egrad);
}

double inner(const Mat& a, const Mat& b) {
  return (a.array() * b.array()).sum();
}

// QR retraction with R-factor diagonal made positive.
Mat retract(const Mat& r, const Mat& step) {
  const Mat y = r + step;
  Eigen::HouseholderQR<Mat> qr(y);
  Mat q = qr.householderQ() * Mat::Identity(y.rows(), y.cols());
  const Mat rr = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    if (rr(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

// Descent from `r` on O(n). Tangent vectors at R are stored in body
// coordinates Ω (skew) with the tangent vector being R Ω; the search
// direction comes from a limited-memory BFGS two-loop recursion on those
// coordinates (falling back to −grad whenever it is not a descent
// direction), and each step is accepted by Armijo backtracking.
RotationResult descend(const RotationProblem& problem, Mat r,
                       const RpaConfig& cfg, int start_index) {
  constexpr double kArmijo = 1e-4;
  constexpr double kMinStep = 1e-20;
  const auto n = r.rows();
  // Full memory for the 9-channel case: dim O(9) = 36.
  const auto memory = std::clamp<std::size_t>(std::size_t(n * (n - 1) / 2), 10, 64);
  const Mat eye = Mat::Identity(n, n);

  RotationResult out;
  out.start_index = start_index;
  Mat egrad;
  double f = problem.objective_and_gradient(r, egrad);
  Mat grad = body_gradient(r, egrad);
  double gnorm = grad.norm();

  std::deque<Mat> s_hist, y_hist;
  std::deque<double> rho_hist;
  int iter = 0;
  for (; iter < cfg.rotation_max_iter && gnorm >= cfg.rotation_tol; ++iter) {
    // two-loop recursion
    Mat q = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * inner(s_hist[i], q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      q *= inner(s_hist.back(), y_hist.back()) /
           y_hist.back().squaredNorm();
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * inner(y_hist[i], q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Mat dir = -q;
    double slope = inner(grad, dir);
    if (!(slope < 0.0)) {
      dir = -grad;
      slope = -gnorm * gnorm;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    Mat candidate;
    bool accepted = false;
    while (step >= kMinStep) {
      candidate = r * retract(eye, step * dir);
      if (problem.objective(candidate) <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Mat old_grad = grad;
    r = std::move(candidate);
    f = problem.objective_and_gradient(r, egrad);
    grad = body_gradient(r, egrad);
    gnorm = grad.norm();

    Mat sk = step * dir;
    Mat yk = grad - old_grad;
    const double sy = inner(sk, yk);
    if (sy > 1e-12 * sk.norm() * yk.norm()) {
      s_hist.push_back(std::move(sk));
      y_hist.push_back(std::move(yk));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
  }
  out.rotation = std::move(r);
  out.objective = f;
  out.gradient_norm = gnorm;
  out.iterations = iter;
  out.converged = gnorm < cfg.rotation_tol;
  return out;
}

// Warm start per anchor class k: the rotation carrying S_k's eigenbasis onto
// T_k's (eigenvalues in the same order). Eigenvector signs are free for the
// anchor, so they are chosen to agree with the remaining classes: with
// A = U_Tᵀ T_j U_T and B = U_Sᵀ S_j U_S, a planted rotation gives A = D B D,
// and D is read off the leading eigenvector of Σ_j A ∘ B.
std::vector<Mat> spectral_starts(const std::map<int, SpdMatrixd>& src,
                                 const std::map<int, SpdMatrixd>& tgt) {
  std::vector<Mat> starts;
  for (const auto& [anchor, t_anchor] : tgt) {
    const Mat& us = src.at(anchor).eigenvectors();
    const Mat& ut = t_anchor.eigenvectors();
    const auto n = us.rows();
    Mat w = Mat::Zero(n, n);
    for (const auto& [label, t] : tgt) {
      if (label == anchor) continue;
      const Mat a = ut.transpose() * t.matrix() * ut;
      const Mat b = us.transpose() * src.at(label).matrix() * us;
      w += (a.array() * b.array()).matrix();
    }
    Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
    if (tgt.size() > 1) {
      Eigen::SelfAdjointEigenSolver<Mat> solver((w + w.transpose()) * 0.5);
      const auto v = solver.eigenvectors().col(n - 1);
      for (Eigen::Index i = 0; i < n; ++i) d(i) = v(i) < 0 ? -1.0 : 1.0;
    }
    starts.push_back(ut * d.asDiagonal() * us.transpose());
  }
  return starts;
}

}  // namespace

void RpaConfig::validate() const {
  if (!(rotation_tol > 0.0)) throw InputError("RpaConfig: rotation_tol <= 0");
  if (rotation_max_iter < 1) {
    throw InputError("RpaConfig: rotation_max_iter < 1");
  }
  if (rotation_restarts < 0) {
    throw InputError("RpaConfig: rotation_restarts < 0");
  }
  if (!(karcher.tol > 0.0) || karcher.max_iter < 1) {
    throw InputError("RpaConfig: invalid Karcher options");
  }
}

DatasetMeans dataset_means(std::span<const Trial> trials,
                           const KarcherOptions& opts) {
  if (trials.empty()) throw InputError("dataset_means: no trials");
  std::vector<SpdMatrixd> all;
  all.reserve(trials.size());
  for (const auto& t : trials) all.push_back(t.covariance);
  return DatasetMeans{karcher_mean<double>(all, opts),
                      class_means(trials, opts)};
}

std::vector<Trial> recenter(std::span<const Trial> trials,
                            const SpdMatrixd& mean) {
  const Mat w = spd_inv_sqrt(mean);
  std::vector<Trial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    if (t.covariance.dim() != mean.dim()) {
      throw InputError("recenter: dimension mismatch");
    }
    out.push_back(Trial{SpdMatrixd(congruence(w, t.covariance.matrix())),
                        t.label});
  }
  return out;
}

std::vector<Trial> equalize_dispersion(std::span<const Trial> trials,
                                       double d_current, double d_reference) {
  if (!(d_current > 0.0)) {
    throw InputError("equalize_dispersion: current dispersion must be > 0");
  }
  if (!(d_reference >= 0.0)) {
    throw InputError("equalize_dispersion: reference dispersion must be >= 0");
  }
  const double s = std::sqrt(d_reference / d_current);
  std::vector<Trial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    if (s == 1.0) {
      out.push_back(t);
    } else {
      out.push_back(Trial{SpdMatrixd(spd_power(t.covariance, s)), t.label});
    }
  }
  return out;
}

double rotation_objective(const std::map<int, SpdMatrixd>& source,
                          const std::map<int, SpdMatrixd>& target,
                          const MatrixX<double>& rotation) {
  require_same_labels(source, target);
  return RotationProblem(source, target).objective(rotation);
}

MatrixX<double> rotation_gradient(const std::map<int, SpdMatrixd>& source,
                                  const std::map<int, SpdMatrixd>& target,
                                  const MatrixX<double>& rotation) {
  require_same_labels(source, target);
  Mat egrad;
  RotationProblem(source, target).objective_and_gradient(rotation, egrad);
  return project_tangent(rotation, egrad);
}

RotationResult find_rotation(const std::map<int, SpdMatrixd>& source_means,
                             const std::map<int, SpdMatrixd>& target_means,
                             const RpaConfig& cfg) {
  cfg.validate();
  require_same_labels(source_means, target_means);
  if (source_means.empty()) throw InputError("find_rotation: no classes");
  const auto n = source_means.begin()->second.dim();
  const RotationProblem problem(source_means, target_means);

  // Identity, one spectral warm start per class, then the random restarts.
  std::vector<Mat> inits{Mat::Identity(n, n)};
  for (auto& m : spectral_starts(source_means, target_means)) inits.push_back(std::move(m));
  Rng rng(cfg.seed);
  for (int i = 0; i < cfg.rotation_restarts; ++i) inits.push_back(random_orthogonal(n, rng));

  RotationResult best;
  best.objective = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  for (std::size_t start = 0; start < inits.size(); ++start) {
    RotationResult run = descend(problem, std::move(inits[start]), cfg, int(start));
    any_converged = any_converged || run.converged;
    if (run.objective < best.objective) best = std::move(run);
  }
  if (!any_converged) {
    throw ConvergenceError<RotationResult>(
        "find_rotation: no start reached gradient norm < " +
            std::to_string(cfg.rotation_tol),
        best, best.gradient_norm);
  }
  return best;
}

SpdMatrixd AlignmentTransform::to_target_frame(const SpdMatrixd& c) const {
  return SpdMatrixd(congruence(target_whitener, c.matrix()));
}

SpdMatrixd AlignmentTransform::to_aligned_source(const SpdMatrixd& c) const {
  SpdMatrixd centred(congruence(source_whitener, c.matrix()));
  if (stretch != 1.0) centred = SpdMatrixd(spd_power(centred, stretch));
  return SpdMatrixd(congruence(rotation, centred.matrix()));
}

AlignmentTransform align_means(std::span<const Trial> source,
                               const DatasetMeans& source_means,
                               std::span<const Trial> target_train,
                               const DatasetMeans& target_means,
                               const RpaConfig& cfg) {
  cfg.validate();
  if (source_means.overall.dim() != target_means.overall.dim()) {
    throw InputError("rpa_align: source and target dimensions differ");
  }
  if (source_means.classes.size() < 2 || target_means.classes.size() < 2) {
    throw InputError("rpa_align: both datasets need at least two classes");
  }
  AlignmentTransform out;
  out.source_whitener = spd_inv_sqrt(source_means.overall);
  out.target_whitener = spd_inv_sqrt(target_means.overall);

  // Karcher means commute with congruence, so recentered class means are the
  // whitened raw class means.
  for (const auto& [label, m] : target_means.classes) {
    out.target_means.emplace(
        label, SpdMatrixd(congruence(out.target_whitener, m.matrix())));
  }
  std::map<int, SpdMatrixd> source_centred;
  if (cfg.equalize_dispersion) {
    const auto src = recenter(source, source_means.overall);
    const auto tgt = recenter(target_train, target_means.overall);
    const auto identity = SpdMatrixd::identity(source_means.overall.dim());
    std::vector<SpdMatrixd> src_set, tgt_set;
    for (const auto& t : src) src_set.push_back(t.covariance);
    for (const auto& t : tgt) tgt_set.push_back(t.covariance);
    const double d_src = dispersion<double>(src_set, identity);
    const double d_tgt = dispersion<double>(tgt_set, identity);
    out.stretch = std::sqrt(d_tgt / d_src);
    source_centred = class_means(equalize_dispersion(src, d_src, d_tgt),
                                 cfg.karcher);
  } else {
    for (const auto& [label, m] : source_means.classes) {
      source_centred.emplace(
          label, SpdMatrixd(congruence(out.source_whitener, m.matrix())));
    }
  }

  RotationResult rot;
  try {
    rot = find_rotation(source_centred, out.target_means, cfg);
  } catch (const ConvergenceError<RotationResult>& e) {
    rot = e.last_iterate();
  }
  out.rotation = rot.rotation;
  out.rotation_objective = rot.objective;
  out.rotation_converged = rot.converged;
  for (const auto& [label, m] : source_centred) {
    out.aligned_source_means.emplace(
        label, SpdMatrixd(congruence(out.rotation, m.matrix())));
  }
  return out;
}

std::vector<Trial> AlignmentResult::whiten_target(
    std::span<const Trial> trials) const {
  std::vector<Trial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    out.push_back(Trial{transform.to_target_frame(t.covariance), t.label});
  }
  return out;
}

AlignmentResult rpa_align(std::span<const Trial> source,
                          std::span<const Trial> target_train,
                          const RpaConfig& cfg) {
  cfg.validate();
  require_labels(source, "source");
  require_labels(target_train, "target training data");
  const DatasetMeans sm = dataset_means(source, cfg.karcher);
  const DatasetMeans tm = dataset_means(target_train, cfg.karcher);
  for (const auto& [label, m] : tm.classes) {
    if (!sm.classes.contains(label)) {
      throw InputError("rpa_align: class " + std::to_string(label) +
                       " missing from source");
    }
  }
  for (const auto& [label, m] : sm.classes) {
    if (!tm.classes.contains(label)) {
      throw InputError("rpa_align: class " + std::to_string(label) +
                       " missing from target training data");
    }
  }

  AlignmentResult out;
  out.transform = align_means(source, sm, target_train, tm, cfg);
  out.target_whitener = out.transform.target_whitener;
  out.rotation = out.transform.rotation;
  out.rotation_objective = out.transform.rotation_objective;
  out.rotation_converged = out.transform.rotation_converged;
  out.aligned_source.reserve(source.size());
  for (const auto& t : source) {
    out.aligned_source.push_back(
        Trial{out.transform.to_aligned_source(t.covariance), t.label});
  }
  out.recentered_target_train = out.whiten_target(target_train);
  return out;
}

}  // namespace srcsel
