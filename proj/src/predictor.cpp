#include "srcsel/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "srcsel/dataset.hpp"
#include "srcsel/random.hpp"

namespace srcsel {

namespace {

using nlohmann::json;

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

Eigen::MatrixXd columns(std::span<const FeatureVector> x,
                        std::span<const std::size_t> idx) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(kFeatureCount),
                    static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c)
    for (std::size_t r = 0; r < kFeatureCount; ++r)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          x[idx[c]][r];
  return m;
}

Eigen::VectorXd gather(std::span<const double> y,
                       std::span<const std::size_t> idx) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = y[idx[i]];
  return v;
}

}  // namespace

FeatureVector RobustScaler::apply(const FeatureVector& x) const {
  FeatureVector out = x;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    if (!pass_through(j)) out[j] = (x[j] - median[j]) / iqr[j];
  }
  return out;
}

double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RobustScaler scaler_fit(std::span<const FeatureVector> features) {
  if (features.size() < 2) {
    throw InputError("scaler_fit: need at least two samples");
  }
  RobustScaler s;
  std::vector<double> col(features.size());
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    for (std::size_t i = 0; i < features.size(); ++i) col[i] = features[i][j];
    s.median[j] = quantile_linear(col, 0.5);
    s.iqr[j] = quantile_linear(col, 0.75) - quantile_linear(col, 0.25);
  }
  return s;
}

MlpRegressor::MlpRegressor() {
  for (std::size_t l = 0; l < 3; ++l) {
    weights[l] = Eigen::MatrixXd::Zero(kLayerSizes[l + 1], kLayerSizes[l]);
    biases[l] = Eigen::VectorXd::Zero(kLayerSizes[l + 1]);
  }
}

MlpRegressor MlpRegressor::initialized(std::uint64_t seed) {
  MlpRegressor m;
  Rng rng(seed);
  for (std::size_t l = 0; l < 3; ++l) {
    const double bound =
        std::sqrt(6.0 / double(kLayerSizes[l] + kLayerSizes[l + 1]));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto& w = m.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
  }
  return m;
}

Eigen::VectorXd MlpRegressor::predict_batch(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < 3; ++l) {
    Eigen::MatrixXd z = (weights[l] * a).colwise() + biases[l];
    a = l < 2 ? relu(z) : z;
  }
  return a.row(0).transpose();
}

double MlpRegressor::predict(const FeatureVector& scaled) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(kFeatureCount), 1);
  for (std::size_t r = 0; r < kFeatureCount; ++r)
    x(static_cast<Eigen::Index>(r), 0) = scaled[r];
  return predict_batch(x)(0);
}

double MlpRegressor::loss_and_gradient(const Eigen::MatrixXd& x,
                                       const Eigen::VectorXd& y,
                                       Eigen::VectorXd& gradient) const {
  const double batch = double(x.cols());
  std::array<Eigen::MatrixXd, 4> act;
  std::array<Eigen::MatrixXd, 3> pre;
  act[0] = x;
  for (std::size_t l = 0; l < 3; ++l) {
    pre[l] = (weights[l] * act[l]).colwise() + biases[l];
    act[l + 1] = l < 2 ? relu(pre[l]) : pre[l];
  }
  const Eigen::RowVectorXd resid = act[3].row(0) - y.transpose();
  const double loss = resid.squaredNorm() / batch;

  std::array<Eigen::MatrixXd, 3> dw;
  std::array<Eigen::VectorXd, 3> db;
  Eigen::MatrixXd delta = (2.0 / batch) * resid;
  for (int l = 2; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    dw[ul] = delta * act[ul].transpose();
    db[ul] = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = weights[ul].transpose() * delta;
      delta = back.cwiseProduct(
          (pre[ul - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  gradient.resize(parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < 3; ++l)
    for (Eigen::Index i = 0; i < dw[l].rows(); ++i)
      for (Eigen::Index j = 0; j < dw[l].cols(); ++j) gradient(k++) = dw[l](i, j);
  for (std::size_t l = 0; l < 3; ++l)
    for (Eigen::Index i = 0; i < db[l].size(); ++i) gradient(k++) = db[l](i);
  return loss;
}

Eigen::Index MlpRegressor::parameter_count() {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < 3; ++l)
    n += Eigen::Index(kLayerSizes[l + 1]) * (kLayerSizes[l] + 1);
  return n;
}

Eigen::VectorXd MlpRegressor::parameters() const {
  Eigen::VectorXd p(parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < 3; ++l)
    for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < weights[l].cols(); ++j)
        p(k++) = weights[l](i, j);
  for (std::size_t l = 0; l < 3; ++l)
    for (Eigen::Index i = 0; i < biases[l].size(); ++i) p(k++) = biases[l](i);
  return p;
}

void MlpRegressor::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != parameter_count()) {
    throw InputError("MlpRegressor: parameter vector has wrong length");
  }
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < 3; ++l)
    for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < weights[l].cols(); ++j)
        weights[l](i, j) = p(k++);
  for (std::size_t l = 0; l < 3; ++l)
    for (Eigen::Index i = 0; i < biases[l].size(); ++i) biases[l](i) = p(k++);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || batch_size < 1 || max_epochs < 1 ||
      patience < 1) {
    throw InputError("TrainConfig: rates and counts must be positive");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw InputError("TrainConfig: validation_fraction must lie in [0, 1)");
  }
}

MlpRegressor mlp_train(std::span<const FeatureVector> x,
                       std::span<const double> y, const TrainConfig& cfg,
                       TrainReport* report) {
  cfg.validate();
  if (x.size() != y.size()) throw InputError("mlp_train: |X| != |y|");
  if (x.size() < 2) throw InputError("mlp_train: need at least two samples");

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = 0;
  if (cfg.validation_fraction > 0.0) {
    n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(cfg.validation_fraction * double(x.size()))));
    n_val = std::min(n_val, x.size() - 1);
  }
  const std::vector<std::size_t> val_idx(order.begin(),
                                         order.begin() + std::ptrdiff_t(n_val));
  std::vector<std::size_t> train_idx(order.begin() + std::ptrdiff_t(n_val),
                                     order.end());
  const Eigen::MatrixXd x_all_train = columns(x, train_idx);
  const Eigen::VectorXd y_all_train = gather(y, train_idx);
  const Eigen::MatrixXd x_val = columns(x, val_idx);
  const Eigen::VectorXd y_val = gather(y, val_idx);

  MlpRegressor model = MlpRegressor::initialized(derive_seed(cfg.seed, 1));
  Eigen::VectorXd p = model.parameters();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(p.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(p.size());
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  long step = 0;

  auto monitor_loss = [&](const MlpRegressor& m) {
    const auto& xs = n_val > 0 ? x_val : x_all_train;
    const auto& ys = n_val > 0 ? y_val : y_all_train;
    return (m.predict_batch(xs) - ys).squaredNorm() / double(ys.size());
  };

  MlpRegressor best = model;
  double best_loss = monitor_loss(model);
  int since_best = 0;
  int epoch = 0;
  Eigen::VectorXd grad;
  for (; epoch < cfg.max_epochs && since_best < cfg.patience; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    for (std::size_t b = 0; b < train_idx.size();
         b += static_cast<std::size_t>(cfg.batch_size)) {
      const auto e = std::min(train_idx.size(),
                              b + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> idx(train_idx.data() + b, e - b);
      const double loss =
          model.loss_and_gradient(columns(x, idx), gather(y, idx), grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw TrainingError("mlp_train: non-finite loss at epoch " +
                            std::to_string(epoch));
      }
      ++step;
      m1 = kBeta1 * m1 + (1 - kBeta1) * grad;
      m2 = kBeta2 * m2 + (1 - kBeta2) * grad.cwiseProduct(grad);
      const double c1 = 1 - std::pow(kBeta1, double(step));
      const double c2 = 1 - std::pow(kBeta2, double(step));
      p.array() -= cfg.learning_rate * (m1.array() / c1) /
                   ((m2.array() / c2).sqrt() + kEps);
      model.set_parameters(p);
    }
    const double vl = monitor_loss(model);
    if (!std::isfinite(vl)) {
      throw TrainingError("mlp_train: non-finite validation loss at epoch " +
                          std::to_string(epoch));
    }
    if (vl < best_loss) {
      best_loss = vl;
      best = model;
      since_best = 0;
    } else {
      ++since_best;
    }
  }
  if (report) {
    report->epochs = epoch;
    report->best_validation_loss = best_loss;
    report->final_training_loss =
        (best.predict_batch(x_all_train) - y_all_train).squaredNorm() /
        double(y_all_train.size());
  }
  return best;
}

double TppModel::predict_raw(const PairFeatures& f) const {
  return network.predict(scaler.apply(f.values));
}

double TppModel::predict_accuracy(const PairFeatures& f) const {
  return std::clamp(predict_raw(f), 0.0, 1.0);
}

TppModel tpp_train(std::span<const PairFeatures> features,
                   std::span<const double> accuracies, const TrainConfig& cfg,
                   TrainReport* report) {
  std::vector<FeatureVector> raw;
  raw.reserve(features.size());
  for (const auto& f : features) raw.push_back(f.values);
  TppModel m;
  m.scaler = scaler_fit(raw);
  for (auto& r : raw) r = m.scaler.apply(r);
  m.network = mlp_train(raw, accuracies, cfg, report);
  m.train_seed = cfg.seed;
  return m;
}

json model_to_json(const TppModel& m) {
  json j;
  j["version"] = kModelVersion;
  j["layer_sizes"] = MlpRegressor::kLayerSizes;
  j["weights"] = json::array();
  j["biases"] = json::array();
  for (std::size_t l = 0; l < 3; ++l) {
    json w = json::array();
    const auto& wl = m.network.weights[l];
    for (Eigen::Index i = 0; i < wl.rows(); ++i)
      for (Eigen::Index k = 0; k < wl.cols(); ++k) w.push_back(wl(i, k));
    j["weights"].push_back(std::move(w));
    j["biases"].push_back(std::vector<double>(
        m.network.biases[l].data(),
        m.network.biases[l].data() + m.network.biases[l].size()));
  }
  j["scaler_median"] = m.scaler.median;
  j["scaler_iqr"] = m.scaler.iqr;
  j["train_seed"] = m.train_seed;
  return j;
}

TppModel model_from_json(const json& j) {
  TppModel m;
  try {
    if (j.at("version").get<int>() != kModelVersion) {
      throw ParseError("model: unsupported version");
    }
    if (j.at("layer_sizes").get<std::vector<int>>() !=
        std::vector<int>(MlpRegressor::kLayerSizes.begin(),
                         MlpRegressor::kLayerSizes.end())) {
      throw ParseError("model: layer sizes must be [18, 50, 50, 1]");
    }
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() != 3 || bs.size() != 3) {
      throw ParseError("model: expected three layers");
    }
    for (std::size_t l = 0; l < 3; ++l) {
      const auto w = ws[l].get<std::vector<double>>();
      const auto b = bs[l].get<std::vector<double>>();
      auto& wl = m.network.weights[l];
      auto& bl = m.network.biases[l];
      if (w.size() != static_cast<std::size_t>(wl.size()) ||
          b.size() != static_cast<std::size_t>(bl.size())) {
        throw ParseError("model: layer " + std::to_string(l) +
                         " has the wrong number of parameters");
      }
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < wl.rows(); ++r)
        for (Eigen::Index c = 0; c < wl.cols(); ++c) wl(r, c) = w[k++];
      for (Eigen::Index r = 0; r < bl.size(); ++r)
        bl(r) = b[static_cast<std::size_t>(r)];
      if (!wl.allFinite() || !bl.allFinite()) {
        throw ValidationError("model: non-finite parameters");
      }
    }
    m.scaler.median = j.at("scaler_median").get<FeatureVector>();
    m.scaler.iqr = j.at("scaler_iqr").get<FeatureVector>();
    m.train_seed = j.at("train_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  return m;
}

void model_write(const std::filesystem::path& path, const TppModel& m) {
  write_text_file(path, model_to_json(m).dump(1) + "\n");
}

TppModel model_read(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace srcsel
