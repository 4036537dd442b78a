#pragma once

// Transfer-performance predictor: a robust scaler feeding an 18-50-50-1
// rectifier network that regresses cross-subject accuracy from PairFeatures.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "srcsel/features.hpp"

namespace srcsel {

using FeatureVector = std::array<double, kFeatureCount>;

/// Per-feature (x − median) / IQR, quartiles by linear interpolation.
/// Features whose IQR is below 1e-12 pass through unchanged.
struct RobustScaler {
  FeatureVector median{};
  FeatureVector iqr{};

  bool pass_through(std::size_t j) const { return !(iqr[j] >= 1e-12); }
  FeatureVector apply(const FeatureVector& x) const;
};

/// Quantile q ∈ [0, 1] of `values` with linear interpolation between order
/// statistics at position q·(n − 1).
double quantile_linear(std::vector<double> values, double q);

RobustScaler scaler_fit(std::span<const FeatureVector> features);
inline FeatureVector scaler_apply(const RobustScaler& s, const FeatureVector& x) {
  return s.apply(x);
}

/// Fully connected regressor; rectifier on hidden layers, identity output.
class MlpRegressor {
 public:
  static constexpr std::array<int, 4> kLayerSizes = {
      static_cast<int>(kFeatureCount), 50, 50, 1};

  /// Zero weights and biases.
  MlpRegressor();

  /// Glorot-uniform weights, zero biases.
  static MlpRegressor initialized(std::uint64_t seed);

  double predict(const FeatureVector& scaled) const;

  /// Column per sample. Returns one prediction per column.
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& x) const;

  /// Mean squared error over the columns of x and its gradient with respect
  /// to parameters() (same layout).
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           Eigen::VectorXd& gradient) const;

  /// All weights (row-major per layer) then biases, layer by layer.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& p);
  static Eigen::Index parameter_count();

  std::array<Eigen::MatrixXd, 3> weights;  // out × in
  std::array<Eigen::VectorXd, 3> biases;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 1000;
  int patience = 50;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainReport {
  int epochs = 0;
  double best_validation_loss = 0.0;
  double final_training_loss = 0.0;
};

/// Minimizes mean squared error with Adam on minibatches. A seeded
/// validation_fraction of the samples drives early stopping; the parameters
/// with the lowest validation loss are returned. Throws TrainingError on a
/// non-finite loss.
MlpRegressor mlp_train(std::span<const FeatureVector> x,
                       std::span<const double> y, const TrainConfig& cfg,
                       TrainReport* report = nullptr);

/// Scaler, network and the seed that trained them.
struct TppModel {
  RobustScaler scaler;
  MlpRegressor network;
  std::uint64_t train_seed = 0;

  /// Unclipped; use this for ranking.
  double predict_raw(const PairFeatures& f) const;
  /// Clipped to [0, 1] for reporting.
  double predict_accuracy(const PairFeatures& f) const;
};

/// Fits the scaler on the features, then trains the network on scaled data.
TppModel tpp_train(std::span<const PairFeatures> features,
                   std::span<const double> accuracies, const TrainConfig& cfg,
                   TrainReport* report = nullptr);

inline constexpr int kModelVersion = 1;

/// {version, layer_sizes, weights, biases, scaler_median, scaler_iqr,
/// train_seed}; weights row-major per layer.
nlohmann::json model_to_json(const TppModel& m);
TppModel model_from_json(const nlohmann::json& j);
void model_write(const std::filesystem::path& path, const TppModel& m);
TppModel model_read(const std::filesystem::path& path);

}  // namespace srcsel
