#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "saev/fleet_sim.hpp"
#include "saev/optimizer.hpp"
#include "saev/relocation.hpp"

namespace saev {

inline constexpr double kTargetEpsilon = 1e-6;

// Layout: pooling*pooling demand sums, total demand, vehicles per state,
// SOC mean/min/q25/q50/q75, charger occupancy fraction, mean minutes until
// occupied chargers free up, sin/cos hour of day, sin/cos day of week.
std::size_t feature_count(int pooling);
std::vector<double> extract_features(const FleetSnapshot& snapshot, int pooling = 5);

struct ScalerState {
  std::vector<double> min;
  std::vector<double> max;

  std::vector<double> apply(std::span<const double> v) const;
};

ScalerState fit_scaler(std::span<const std::vector<double>> features);

double forward_target(double x);
double inverse_target(double y);

enum class LearnerKind { knn, ridge };
std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(const std::string& s);

// Regression from scaled features to transformed targets.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual LearnerKind kind() const = 0;
  virtual void fit(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) = 0;
  virtual std::vector<double> predict(std::span<const double> x) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

// Inverse-distance weighted k nearest neighbours (Euclidean). An exact match
// returns the mean of the matching targets.
class KnnRegressor final : public Regressor {
 public:
  explicit KnnRegressor(int k = 5) : k_(k) {}
  LearnerKind kind() const override { return LearnerKind::knn; }
  void fit(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) override;
  std::vector<double> predict(std::span<const double> x) const override;
  nlohmann::json to_json() const override;
  static std::unique_ptr<KnnRegressor> from_json(const nlohmann::json& doc);

 private:
  int k_;
  std::vector<std::vector<double>> x_;
  std::vector<std::vector<double>> y_;
};

// L2-regularized linear model with an unpenalized intercept.
class RidgeRegressor final : public Regressor {
 public:
  explicit RidgeRegressor(double lambda = 1e-2) : lambda_(lambda) {}
  LearnerKind kind() const override { return LearnerKind::ridge; }
  void fit(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) override;
  std::vector<double> predict(std::span<const double> x) const override;
  nlohmann::json to_json() const override;
  static std::unique_ptr<RidgeRegressor> from_json(const nlohmann::json& doc);

 private:
  double lambda_;
  std::vector<std::vector<double>> weights_;  // [target][feature]
  std::vector<double> intercept_;
};

class SurrogateModel {
 public:
  SurrogateModel() = default;
  SurrogateModel(std::unique_ptr<Regressor> learner, ScalerState scaler, int pooling, FunctionType f1,
                 FunctionType f2);

  bool trained() const { return learner_ != nullptr; }
  int pooling() const { return pooling_; }
  const ScalerState& scaler() const { return scaler_; }
  const Regressor& learner() const;
  FunctionType f1_type() const { return f1_; }
  FunctionType f2_type() const { return f2_; }

  // Features -> scale -> learner -> inverse log -> clip to parameter bounds.
  ModelingParams predict(const FleetSnapshot& snapshot) const;

  std::string config_digest;
  nlohmann::json to_json() const;
  static SurrogateModel from_json(const nlohmann::json& doc);
  static SurrogateModel load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::shared_ptr<const Regressor> learner_;
  ScalerState scaler_;
  int pooling_ = 5;
  FunctionType f1_ = FunctionType::exp_gauss;
  FunctionType f2_ = FunctionType::exp_gauss;
};

ModelingParams predict_params(const SurrogateModel& model, const FleetSnapshot& snapshot);

// Calls model.predict at every window refresh. The model is shared, so the
// source can be copied freely.
ParamsSource surrogate_source(std::shared_ptr<const SurrogateModel> model);

struct TrainConfig {
  LearnerKind learner = LearnerKind::knn;
  int k = 5;
  double ridge_lambda = 1e-2;
  double train_fraction = 0.8;
  bool chronological = false;  // otherwise a seeded shuffle
  bool include_degenerate = false;
  int pooling = 5;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct SurrogateMetrics {
  double rmse = 0.0;  // over all parameters, original scale
  double mae = 0.0;
  std::vector<double> rmse_per_param;
  std::vector<double> mae_per_param;
  std::size_t count = 0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  SurrogateModel model;
  SurrogateMetrics test;
  std::vector<std::size_t> train_rows;  // indices into the usable records
  std::vector<std::size_t> test_rows;
  std::size_t usable = 0;
};

TrainResult train_surrogate(std::span<const TrainingRecord> records, const TrainConfig& config, std::uint64_t seed);

SurrogateMetrics evaluate_surrogate(const SurrogateModel& model, std::span<const TrainingRecord> records);

}  // namespace saev
