#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saev/demand.hpp"
#include "saev/design_cost.hpp"
#include "saev/fleet_sim.hpp"
#include "saev/optimizer.hpp"
#include "saev/road_net.hpp"
#include "saev/surrogate.hpp"

namespace saev {

inline constexpr const char* kToolVersion = "0.3.0";

// 64-bit FNV-1a of `text`, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);
// Digest of the canonical (sorted-key, compact) serialization.
std::string config_digest(const nlohmann::json& doc);

// Parsed run configuration. Relative paths resolve against the directory of
// the config file.
struct ScenarioConfig {
  nlohmann::json raw;
  std::string digest;
  std::string base_dir;

  std::string network_path;
  std::string traffic_path;  // empty: built-in hourly profile
  SpeedMode speed_mode = SpeedMode::uniform;
  std::uint64_t speed_seed = 0;
  GridSpec grid;

  std::string intensity_path;  // synthetic demand, one draw per day
  std::string events_path;     // or a fixed event list (single day)
  std::uint64_t demand_seed = 7;
  int history_days = 14;  // days drawn before day 0 to fit the demand baseline
  double forecast_alpha = 0.5;

  std::string constants_path;  // empty: defaults
  std::string stations_path;   // station table; empty: planned on load
  std::vector<int> p_list{1, 2, 3, 4, 5, 6};
  std::size_t pmedian_exact_limit = 200'000;

  SystemDesign design;
  double soc_trigger = 0.15;
  int bin_minutes = 30;
  int top_k = 0;
  double duration_min = 1440.0;
  int day = 0;
  std::uint64_t seed = 1;

  std::string strategy = "relocation";  // relocation | random
  std::optional<ModelingParams> params;  // default: box midpoint
  std::string params_path;               // file with {"f1":..,"f2":..}
  SelectionMask mask;

  ParamSearchConfig search;
  DesignSearchConfig design_search;
  TrainConfig train;
  std::vector<std::uint64_t> eval_seeds{1, 2, 3, 4, 5};

  static ScenarioConfig from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
  static ScenarioConfig load(const std::string& path);
  std::string resolve(const std::string& path) const;
};

// Loaded city plus everything needed to build per-day scenarios.
class City {
 public:
  explicit City(const ScenarioConfig& config);

  const ScenarioConfig& config() const { return config_; }
  std::shared_ptr<const RoadNetwork> net() const { return net_; }
  std::shared_ptr<const RoutingTable> routes() const { return routes_; }
  const CostConstants& constants() const { return constants_; }
  const StationTable& stations() const { return stations_; }
  std::shared_ptr<const BaselinePredictor> predictor() const { return predictor_; }
  int bins_per_day() const { return 24 * 60 / config_.bin_minutes; }

  // Days 0..history_days-1 fit the demand baseline; simulated day d is
  // absolute day history_days + d.
  int absolute_day(int day) const;
  std::vector<DemandEvent> demand_for_absolute_day(int absolute_day) const;
  // Scenario of simulated day `day` under `design` (stations from the table).
  std::shared_ptr<const Scenario> day_scenario(int day) const;
  std::shared_ptr<const Scenario> day_scenario(int day, const SystemDesign& design) const;

  // Independent draw of simulated day `day`'s requests in [t0, t1), from the
  // intensity profile (throws ConfigError for a fixed event list).
  std::vector<DemandEvent> sample_window_demand(int day, double t0, double t1, int sample) const;
  WindowDemandSampler window_sampler() const;

  // Demand weight per node, for station siting: mean daily requests from the
  // node's cell, split evenly across the cell's nodes.
  std::vector<double> node_weights() const;

  Strategy strategy() const;
  ModelingParams params() const;

 private:
  ScenarioConfig config_;
  std::shared_ptr<const RoadNetwork> net_;
  std::shared_ptr<const RoutingTable> routes_;
  CostConstants constants_;
  StationTable stations_;
  std::optional<DemandIntensity> intensity_;
  std::vector<DemandEvent> fixed_events_;
  std::shared_ptr<const BaselinePredictor> predictor_;
  ModelingParams params_;
};

}  // namespace saev
