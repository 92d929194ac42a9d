#include "saev/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "saev/error.hpp"
#include "saev/rng.hpp"

namespace saev {

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_digest(const nlohmann::json& doc) { return fnv1a_hex(doc.dump()); }

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

std::string ScenarioConfig::resolve(const std::string& path) const {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ScenarioConfig c;
  c.raw = doc;
  c.digest = config_digest(doc);
  c.base_dir = base_dir;
  try {
    c.network_path = c.resolve(doc.at("network").get<std::string>());
    c.traffic_path = c.resolve(doc.value("traffic", std::string{}));
    c.speed_mode = parse_speed_mode(doc.value("speed_mode", to_string(c.speed_mode)));
    c.speed_seed = doc.value("speed_seed", c.speed_seed);
    if (doc.contains("grid")) {
      const auto& g = doc.at("grid");
      c.grid.origin_x = g.value("origin_x", c.grid.origin_x);
      c.grid.origin_y = g.value("origin_y", c.grid.origin_y);
      c.grid.cell_size = g.value("cell_size", c.grid.cell_size);
      c.grid.rows = g.value("rows", c.grid.rows);
      c.grid.cols = g.value("cols", c.grid.cols);
    }
    const auto& demand = doc.at("demand");
    c.intensity_path = c.resolve(demand.value("intensity", std::string{}));
    c.events_path = c.resolve(demand.value("events", std::string{}));
    c.demand_seed = demand.value("seed", c.demand_seed);
    c.history_days = demand.value("history_days", c.history_days);
    c.forecast_alpha = demand.value("alpha", c.forecast_alpha);

    c.constants_path = c.resolve(doc.value("constants", std::string{}));
    if (doc.contains("stations")) {
      const auto& st = doc.at("stations");
      if (st.is_string()) {
        c.stations_path = c.resolve(st.get<std::string>());
      } else {
        c.p_list = st.value("p", c.p_list);
        c.pmedian_exact_limit = st.value("exact_limit", c.pmedian_exact_limit);
      }
    }
    if (doc.contains("design")) c.design = SystemDesign::from_json(doc.at("design"));
    c.soc_trigger = doc.value("soc_trigger", c.soc_trigger);
    c.bin_minutes = doc.value("bin_minutes", c.bin_minutes);
    c.top_k = doc.value("top_k", c.top_k);
    c.duration_min = doc.value("duration_min", c.duration_min);
    c.day = doc.value("day", c.day);
    c.seed = doc.value("seed", c.seed);
    c.strategy = doc.value("strategy", c.strategy);
    if (doc.contains("params")) {
      const auto& p = doc.at("params");
      if (p.is_string()) {
        c.params_path = c.resolve(p.get<std::string>());
      } else {
        c.params = ModelingParams::from_json(p);
      }
    }
    if (doc.contains("mask")) {
      c.mask.use_p2 = doc.at("mask").value("use_p2", true);
      c.mask.use_p3 = doc.at("mask").value("use_p3", true);
    }
    if (doc.contains("search")) c.search = ParamSearchConfig::from_json(doc.at("search"));
    c.search.mask = c.mask;
    if (doc.contains("design_search")) c.design_search = DesignSearchConfig::from_json(doc.at("design_search"));
    if (doc.contains("train")) c.train = TrainConfig::from_json(doc.at("train"));
    c.eval_seeds = doc.value("eval_seeds", c.eval_seeds);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (c.intensity_path.empty() == c.events_path.empty()) {
    throw ConfigError("config: demand needs exactly one of 'intensity' or 'events'");
  }
  if (c.bin_minutes <= 0 || (24 * 60) % c.bin_minutes != 0) {
    throw ConfigError("config: bin_minutes must divide a day");
  }
  if (!(c.duration_min > 0.0)) throw ConfigError("config: duration_min must be > 0");
  if (c.history_days < 1) throw ConfigError("config: history_days must be >= 1");
  if (c.day < 0) throw ConfigError("config: day must be >= 0");
  if (!(c.soc_trigger >= 0.0 && c.soc_trigger < 1.0)) throw ConfigError("config: soc_trigger must be in [0, 1)");
  if (c.strategy != "relocation" && c.strategy != "random") {
    throw ConfigError("config: strategy must be 'relocation' or 'random'");
  }
  if (c.eval_seeds.empty()) throw ConfigError("config: eval_seeds must not be empty");
  c.grid.validate();
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::string& path) {
  const auto doc = read_json_file(path);
  const auto dir = std::filesystem::path(path).parent_path().string();
  return from_json(doc, dir.empty() ? "." : dir);
}

// --- city ----------------------------------------------------------------------

City::City(const ScenarioConfig& config) : config_(config) {
  net_ = std::make_shared<const RoadNetwork>(load_network_file(config_.network_path));
  SpeedModel speeds;
  speeds.profile =
      config_.traffic_path.empty() ? TrafficProfile::seoul_default() : TrafficProfile::from_csv_file(config_.traffic_path);
  speeds.mode = config_.speed_mode;
  speeds.seed = config_.speed_seed;
  routes_ = std::make_shared<const RoutingTable>(*net_, speeds);
  if (!config_.constants_path.empty()) constants_ = CostConstants::from_json_file(config_.constants_path);

  const int per_day = bins_per_day();
  if (!config_.intensity_path.empty()) {
    intensity_ = DemandIntensity::from_json_file(config_.intensity_path);
    if (intensity_->rows != config_.grid.rows || intensity_->cols != config_.grid.cols) {
      throw ConfigError("intensity grid does not match the configured grid");
    }
    if (intensity_->bins % per_day != 0) throw ConfigError("intensity bins must be a whole number of days");
    DemandTensor history(config_.grid, config_.bin_minutes, config_.history_days * per_day);
    for (int d = 0; d < config_.history_days; ++d) {
      const auto events = demand_for_absolute_day(d);
      const auto day = bin_demand(events, config_.grid, *net_, config_.bin_minutes, per_day);
      for (int b = 0; b < per_day; ++b) {
        for (int cell = 0; cell < history.cells(); ++cell) history.at(d * per_day + b, cell) = day.at(b, cell);
      }
    }
    predictor_ = std::make_shared<const BaselinePredictor>(fit_baseline(history, per_day, config_.forecast_alpha));
  } else {
    fixed_events_ = read_demand_csv_file(config_.events_path);
    for (const auto& e : fixed_events_) {
      if (e.origin < 0 || e.origin >= net_->node_count() || e.destination < 0 ||
          e.destination >= net_->node_count()) {
        throw ConfigError("demand events reference unknown nodes");
      }
    }
    const auto history = bin_demand(fixed_events_, config_.grid, *net_, config_.bin_minutes, per_day);
    predictor_ = std::make_shared<const BaselinePredictor>(fit_baseline(history, per_day, config_.forecast_alpha));
  }

  if (!config_.stations_path.empty()) {
    // Accepts a bare table or a plan-stations artifact.
    const auto doc = read_json_file(config_.stations_path);
    stations_ = station_table_from_json(doc.contains("stations") ? doc.at("stations") : doc);
  } else {
    std::vector<int> candidates(static_cast<std::size_t>(net_->node_count()));
    for (int i = 0; i < net_->node_count(); ++i) candidates[static_cast<std::size_t>(i)] = i;
    const auto weights = node_weights();
    stations_ = station_plan(*net_, weights, config_.p_list, candidates, config_.pmedian_exact_limit);
  }

  if (!config_.params_path.empty()) {
    const auto doc = read_json_file(config_.params_path);
    params_ = ModelingParams::from_json(doc.contains("params") ? doc.at("params") : doc);
  } else if (config_.params) {
    params_ = *config_.params;
  } else {
    params_ = midpoint_params(config_.search.f1_type, config_.search.f2_type);
  }
}

int City::absolute_day(int day) const { return fixed_events_.empty() ? config_.history_days + day : 0; }

std::vector<DemandEvent> City::demand_for_absolute_day(int absolute_day) const {
  if (!intensity_) return fixed_events_;
  const int per_day = bins_per_day();
  const int days_in_profile = intensity_->bins / per_day;
  const int profile_day = absolute_day % days_in_profile;
  DemandIntensity day;
  day.bins = per_day;
  day.rows = intensity_->rows;
  day.cols = intensity_->cols;
  const auto cells = static_cast<std::size_t>(day.rows * day.cols);
  const auto first = intensity_->rates.begin() + static_cast<std::ptrdiff_t>(profile_day * per_day * cells);
  day.rates.assign(first, first + static_cast<std::ptrdiff_t>(per_day * cells));
  return generate_demand(day, per_day, *net_, config_.grid,
                         derive_seed(config_.demand_seed, 0xde3a, static_cast<std::uint64_t>(absolute_day)),
                         config_.bin_minutes);
}

std::vector<DemandEvent> City::sample_window_demand(int day, double t0, double t1, int sample) const {
  if (!intensity_) throw ConfigError("window resampling needs a demand intensity, not an event list");
  const int abs_day = absolute_day(day);
  const int per_day = bins_per_day();
  const int profile_day = abs_day % (intensity_->bins / per_day);
  DemandIntensity one;
  one.bins = per_day;
  one.rows = intensity_->rows;
  one.cols = intensity_->cols;
  const auto cells = static_cast<std::size_t>(one.rows * one.cols);
  const auto first = intensity_->rates.begin() + static_cast<std::ptrdiff_t>(profile_day * per_day * cells);
  one.rates.assign(first, first + static_cast<std::ptrdiff_t>(per_day * cells));
  // Zero every bin outside the window so only its requests are drawn.
  const int b0 = static_cast<int>(std::floor(t0 / config_.bin_minutes));
  const int b1 = static_cast<int>(std::ceil(t1 / config_.bin_minutes));
  for (int b = 0; b < per_day; ++b) {
    if (b >= b0 && b < b1) continue;
    std::fill_n(one.rates.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(b) * cells), cells, 0.0);
  }
  const auto seed = derive_seed(derive_seed(config_.demand_seed, 0x5a3, static_cast<std::uint64_t>(abs_day)),
                                static_cast<std::uint64_t>(b0), static_cast<std::uint64_t>(sample));
  auto events = generate_demand(one, per_day, *net_, config_.grid, seed, config_.bin_minutes);
  std::erase_if(events, [&](const DemandEvent& e) { return e.time_min < t0 || e.time_min >= t1; });
  return events;
}

WindowDemandSampler City::window_sampler() const {
  return [this](int day, double t0, double t1, int sample) { return sample_window_demand(day, t0, t1, sample); };
}

std::shared_ptr<const Scenario> City::day_scenario(int day) const { return day_scenario(day, config_.design); }

std::shared_ptr<const Scenario> City::day_scenario(int day, const SystemDesign& design) const {
  const int abs_day = absolute_day(day);
  const int per_day = bins_per_day();
  auto sc = std::make_shared<Scenario>();
  sc->net = net_;
  sc->routes = routes_;
  sc->grid = config_.grid;
  sc->demand = demand_for_absolute_day(abs_day);
  sc->predictor = predictor_;
  if (abs_day > 0 && intensity_) {
    const auto prev = bin_demand(demand_for_absolute_day(abs_day - 1), config_.grid, *net_, config_.bin_minutes,
                                 per_day);
    sc->warmup = prev.slice(per_day - kRecentWindowBins, kRecentWindowBins);
  }
  sc->design = design;
  sc->constants = constants_;
  const auto row = stations_.find(design.n_cs);
  if (row == stations_.end()) {
    throw ConfigError("station table has no entry for N_CS = " + std::to_string(design.n_cs));
  }
  sc->station_nodes = row->second;
  sc->soc_trigger = config_.soc_trigger;
  sc->bin_minutes = config_.bin_minutes;
  sc->start_slot = abs_day * per_day;
  sc->top_k = config_.top_k;
  sc->digest = config_.digest;
  sc->validate();
  return sc;
}

std::vector<double> City::node_weights() const {
  const auto& g = config_.grid;
  std::vector<double> per_cell(static_cast<std::size_t>(g.cell_count()), 0.0);
  if (intensity_) {
    const double days = static_cast<double>(intensity_->bins) / bins_per_day();
    for (int b = 0; b < intensity_->bins; ++b) {
      for (int cell = 0; cell < g.cell_count(); ++cell) per_cell[static_cast<std::size_t>(cell)] += intensity_->rate(b, cell) / days;
    }
  } else {
    for (const auto& e : fixed_events_) per_cell[static_cast<std::size_t>(node_to_cell(g, *net_, e.origin))] += 1.0;
  }
  std::vector<int> nodes_in_cell(per_cell.size(), 0);
  for (int n = 0; n < net_->node_count(); ++n) ++nodes_in_cell[static_cast<std::size_t>(node_to_cell(g, *net_, n))];
  std::vector<double> w(static_cast<std::size_t>(net_->node_count()));
  for (int n = 0; n < net_->node_count(); ++n) {
    const auto cell = static_cast<std::size_t>(node_to_cell(g, *net_, n));
    w[static_cast<std::size_t>(n)] = per_cell[cell] / nodes_in_cell[cell];
  }
  return w;
}

Strategy City::strategy() const {
  if (config_.strategy == "random") return Strategy::random_motion();
  return Strategy::relocation(params_, config_.mask);
}

ModelingParams City::params() const { return params_; }

}  // namespace saev
