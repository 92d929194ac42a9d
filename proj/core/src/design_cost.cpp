#include "saev/design_cost.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "saev/error.hpp"

namespace saev {

void SystemDesign::validate() const {
  if (n_cs < 1 || n_charger < 1 || n_saev < 1 || n_series < 1 || n_parallel < 1) {
    throw ConfigError("design: all counts must be >= 1");
  }
}

nlohmann::json SystemDesign::to_json() const {
  return {{"n_cs", n_cs},         {"n_charger", n_charger},   {"n_saev", n_saev},
          {"n_series", n_series}, {"n_parallel", n_parallel}, {"gear_ratio", gear_ratio}};
}

SystemDesign SystemDesign::from_json(const nlohmann::json& doc) {
  SystemDesign d;
  d.n_cs = doc.value("n_cs", d.n_cs);
  d.n_charger = doc.value("n_charger", d.n_charger);
  d.n_saev = doc.value("n_saev", d.n_saev);
  d.n_series = doc.value("n_series", d.n_series);
  d.n_parallel = doc.value("n_parallel", d.n_parallel);
  d.gear_ratio = doc.value("gear_ratio", d.gear_ratio);
  d.validate();
  return d;
}

void CostConstants::validate() const {
  for (double v : {battery_per_kwh, autonomous_module, motor, other, charger_install, charger_maintenance}) {
    if (!(v >= 0.0)) throw ConfigError("cost constants: prices must be >= 0");
  }
  if (!(cell_energy_kwh > 0.0) || !(eta_km_per_kwh > 0.0) || !(charge_power_kw > 0.0)) {
    throw ConfigError("cost constants: cell energy, efficiency and charge power must be > 0");
  }
}

nlohmann::json CostConstants::to_json() const {
  return {{"battery_per_kwh", battery_per_kwh},
          {"autonomous_module", autonomous_module},
          {"motor", motor},
          {"other", other},
          {"charger_install", charger_install},
          {"charger_maintenance", charger_maintenance},
          {"cell_energy_kwh", cell_energy_kwh},
          {"eta_km_per_kwh", eta_km_per_kwh},
          {"charge_power_kw", charge_power_kw}};
}

CostConstants CostConstants::from_json(const nlohmann::json& doc) {
  CostConstants k;
  k.battery_per_kwh = doc.value("battery_per_kwh", k.battery_per_kwh);
  k.autonomous_module = doc.value("autonomous_module", k.autonomous_module);
  k.motor = doc.value("motor", k.motor);
  k.other = doc.value("other", k.other);
  k.charger_install = doc.value("charger_install", k.charger_install);
  k.charger_maintenance = doc.value("charger_maintenance", k.charger_maintenance);
  k.cell_energy_kwh = doc.value("cell_energy_kwh", k.cell_energy_kwh);
  k.eta_km_per_kwh = doc.value("eta_km_per_kwh", k.eta_km_per_kwh);
  k.charge_power_kw = doc.value("charge_power_kw", k.charge_power_kw);
  k.validate();
  return k;
}

CostConstants CostConstants::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open constants file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("constants parse error: " + std::string(e.what()));
  }
  return from_json(doc);
}

nlohmann::json CostBreakdown::to_json() const {
  return {{"total", total}, {"fleet", fleet}, {"cs_install", cs_install}, {"cs_maintenance", cs_maintenance}};
}

double battery_capacity(int n_series, int n_parallel, const CostConstants& k) {
  if (n_series < 1 || n_parallel < 1) throw std::invalid_argument("battery_capacity: counts must be >= 1");
  return static_cast<double>(n_series) * static_cast<double>(n_parallel) * k.cell_energy_kwh;
}

VehiclePerf vehicle_perf(const SystemDesign& design, const CostConstants& k, double soc_trigger) {
  if (!(soc_trigger >= 0.0 && soc_trigger < 1.0)) throw std::invalid_argument("vehicle_perf: soc_trigger in [0,1)");
  VehiclePerf p;
  p.capacity_kwh = battery_capacity(design.n_series, design.n_parallel, k);
  p.range_km = k.eta_km_per_kwh * p.capacity_kwh;
  p.charging_time_min = (1.0 - soc_trigger) * p.capacity_kwh / k.charge_power_kw * 60.0;
  return p;
}

CostBreakdown system_cost(const SystemDesign& design, const CostConstants& k) {
  CostBreakdown c;
  const double capacity = battery_capacity(design.n_series, design.n_parallel, k);
  const double per_vehicle = k.battery_per_kwh * capacity + k.autonomous_module + k.motor + k.other;
  const double chargers = static_cast<double>(design.n_cs) * static_cast<double>(design.n_charger);
  c.fleet = static_cast<double>(design.n_saev) * per_vehicle;
  c.cs_install = chargers * k.charger_install;
  c.cs_maintenance = chargers * k.charger_maintenance;
  c.total = c.fleet + c.cs_install + c.cs_maintenance;
  return c;
}

// ---------------------------------------------------------------------------

std::vector<double> path_length_matrix(const RoadNetwork& net) {
  const int n = net.node_count();
  // Unit speed turns the time tree into a length tree.
  const std::vector<double> speeds(static_cast<std::size_t>(net.segment_count()), 60.0);
  std::vector<double> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    const auto tree = shortest_time_tree(net, speeds, s);
    std::copy(tree.km.begin(), tree.km.end(), out.begin() + static_cast<std::ptrdiff_t>(s) * n);
  }
  return out;
}

double pmedian_cost(std::span<const double> dist_km, int n, std::span<const double> weights,
                    std::span<const int> sites) {
  double cost = 0.0;
  for (int v = 0; v < n; ++v) {
    const double w = weights[static_cast<std::size_t>(v)];
    if (w == 0.0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (int s : sites) best = std::min(best, dist_km[static_cast<std::size_t>(v) * static_cast<std::size_t>(n) + static_cast<std::size_t>(s)]);
    cost += w * best;
  }
  return cost;
}

namespace {

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

void check_inputs(int n, std::span<const double> weights, int p, std::span<const int> candidates) {
  if (static_cast<int>(weights.size()) != n) throw ConfigError("pmedian: one weight per node required");
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("pmedian: weights must be >= 0");
  }
  if (p < 1) throw ConfigError("pmedian: p must be >= 1");
  if (p > static_cast<int>(candidates.size())) {
    throw ConfigError("pmedian: p = " + std::to_string(p) + " exceeds " + std::to_string(candidates.size()) +
                      " candidates");
  }
  for (int c : candidates) {
    if (c < 0 || c >= n) throw ConfigError("pmedian: candidate node out of range");
  }
}

PMedianResult exact(std::span<const double> dist, int n, std::span<const double> weights, int p,
                    const std::vector<int>& cand) {
  const std::size_t m = cand.size();
  const auto k = static_cast<std::size_t>(p);
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<int> sites(k);
  PMedianResult best;
  best.cost = std::numeric_limits<double>::infinity();
  while (true) {
    for (std::size_t i = 0; i < k; ++i) sites[i] = cand[idx[i]];
    const double c = pmedian_cost(dist, n, weights, sites);
    if (c < best.cost) {
      best.cost = c;
      best.sites = sites;
    }
    // Next combination in lexicographic order.
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == m - k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

PMedianResult interchange(std::span<const double> dist, int n, std::span<const double> weights, int p,
                          const std::vector<int>& cand) {
  std::vector<int> sites;
  // Greedy construction.
  for (int step = 0; step < p; ++step) {
    int pick = -1;
    double pick_cost = std::numeric_limits<double>::infinity();
    for (int c : cand) {
      if (std::find(sites.begin(), sites.end(), c) != sites.end()) continue;
      sites.push_back(c);
      const double cost = pmedian_cost(dist, n, weights, sites);
      sites.pop_back();
      if (cost < pick_cost) {
        pick_cost = cost;
        pick = c;
      }
    }
    sites.push_back(pick);
  }
  // Vertex substitution: apply the best improving swap until none remains.
  double current = pmedian_cost(dist, n, weights, sites);
  while (true) {
    double best_cost = current;
    std::size_t best_out = 0;
    int best_in = -1;
    for (std::size_t out = 0; out < sites.size(); ++out) {
      const int removed = sites[out];
      for (int c : cand) {
        if (std::find(sites.begin(), sites.end(), c) != sites.end()) continue;
        sites[out] = c;
        const double cost = pmedian_cost(dist, n, weights, sites);
        if (cost < best_cost - 1e-12 * std::max(1.0, std::abs(best_cost))) {
          best_cost = cost;
          best_out = out;
          best_in = c;
        }
      }
      sites[out] = removed;
    }
    if (best_in < 0) break;
    sites[best_out] = best_in;
    current = best_cost;
  }
  std::sort(sites.begin(), sites.end());
  return {sites, current};
}

}  // namespace

PMedianResult pmedian(std::span<const double> dist_km, int n, std::span<const double> weights, int p,
                      std::span<const int> candidates, PMedianMethod method, std::size_t exact_limit) {
  check_inputs(n, weights, p, candidates);
  std::vector<int> cand(candidates.begin(), candidates.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  if (p > static_cast<int>(cand.size())) throw ConfigError("pmedian: p exceeds distinct candidates");
  if (method == PMedianMethod::exact) {
    if (binomial(cand.size(), static_cast<std::size_t>(p)) > static_cast<double>(exact_limit)) {
      throw ConfigError("pmedian: exact enumeration exceeds the configured instance cap");
    }
    return exact(dist_km, n, weights, p, cand);
  }
  return interchange(dist_km, n, weights, p, cand);
}

PMedianResult pmedian(const RoadNetwork& net, std::span<const double> weights, int p, std::span<const int> candidates,
                      PMedianMethod method, std::size_t exact_limit) {
  const auto dist = path_length_matrix(net);
  return pmedian(dist, net.node_count(), weights, p, candidates, method, exact_limit);
}

StationTable station_plan(const RoadNetwork& net, std::span<const double> weights, std::span<const int> p_list,
                          std::span<const int> candidates, std::size_t exact_limit) {
  const auto dist = path_length_matrix(net);
  const int n = net.node_count();
  std::vector<int> cand(candidates.begin(), candidates.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  StationTable table;
  for (int p : p_list) {
    check_inputs(n, weights, p, cand);
    const bool small = binomial(cand.size(), static_cast<std::size_t>(p)) <= static_cast<double>(exact_limit);
    table[p] = pmedian(dist, n, weights, p, cand, small ? PMedianMethod::exact : PMedianMethod::interchange,
                       exact_limit)
                   .sites;
  }
  return table;
}

nlohmann::json station_table_to_json(const StationTable& table) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [p, sites] : table) doc[std::to_string(p)] = sites;
  return doc;
}

StationTable station_table_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("station plan: expected an object keyed by station count");
  StationTable table;
  for (const auto& [key, value] : doc.items()) {
    int p = 0;
    try {
      p = std::stoi(key);
    } catch (const std::exception&) {
      throw ConfigError("station plan: bad key '" + key + "'");
    }
    auto sites = value.get<std::vector<int>>();
    if (static_cast<int>(sites.size()) != p) {
      throw ConfigError("station plan: entry " + key + " lists " + std::to_string(sites.size()) + " nodes");
    }
    table[p] = std::move(sites);
  }
  return table;
}

}  // namespace saev
