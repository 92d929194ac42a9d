#include "saev/fleet_sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "saev/error.hpp"

namespace saev {

std::string to_string(VehicleState s) {
  switch (s) {
    case VehicleState::idle:
      return "idle";
    case VehicleState::relocating:
      return "relocating";
    case VehicleState::in_service:
      return "in_service";
    case VehicleState::to_charger:
      return "to_charger";
    case VehicleState::charging:
      return "charging";
  }
  return "?";
}

bool transition_allowed(VehicleState from, VehicleState to) {
  using S = VehicleState;
  switch (from) {
    case S::idle:
      return to == S::relocating || to == S::in_service || to == S::to_charger;
    case S::relocating:
      return to == S::idle || to == S::in_service;
    case S::in_service:
      return to == S::idle || to == S::to_charger;
    case S::to_charger:
      return to == S::charging;
    case S::charging:
      return to == S::idle;
  }
  return false;
}

void Scenario::validate() const {
  if (!net) throw ConfigError("scenario: missing network");
  if (!routes || routes->node_count() != net->node_count()) throw ConfigError("scenario: routing table mismatch");
  grid.validate();
  design.validate();
  constants.validate();
  if (station_nodes.empty()) throw ConfigError("scenario: no charging stations configured");
  for (int s : station_nodes) {
    if (s < 0 || s >= net->node_count()) throw ConfigError("scenario: station node out of range");
  }
  if (!(soc_trigger >= 0.0 && soc_trigger < 1.0)) throw ConfigError("scenario: soc_trigger must be in [0,1)");
  if (bin_minutes <= 0) throw ConfigError("scenario: bin_minutes must be > 0");
  for (std::size_t i = 0; i < demand.size(); ++i) {
    const auto& e = demand[i];
    if (e.origin < 0 || e.origin >= net->node_count() || e.destination < 0 || e.destination >= net->node_count()) {
      throw ConfigError("scenario: demand event references unknown node");
    }
    if (i > 0 && demand[i - 1].time_min > e.time_min) throw ConfigError("scenario: demand must be sorted by time");
  }
  if (warmup.bins() > 0 && warmup.cells() != grid.cell_count()) {
    throw ConfigError("scenario: warmup tensor grid mismatch");
  }
}

Strategy Strategy::random_motion() { return Strategy{}; }

Strategy Strategy::relocation(ModelingParams fixed, SelectionMask mask) {
  fixed.validate();
  return relocation(ParamsSource([p = std::move(fixed)](const FleetSnapshot&) { return p; }), mask);
}

Strategy Strategy::relocation(ParamsSource source, SelectionMask mask) {
  Strategy s;
  s.kind = Kind::relocation;
  s.params = std::move(source);
  s.mask = mask;
  return s;
}

Strategy Strategy::relocation_schedule(std::vector<ModelingParams> per_window, SelectionMask mask) {
  if (per_window.empty()) throw ConfigError("relocation schedule: no parameters");
  for (const auto& p : per_window) p.validate();
  return relocation(ParamsSource([ps = std::move(per_window)](const FleetSnapshot& snap) {
                      const auto i = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(0, snap.window_index)),
                                                             0, ps.size() - 1);
                      return ps[i];
                    }),
                    mask);
}

nlohmann::json SimulationReport::to_json(bool include_waits) const {
  nlohmann::json util;
  for (std::size_t s = 0; s < kVehicleStateCount; ++s) util[to_string(static_cast<VehicleState>(s))] = utilization[s];
  nlohmann::json doc = {{"duration_min", duration_min},
                        {"seed", seed},
                        {"config_digest", config_digest},
                        {"total_requests", total_requests},
                        {"served", served},
                        {"queued_at_end", queued_at_end},
                        {"mean_wait", mean_wait},
                        {"mean_wait_with_unserved", mean_wait_with_unserved},
                        {"max_wait", max_wait},
                        {"vehicle_km", vehicle_km},
                        {"charging_events", charging_events},
                        {"utilization", util}};
  if (include_waits) doc["waits"] = waits;
  return doc;
}

// ---------------------------------------------------------------------------

bool feasible_soc(double soc, double capacity_kwh, double range_km, double pickup_km, double service_km,
                  double to_station_km) {
  const double kwh_per_km = capacity_kwh / range_km;
  return soc * capacity_kwh >= (pickup_km + service_km + to_station_km) * kwh_per_km;
}

std::optional<int> assign_vehicle(std::span<const DispatchCandidate> candidates, double service_km,
                                  double to_station_km, double capacity_kwh, double range_km) {
  const DispatchCandidate* best = nullptr;
  for (const auto& c : candidates) {
    if (!feasible_soc(c.soc, capacity_kwh, range_km, c.pickup_km, service_km, to_station_km)) continue;
    if (best == nullptr || c.pickup_min < best->pickup_min ||
        (c.pickup_min == best->pickup_min && c.vehicle < best->vehicle)) {
      best = &c;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->vehicle;
}

ChargerChoice assign_charger(std::span<const int> station_nodes, std::span<const double> travel_min,
                             const std::vector<std::vector<double>>& free_at, double now,
                             std::span<const char> reachable) {
  if (station_nodes.empty()) throw ConfigError("assign_charger: no charging stations configured");
  const std::size_t m = station_nodes.size();
  bool any_reachable = false;
  for (std::size_t s = 0; s < m; ++s) any_reachable = any_reachable || reachable.empty() || reachable[s];
  const auto usable = [&](std::size_t s) { return !any_reachable || reachable.empty() || reachable[s]; };

  // Lexicographic key: (cost, station node, charger index).
  bool found = false;
  ChargerChoice best;
  double best_cost = 0.0;
  int best_node = 0;
  const auto consider = [&](std::size_t s, std::size_t c, double cost) {
    const int node = station_nodes[s];
    if (!found || cost < best_cost || (cost == best_cost && (node < best_node ||
                                                             (node == best_node && static_cast<int>(c) < best.charger)))) {
      found = true;
      best_cost = cost;
      best_node = node;
      best.station = static_cast<int>(s);
      best.charger = static_cast<int>(c);
    }
  };
  for (std::size_t s = 0; s < m; ++s) {
    if (!usable(s)) continue;
    for (std::size_t c = 0; c < free_at[s].size(); ++c) {
      if (free_at[s][c] <= now) consider(s, c, travel_min[s]);
    }
  }
  if (!found) {
    for (std::size_t s = 0; s < m; ++s) {
      if (!usable(s)) continue;
      for (std::size_t c = 0; c < free_at[s].size(); ++c) consider(s, c, travel_min[s] + (free_at[s][c] - now));
    }
  }
  if (!found) throw ConfigError("assign_charger: stations have no chargers");
  best.start = std::max(now + travel_min[static_cast<std::size_t>(best.station)],
                        free_at[static_cast<std::size_t>(best.station)][static_cast<std::size_t>(best.charger)]);
  return best;
}

// ---------------------------------------------------------------------------

struct Simulator::Derived {
  std::vector<int> anchors;
  std::vector<int> node_cell;
  std::vector<double> nearest_station_km;  // [hour][node]
  double capacity_kwh = 0.0;
  double range_km = 0.0;
};

Simulator::Simulator(std::shared_ptr<const Scenario> scenario, Strategy strategy, std::uint64_t seed, bool record_log)
    : scenario_(std::move(scenario)), strategy_(std::move(strategy)), seed_(seed), rng_(seed), record_log_(record_log) {
  if (!scenario_) throw ConfigError("simulator: null scenario");
  const auto& sc = *scenario_;
  sc.validate();
  const auto& net = *sc.net;
  const int n = net.node_count();

  auto d = std::make_shared<Derived>();
  d->anchors = cell_anchor_nodes(sc.grid, net);
  d->node_cell.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) d->node_cell[static_cast<std::size_t>(i)] = node_to_cell(sc.grid, net, i);
  d->nearest_station_km.assign(24 * static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int h = 0; h < 24; ++h) {
    for (int i = 0; i < n; ++i) {
      double& best = d->nearest_station_km[static_cast<std::size_t>(h) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)];
      for (int s : sc.station_nodes) best = std::min(best, sc.routes->km(h, i, s));
    }
  }
  const auto perf = vehicle_perf(sc.design, sc.constants, sc.soc_trigger);
  d->capacity_kwh = perf.capacity_kwh;
  d->range_km = perf.range_km;
  derived_ = std::move(d);

  free_at_.assign(sc.station_nodes.size(), std::vector<double>(static_cast<std::size_t>(sc.design.n_charger), 0.0));
  request_wait_.assign(sc.demand.size(), std::numeric_limits<double>::quiet_NaN());
  dest_counts_.assign(static_cast<std::size_t>(sc.grid.cell_count()), 0);
  forecast_.expected.assign(static_cast<std::size_t>(sc.grid.cell_count()), 0.0);

  // Initial fleet: uniform nodes, SOC uniform in [0.5, 1], all idle.
  vehicles_.resize(static_cast<std::size_t>(sc.design.n_saev));
  for (int i = 0; i < sc.design.n_saev; ++i) {
    auto& v = vehicles_[static_cast<std::size_t>(i)];
    v.id = i;
    v.node = static_cast<int>(rng_.index(static_cast<std::uint64_t>(n)));
    v.soc = rng_.uniform(0.5, 1.0);
  }
  push(0.0, 1, -1, 0);
}

void Simulator::replace_pending_demand(std::vector<DemandEvent> future) {
  const int n = scenario_->net->node_count();
  for (const auto& e : future) {
    if (!(e.time_min >= now_)) throw std::invalid_argument("replace_pending_demand: request before current time");
    if (e.origin < 0 || e.origin >= n || e.destination < 0 || e.destination >= n) {
      throw std::invalid_argument("replace_pending_demand: unknown node");
    }
  }
  std::stable_sort(future.begin(), future.end(),
                   [](const DemandEvent& a, const DemandEvent& b) { return a.time_min < b.time_min; });
  auto sc = std::make_shared<Scenario>(*scenario_);
  sc->demand.resize(next_request_);
  sc->demand.insert(sc->demand.end(), future.begin(), future.end());
  scenario_ = std::move(sc);
  request_wait_.resize(scenario_->demand.size(), std::numeric_limits<double>::quiet_NaN());
}

int Simulator::hour_at(double t) const {
  const double abs_min = static_cast<double>(scenario_->start_slot) * scenario_->bin_minutes + t;
  const auto h = static_cast<long long>(std::floor(abs_min / 60.0));
  return static_cast<int>(((h % 24) + 24) % 24);
}

double Simulator::energy_per_km_frac() const { return 1.0 / derived_->range_km; }

double Simulator::nearest_station_km(int hour, int node) const {
  return derived_->nearest_station_km[static_cast<std::size_t>(hour) * static_cast<std::size_t>(scenario_->net->node_count()) +
                                      static_cast<std::size_t>(node)];
}

Simulator::Position Simulator::position(const Vehicle& v, double t) const {
  if (v.state != VehicleState::relocating) return {v.node, 0.0, 0.0, 0.0};
  const auto& leg = v.leg;
  const double elapsed = t - leg.depart;
  if (leg.lead_min > 0.0 && elapsed < leg.lead_min) {
    const double rem = leg.lead_min - elapsed;
    const double rem_km = leg.lead_km * (rem / leg.lead_min);
    return {leg.nodes.front(), rem, rem_km, leg.lead_km - rem_km};
  }
  const double e = elapsed - leg.lead_min;
  const auto& cm = leg.cum_min;
  if (e >= cm.back()) return {leg.nodes.back(), 0.0, 0.0, leg.total_km()};
  // First node whose cumulative time is strictly after e.
  const auto it = std::upper_bound(cm.begin(), cm.end(), e);
  const auto k = static_cast<std::size_t>(it - cm.begin());
  const double edge_min = cm[k] - cm[k - 1];
  const double edge_km = leg.cum_km[k] - leg.cum_km[k - 1];
  const double rem = cm[k] - e;
  const double rem_km = edge_min > 0.0 ? edge_km * (rem / edge_min) : 0.0;
  return {leg.nodes[k], rem, rem_km, leg.lead_km + leg.cum_km[k] - rem_km};
}

double Simulator::soc_now(const Vehicle& v, double t) const {
  if (v.state != VehicleState::relocating) return v.soc;
  return std::max(0.0, v.soc - position(v, t).traveled_km * energy_per_km_frac());
}

void Simulator::push(double time, int priority, int vehicle, std::uint64_t token) {
  heap_.push_back({time, priority, seq_++, vehicle, token});
  std::push_heap(heap_.begin(), heap_.end(), Later{});
}

void Simulator::transition(Vehicle& v, VehicleState to) {
  if (!transition_allowed(v.state, to)) {
    throw std::logic_error("simulator: illegal transition " + to_string(v.state) + " -> " + to_string(to));
  }
  state_time_[static_cast<std::size_t>(v.state)] += now_ - v.state_since;
  if (record_log_) {
    log_.push_back({now_, "transition", v.id, v.node, v.state, to, v.soc, to_string(v.state) + "->" + to_string(to)});
  }
  v.state = to;
  v.state_since = now_;
}

void Simulator::consume_km(Vehicle& v, double km) {
  vehicle_km_ += km;
  v.soc = std::max(0.0, v.soc - km * energy_per_km_frac());
}

void Simulator::count_dest(int cell, int delta) {
  if (cell >= 0) dest_counts_[static_cast<std::size_t>(cell)] += delta;
}

void Simulator::advance_until(double t) {
  const auto& demand = scenario_->demand;
  while (true) {
    const double t_heap = heap_.empty() ? std::numeric_limits<double>::infinity() : heap_.front().time;
    double t_req = std::numeric_limits<double>::infinity();
    if (next_request_ < demand.size() && demand[next_request_].time_min < cutoff_) {
      t_req = demand[next_request_].time_min;
    }
    const double next = std::min(t_heap, t_req);
    if (!(next < t)) break;
    if (next < now_) throw std::logic_error("simulator: event time went backwards");
    now_ = next;
    if (t_heap <= t_req) {
      std::pop_heap(heap_.begin(), heap_.end(), Later{});
      const Event ev = heap_.back();
      heap_.pop_back();
      if (ev.priority == 1) {
        on_refresh();
      } else {
        auto& v = vehicles_[static_cast<std::size_t>(ev.vehicle)];
        if (v.token == ev.token) on_vehicle_event(v);
      }
    } else {
      on_request(next_request_++);
    }
  }
  now_ = std::max(now_, t);
}

void Simulator::on_request(std::size_t index) {
  const auto& r = scenario_->demand[index];
  const auto bin = static_cast<std::size_t>(std::floor(r.time_min / scenario_->bin_minutes));
  if (observed_.size() <= bin) {
    observed_.resize(bin + 1, std::vector<std::int64_t>(static_cast<std::size_t>(scenario_->grid.cell_count()), 0));
  }
  ++observed_[bin][static_cast<std::size_t>(derived_->node_cell[static_cast<std::size_t>(r.origin)])];
  if (record_log_) {
    log_.push_back({now_, "request", -1, r.origin, {}, {}, 0.0,
                    "id=" + std::to_string(index) + " dest=" + std::to_string(r.destination)});
  }
  if (!try_dispatch(index)) {
    queue_.push_back(index);
    charge_stranded();
  }
}

bool Simulator::try_dispatch(std::size_t index) {
  const auto& r = scenario_->demand[index];
  const auto& routes = *scenario_->routes;
  const int h = hour_at(now_);
  const double service_km = routes.km(h, r.origin, r.destination);
  const double service_min = routes.minutes(h, r.origin, r.destination);
  const double to_station_km = nearest_station_km(h, r.destination);

  std::vector<DispatchCandidate> cands;
  cands.reserve(vehicles_.size());
  for (const auto& v : vehicles_) {
    if (v.state == VehicleState::idle) {
      cands.push_back({v.id, routes.minutes(h, v.node, r.origin), routes.km(h, v.node, r.origin), v.soc});
    } else if (v.state == VehicleState::relocating) {
      const auto pos = position(v, now_);
      cands.push_back({v.id, pos.remaining_min + routes.minutes(h, pos.forward_node, r.origin),
                       pos.remaining_km + routes.km(h, pos.forward_node, r.origin),
                       std::max(0.0, v.soc - pos.traveled_km * energy_per_km_frac())});
    }
  }
  const auto chosen = assign_vehicle(cands, service_km, to_station_km, derived_->capacity_kwh, derived_->range_km);
  if (!chosen) return false;
  const auto it = std::find_if(cands.begin(), cands.end(), [&](const DispatchCandidate& c) { return c.vehicle == *chosen; });
  auto& v = vehicles_[static_cast<std::size_t>(*chosen)];
  if (v.state == VehicleState::relocating) {
    const auto pos = position(v, now_);
    consume_km(v, pos.traveled_km);
    v.node = pos.forward_node;
  }
  count_dest(v.dest_cell, -1);
  v.dest_cell = -1;
  transition(v, VehicleState::in_service);
  const double wait = now_ + it->pickup_min - r.time_min;
  request_wait_[index] = wait;
  ++served_;
  v.busy_until = now_ + it->pickup_min + service_min;
  v.pending_km = it->pickup_km + service_km;
  v.node = r.destination;
  v.leg = {};
  ++v.token;
  push(v.busy_until, 0, v.id, v.token);
  if (record_log_) {
    log_.push_back({now_, "assign", v.id, r.origin, VehicleState::in_service, VehicleState::in_service, v.soc,
                    "request=" + std::to_string(index) + " wait=" + std::to_string(wait)});
  }
  return true;
}

void Simulator::retry_queue() {
  if (queue_.empty()) return;
  std::vector<std::size_t> still;
  for (const auto idx : queue_) {
    if (!try_dispatch(idx)) still.push_back(idx);
  }
  queue_ = std::move(still);
  charge_stranded();
}

// An idle vehicle above the trigger can still be too low for the oldest
// waiting trip. Left alone it would sit there for the rest of the run.
void Simulator::charge_stranded() {
  if (queue_.empty()) return;
  const auto& r = scenario_->demand[queue_.front()];
  const auto& routes = *scenario_->routes;
  const int h = hour_at(now_);
  const double service_km = routes.km(h, r.origin, r.destination);
  const double to_station_km = nearest_station_km(h, r.destination);
  for (auto& v : vehicles_) {
    if (v.state != VehicleState::idle || v.soc >= 1.0) continue;
    if (feasible_soc(v.soc, derived_->capacity_kwh, derived_->range_km, routes.km(h, v.node, r.origin), service_km,
                     to_station_km)) {
      continue;
    }
    count_dest(v.dest_cell, -1);
    v.dest_cell = -1;
    send_to_charger(v);
  }
}

void Simulator::on_vehicle_event(Vehicle& v) {
  switch (v.state) {
    case VehicleState::relocating: {
      consume_km(v, v.leg.total_km());
      v.node = v.leg.nodes.back();
      v.leg = {};
      ++v.token;
      transition(v, VehicleState::idle);
      on_idle(v);
      break;
    }
    case VehicleState::in_service: {
      consume_km(v, v.pending_km);
      v.pending_km = 0.0;
      if (v.soc <= scenario_->soc_trigger) {
        send_to_charger(v);
      } else {
        transition(v, VehicleState::idle);
        v.busy_until = now_;
        on_idle(v);
      }
      break;
    }
    case VehicleState::to_charger: {
      if (!v.at_station) {
        consume_km(v, v.pending_km);
        v.pending_km = 0.0;
        v.at_station = true;
        v.node = scenario_->station_nodes[static_cast<std::size_t>(v.station)];
        if (v.charge_start > now_) {
          push(v.charge_start, 0, v.id, v.token);
          break;
        }
      }
      transition(v, VehicleState::charging);
      push(v.charge_end, 0, v.id, v.token);
      break;
    }
    case VehicleState::charging: {
      v.soc = 1.0;
      v.at_station = false;
      v.station = v.charger = -1;
      transition(v, VehicleState::idle);
      v.busy_until = now_;
      on_idle(v);
      break;
    }
    case VehicleState::idle:
      break;
  }
}

void Simulator::on_idle(Vehicle& v) {
  if (v.soc <= scenario_->soc_trigger) {
    count_dest(v.dest_cell, -1);
    v.dest_cell = -1;
    send_to_charger(v);
    return;
  }
  retry_queue();
  if (v.state == VehicleState::idle && window_ >= 0) decide_relocation(v);
}

void Simulator::send_to_charger(Vehicle& v) {
  const auto& sc = *scenario_;
  const int h = hour_at(now_);
  const std::size_t m = sc.station_nodes.size();
  std::vector<double> travel(m);
  std::vector<double> dist(m);
  std::vector<char> reachable(m);
  for (std::size_t s = 0; s < m; ++s) {
    travel[s] = sc.routes->minutes(h, v.node, sc.station_nodes[s]);
    dist[s] = sc.routes->km(h, v.node, sc.station_nodes[s]);
    reachable[s] = dist[s] * energy_per_km_frac() <= v.soc ? 1 : 0;
  }
  const auto choice = assign_charger(sc.station_nodes, travel, free_at_, now_, reachable);
  const auto s = static_cast<std::size_t>(choice.station);
  const double arrival_soc = std::max(0.0, v.soc - dist[s] * energy_per_km_frac());
  const double duration = (1.0 - arrival_soc) * derived_->capacity_kwh / sc.constants.charge_power_kw * 60.0;
  transition(v, VehicleState::to_charger);
  v.station = choice.station;
  v.charger = choice.charger;
  v.charge_start = choice.start;
  v.charge_end = choice.start + duration;
  v.busy_until = v.charge_end;
  v.pending_km = dist[s];
  v.at_station = false;
  v.leg = {};
  ++v.token;
  free_at_[s][static_cast<std::size_t>(choice.charger)] = v.charge_end;
  sessions_.push_back({v.id, choice.station, choice.charger, v.charge_start, v.charge_end});
  if (record_log_) {
    log_.push_back({now_, "charge", v.id, sc.station_nodes[s], VehicleState::to_charger, VehicleState::charging, v.soc,
                    "station=" + std::to_string(choice.station) + " charger=" + std::to_string(choice.charger) +
                        " start=" + std::to_string(v.charge_start) + " end=" + std::to_string(v.charge_end)});
  }
  push(now_ + travel[s], 0, v.id, v.token);
}

void Simulator::start_leg(Vehicle& v, int target, VehicleState state) {
  const auto& routes = *scenario_->routes;
  const int h = hour_at(now_);
  Leg leg;
  leg.depart = now_;
  int from = v.node;
  if (v.state == VehicleState::relocating) {
    const auto pos = position(v, now_);
    consume_km(v, pos.traveled_km);
    from = pos.forward_node;
    leg.lead_min = pos.remaining_min;
    leg.lead_km = pos.remaining_km;
    v.node = from;
  }
  if (from == target && leg.lead_min <= 0.0) {
    // Already there: park.
    v.leg = {};
    ++v.token;
    if (v.state == VehicleState::relocating) transition(v, VehicleState::idle);
    return;
  }
  auto path = routes.path(h, from, target);
  leg.nodes = std::move(path.nodes);
  leg.cum_min = std::move(path.cum_minutes);
  leg.cum_km = std::move(path.cum_km);
  v.leg = std::move(leg);
  ++v.token;
  if (v.state != state) transition(v, state);
  push(now_ + v.leg.total_min(), 0, v.id, v.token);
}

void Simulator::stop_motion(Vehicle& v) {
  if (v.state != VehicleState::relocating) return;
  start_leg(v, position(v, now_).forward_node, VehicleState::relocating);
}

void Simulator::decide_relocation(Vehicle& v) {
  const auto& sc = *scenario_;
  const auto& routes = *sc.routes;
  const auto& d = *derived_;
  const int h = hour_at(now_);
  const auto pos = position(v, now_);
  const int ref = pos.forward_node;
  const double soc = std::max(0.0, v.soc - pos.traveled_km * energy_per_km_frac());

  count_dest(v.dest_cell, -1);
  v.dest_cell = -1;

  int target = ref;
  int target_cell = d.node_cell[static_cast<std::size_t>(ref)];
  if (strategy_.kind == Strategy::Kind::random_motion) {
    target = static_cast<int>(rng_.index(static_cast<std::uint64_t>(sc.net->node_count())));
    target_cell = d.node_cell[static_cast<std::size_t>(target)];
  } else if (!candidates_.empty()) {
    std::vector<double> dist(candidates_.size());
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
      const int anchor = d.anchors[static_cast<std::size_t>(candidates_[i])];
      dist[i] = pos.remaining_km + routes.km(h, ref, anchor);
    }
    const auto scores = selection_scores(candidates_, dist, forecast_, dest_counts_, params_, strategy_.mask);
    if (const auto cell = select_destination(scores)) {
      target_cell = *cell;
      target = d.anchors[static_cast<std::size_t>(*cell)];
    }
  }
  // Keep enough charge to reach a station from the destination.
  const double need_km = pos.remaining_km + routes.km(h, ref, target) + nearest_station_km(h, target);
  if (need_km * energy_per_km_frac() > soc) {
    target = ref;
    target_cell = d.node_cell[static_cast<std::size_t>(ref)];
  }
  if (target == ref) {
    stop_motion(v);
  } else {
    start_leg(v, target, VehicleState::relocating);
  }
  v.dest_cell = target_cell;
  count_dest(target_cell, +1);
}

namespace {

DemandForecast zero_forecast(int cells) {
  DemandForecast f;
  f.expected.assign(static_cast<std::size_t>(cells), 0.0);
  return f;
}

}  // namespace

DemandForecast Simulator::forecast_for(int window) const {
  const auto& sc = *scenario_;
  const int cells = sc.grid.cell_count();
  if (!sc.predictor) return zero_forecast(cells);
  DemandTensor recent(sc.grid, sc.bin_minutes, kRecentWindowBins);
  for (int b = 0; b < kRecentWindowBins; ++b) {
    const int src = window - kRecentWindowBins + b;
    for (int c = 0; c < cells; ++c) {
      std::int64_t v = 0;
      if (src >= 0) {
        if (static_cast<std::size_t>(src) < observed_.size()) {
          v = observed_[static_cast<std::size_t>(src)][static_cast<std::size_t>(c)];
        }
      } else if (sc.warmup.bins() > 0) {
        const int wb = sc.warmup.bins() + src;
        if (wb >= 0) v = sc.warmup.at(wb, c);
      }
      recent.at(b, c) = v;
    }
  }
  return sc.predictor->forecast(recent, sc.start_slot + window);
}

void Simulator::on_refresh() {
  const auto& sc = *scenario_;
  window_ = static_cast<int>(std::llround(now_ / sc.bin_minutes));

  forecast_ = forecast_for(window_);
  candidates_ = candidate_cells(forecast_, derived_->anchors, sc.top_k);
  if (strategy_.kind == Strategy::Kind::relocation) {
    params_ = strategy_.params(snapshot());
    params_.validate();
  }
  if (record_log_) {
    log_.push_back({now_, "refresh", -1, -1, {}, {}, 0.0,
                    "window=" + std::to_string(window_) + " forecast=" + std::to_string(forecast_.total())});
  }

  std::fill(dest_counts_.begin(), dest_counts_.end(), 0);
  for (auto& v : vehicles_) {
    if (v.state == VehicleState::idle || v.state == VehicleState::relocating) v.dest_cell = -1;
  }
  for (auto& v : vehicles_) {
    if (v.state == VehicleState::idle && v.soc <= sc.soc_trigger) {
      send_to_charger(v);
    } else if (v.state == VehicleState::idle || v.state == VehicleState::relocating) {
      decide_relocation(v);
    }
  }
  push(static_cast<double>(window_ + 1) * sc.bin_minutes, 1, -1, 0);
}

FleetSnapshot Simulator::snapshot() const {
  const auto& sc = *scenario_;
  FleetSnapshot s;
  s.sim_time = now_;
  s.window_index = static_cast<int>(std::floor(now_ / sc.bin_minutes + 1e-9));
  s.slot = sc.start_slot + s.window_index;
  s.bins_per_day = 24 * 60 / sc.bin_minutes;
  s.grid = sc.grid;
  for (const auto& v : vehicles_) {
    VehicleView view;
    view.id = v.id;
    view.state = v.state;
    view.soc = soc_now(v, now_);
    switch (v.state) {
      case VehicleState::idle:
        view.node = v.node;
        view.busy_until = now_;
        break;
      case VehicleState::relocating:
        view.node = position(v, now_).forward_node;
        view.busy_until = now_;
        break;
      case VehicleState::in_service:
        view.node = v.node;
        view.busy_until = v.busy_until;
        break;
      case VehicleState::to_charger:
      case VehicleState::charging:
        view.node = sc.station_nodes[static_cast<std::size_t>(v.station)];
        view.busy_until = v.charge_end;
        break;
    }
    s.vehicles.push_back(view);
  }
  for (std::size_t st = 0; st < sc.station_nodes.size(); ++st) {
    ChargingStationState cs;
    cs.station_node = sc.station_nodes[st];
    for (double f : free_at_[st]) cs.chargers.push_back({f > now_, f});
    s.stations.push_back(std::move(cs));
  }
  if (window_ == s.window_index) {
    s.demand_window = forecast_;
  } else {
    // Between refreshes: forecast the window about to start.
    s.demand_window = forecast_for(s.window_index);
  }
  return s;
}

SimulationReport Simulator::report() const {
  const auto& sc = *scenario_;
  SimulationReport r;
  r.duration_min = now_;
  r.seed = seed_;
  r.config_digest = sc.digest;
  r.total_requests = static_cast<std::int64_t>(next_request_);
  double sum = 0.0;
  double sum_all = 0.0;
  for (std::size_t i = 0; i < next_request_; ++i) {
    const double w = request_wait_[i];
    if (std::isnan(w)) {
      sum_all += now_ - sc.demand[i].time_min;
      continue;
    }
    r.waits.push_back(w);
    sum += w;
    sum_all += w;
    r.max_wait = std::max(r.max_wait, w);
  }
  r.served = static_cast<std::int64_t>(r.waits.size());
  r.queued_at_end = r.total_requests - r.served;
  r.mean_wait = r.served > 0 ? sum / static_cast<double>(r.served) : 0.0;
  r.mean_wait_with_unserved = r.total_requests > 0 ? sum_all / static_cast<double>(r.total_requests) : 0.0;
  r.vehicle_km = vehicle_km_;
  r.charging_events = static_cast<std::int64_t>(sessions_.size());
  auto t = state_time_;
  for (const auto& v : vehicles_) t[static_cast<std::size_t>(v.state)] += now_ - v.state_since;
  const double fleet_time = now_ * static_cast<double>(vehicles_.size());
  for (std::size_t s = 0; s < kVehicleStateCount; ++s) r.utilization[s] = fleet_time > 0.0 ? t[s] / fleet_time : 0.0;
  return r;
}

double Simulator::window_wait(double t0, double t1) const {
  const auto& demand = scenario_->demand;
  double sum = 0.0;
  std::int64_t count = 0;
  const auto lo = std::lower_bound(demand.begin(), demand.end(), t0,
                                   [](const DemandEvent& e, double t) { return e.time_min < t; });
  for (auto it = lo; it != demand.end() && it->time_min < t1; ++it) {
    const auto i = static_cast<std::size_t>(it - demand.begin());
    if (i >= next_request_) break;
    const double w = request_wait_[i];
    sum += std::isnan(w) ? now_ - it->time_min : w;
    ++count;
  }
  return count > 0 ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

std::int64_t Simulator::requests_between(double t0, double t1) const {
  const auto& demand = scenario_->demand;
  const auto lo = std::lower_bound(demand.begin(), demand.end(), t0,
                                   [](const DemandEvent& e, double t) { return e.time_min < t; });
  const auto hi = std::lower_bound(demand.begin(), demand.end(), t1,
                                   [](const DemandEvent& e, double t) { return e.time_min < t; });
  return static_cast<std::int64_t>(hi - lo);
}

SimulationReport run_simulation(std::shared_ptr<const Scenario> scenario, const Strategy& strategy,
                                double duration_min, std::uint64_t seed) {
  Simulator sim(std::move(scenario), strategy, seed);
  sim.set_request_cutoff(duration_min);
  sim.advance_until(duration_min);
  return sim.report();
}

void write_event_log_csv(std::ostream& out, std::span<const SimEvent> events) {
  out << "time,event_type,vehicle,node,detail\n";
  for (const auto& e : events) {
    out << nlohmann::json(e.time).dump() << ',' << e.type << ',' << e.vehicle << ',' << e.node << ',' << e.detail
        << '\n';
  }
}

}  // namespace saev
