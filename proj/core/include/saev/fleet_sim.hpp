#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "saev/demand.hpp"
#include "saev/design_cost.hpp"
#include "saev/relocation.hpp"
#include "saev/rng.hpp"
#include "saev/road_net.hpp"

namespace saev {

enum class VehicleState { idle, relocating, in_service, to_charger, charging };
inline constexpr std::size_t kVehicleStateCount = 5;

std::string to_string(VehicleState s);
// Edges of the vehicle state machine.
bool transition_allowed(VehicleState from, VehicleState to);

struct VehicleView {
  int id = 0;
  VehicleState state = VehicleState::idle;
  int node = 0;             // current node, or the next node reached when en route
  double soc = 1.0;         // fraction of capacity
  double busy_until = 0.0;  // end of service or charging; sim_time when available
};

struct ChargerView {
  bool occupied = false;
  double free_at = 0.0;
};

struct ChargingStationState {
  int station_node = 0;
  std::vector<ChargerView> chargers;
};

// Fleet and demand conditions at one instant. demand_window holds the
// forecast for the 30-min window that starts at sim_time.
struct FleetSnapshot {
  double sim_time = 0.0;
  int window_index = 0;
  int slot = 0;  // absolute bin index (day * bins_per_day + bin_of_day)
  int bins_per_day = 48;
  GridSpec grid;
  std::vector<VehicleView> vehicles;
  std::vector<ChargingStationState> stations;
  DemandForecast demand_window;
};

// Everything a run needs besides strategy and seed. Shared read-only
// between runs.
struct Scenario {
  std::shared_ptr<const RoadNetwork> net;
  std::shared_ptr<const RoutingTable> routes;
  GridSpec grid;
  std::vector<DemandEvent> demand;  // sorted by time
  std::shared_ptr<const DemandPredictor> predictor;
  DemandTensor warmup;  // up to 8 bins preceding t = 0; empty means none
  SystemDesign design;
  CostConstants constants;
  std::vector<int> station_nodes;
  double soc_trigger = 0.15;
  int bin_minutes = 30;
  int start_slot = 0;  // absolute bin index at t = 0
  int top_k = 0;       // candidate cap; 0 = all cells with positive forecast
  std::string digest;  // identifies the configuration in reports

  void validate() const;
};

using ParamsSource = std::function<ModelingParams(const FleetSnapshot&)>;

struct Strategy {
  enum class Kind { random_motion, relocation };

  Kind kind = Kind::random_motion;
  ParamsSource params;
  SelectionMask mask;

  static Strategy random_motion();
  static Strategy relocation(ModelingParams fixed, SelectionMask mask = {});
  static Strategy relocation(ParamsSource source, SelectionMask mask = {});
  // Parameters switch at each window; the last entry repeats past the end.
  static Strategy relocation_schedule(std::vector<ModelingParams> per_window, SelectionMask mask = {});
};

struct SimEvent {
  double time = 0.0;
  std::string type;  // request | assign | transition | charge | refresh
  int vehicle = -1;
  int node = -1;
  VehicleState from = VehicleState::idle;
  VehicleState to = VehicleState::idle;
  double soc = 0.0;
  std::string detail;
};

struct ChargerSession {
  int vehicle = 0;
  int station = 0;  // index into station list
  int charger = 0;
  double start = 0.0;
  double end = 0.0;
};

struct SimulationReport {
  double duration_min = 0.0;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::int64_t total_requests = 0;
  std::int64_t served = 0;
  std::int64_t queued_at_end = 0;
  double mean_wait = 0.0;                // over served requests
  double mean_wait_with_unserved = 0.0;  // unserved count as (end - request time)
  double max_wait = 0.0;
  std::vector<double> waits;  // served requests, in request order
  double vehicle_km = 0.0;
  std::int64_t charging_events = 0;
  std::array<double, kVehicleStateCount> utilization{};  // share of fleet time per state

  nlohmann::json to_json(bool include_waits = false) const;
};

// --- dispatch and charging rules -------------------------------------------

// Battery can cover pickup + service + reaching the nearest station after
// drop-off. Boundary counts as feasible.
bool feasible_soc(double soc, double capacity_kwh, double range_km, double pickup_km, double service_km,
                  double to_station_km);

struct DispatchCandidate {
  int vehicle = 0;
  double pickup_min = 0.0;
  double pickup_km = 0.0;
  double soc = 1.0;
};

// Feasible candidate with minimum pickup time (lowest id on ties).
std::optional<int> assign_vehicle(std::span<const DispatchCandidate> candidates, double service_km,
                                  double to_station_km, double capacity_kwh, double range_km);

struct ChargerChoice {
  int station = 0;
  int charger = 0;
  double start = 0.0;  // max(arrival, free_at)
};

// Any free charger: the one at the reachable station with least travel time.
// All busy: minimize travel + remaining occupancy. Ties go to the lower
// station node id, then the lower charger index. Stations flagged
// unreachable are skipped unless none is reachable.
ChargerChoice assign_charger(std::span<const int> station_nodes, std::span<const double> travel_min,
                             const std::vector<std::vector<double>>& free_at, double now,
                             std::span<const char> reachable = {});

// --- simulator --------------------------------------------------------------

class Simulator {
 public:
  Simulator(std::shared_ptr<const Scenario> scenario, Strategy strategy, std::uint64_t seed, bool record_log = false);

  // Processes every event strictly earlier than t.
  void advance_until(double t);
  double now() const { return now_; }

  void set_strategy(Strategy strategy) { strategy_ = std::move(strategy); }
  // Requests at or after t are never admitted.
  void set_request_cutoff(double t) { cutoff_ = t; }
  // Replaces every request not yet admitted with `future` (times >= now).
  // Admitted requests and all fleet state are kept.
  void replace_pending_demand(std::vector<DemandEvent> future);

  FleetSnapshot snapshot() const;
  SimulationReport report() const;

  // Mean wait of requests with time in [t0, t1); unserved ones count as
  // (now - request time). NaN when the range has no requests.
  double window_wait(double t0, double t1) const;
  std::int64_t requests_between(double t0, double t1) const;

  const std::vector<SimEvent>& log() const { return log_; }
  const std::vector<ChargerSession>& sessions() const { return sessions_; }
  const ModelingParams& current_params() const { return params_; }

 private:
  struct Derived;
  struct Leg {
    std::vector<int> nodes;
    std::vector<double> cum_min;
    std::vector<double> cum_km;
    double depart = 0.0;
    double lead_min = 0.0;  // partial edge before nodes[0]
    double lead_km = 0.0;
    double total_min() const { return lead_min + (cum_min.empty() ? 0.0 : cum_min.back()); }
    double total_km() const { return lead_km + (cum_km.empty() ? 0.0 : cum_km.back()); }
  };
  struct Position {
    int forward_node;
    double remaining_min;
    double remaining_km;
    double traveled_km;
  };
  struct Vehicle {
    int id = 0;
    VehicleState state = VehicleState::idle;
    int node = 0;
    double soc = 1.0;
    double busy_until = 0.0;
    Leg leg;
    int dest_cell = -1;
    std::uint64_t token = 0;
    double pending_km = 0.0;  // service distance consumed at drop-off
    int station = -1;
    int charger = -1;
    double charge_start = 0.0;
    double charge_end = 0.0;
    bool at_station = false;
    double state_since = 0.0;
  };
  struct Event {
    double time;
    int priority;  // 0 vehicle, 1 refresh
    std::uint64_t seq;
    int vehicle;
    std::uint64_t token;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.priority != b.priority) return a.priority > b.priority;
      return a.seq > b.seq;
    }
  };

  int hour_at(double t) const;
  double energy_per_km_frac() const;  // SOC fraction per km
  Position position(const Vehicle& v, double t) const;
  double soc_now(const Vehicle& v, double t) const;
  double nearest_station_km(int hour, int node) const;
  DemandForecast forecast_for(int window) const;

  void push(double time, int priority, int vehicle, std::uint64_t token);
  void transition(Vehicle& v, VehicleState to);
  void consume_km(Vehicle& v, double km);

  void on_request(std::size_t index);
  bool try_dispatch(std::size_t request_index);
  void on_vehicle_event(Vehicle& v);
  void on_refresh();
  void on_idle(Vehicle& v);
  void retry_queue();
  void charge_stranded();
  void send_to_charger(Vehicle& v);
  void decide_relocation(Vehicle& v);
  void start_leg(Vehicle& v, int target, VehicleState state);
  void stop_motion(Vehicle& v);
  void count_dest(int cell, int delta);

  std::shared_ptr<const Scenario> scenario_;
  std::shared_ptr<const Derived> derived_;
  Strategy strategy_;
  std::uint64_t seed_;
  Rng rng_;
  bool record_log_;

  double now_ = 0.0;
  double cutoff_ = std::numeric_limits<double>::infinity();
  std::uint64_t seq_ = 0;
  std::vector<Event> heap_;
  std::size_t next_request_ = 0;
  std::vector<Vehicle> vehicles_;
  std::vector<std::vector<double>> free_at_;  // [station][charger]
  std::vector<std::size_t> queue_;            // request indices, FIFO
  std::vector<double> request_wait_;          // NaN until assigned
  std::vector<int> dest_counts_;              // idle/relocating vehicles per target cell
  std::vector<std::vector<std::int64_t>> observed_;  // [bin][cell]

  int window_ = -1;
  DemandForecast forecast_;
  std::vector<int> candidates_;
  ModelingParams params_;

  double vehicle_km_ = 0.0;
  std::int64_t served_ = 0;
  std::array<double, kVehicleStateCount> state_time_{};
  std::vector<SimEvent> log_;
  std::vector<ChargerSession> sessions_;
};

SimulationReport run_simulation(std::shared_ptr<const Scenario> scenario, const Strategy& strategy,
                                double duration_min, std::uint64_t seed);

// CSV event log: time,event_type,vehicle,node,detail
void write_event_log_csv(std::ostream& out, std::span<const SimEvent> events);

}  // namespace saev
