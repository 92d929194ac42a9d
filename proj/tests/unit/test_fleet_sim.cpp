#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "properties.hpp"
#include "saev/fleet_sim.hpp"

using namespace saev;

namespace {

// Two nodes 2 km apart, one vehicle, 40 km/h everywhere.
fx::ScenarioBuilder two_node() {
  fx::ScenarioBuilder b;
  b.net = std::make_shared<const RoadNetwork>(
      RoadNetwork({{0, 0.0, 0.0}, {1, 2000.0, 0.0}}, {{0, 0, 1, 2000.0}}));
  b.grid = GridSpec{-500.0, -500.0, 1000.0, 1, 3};
  b.design = SystemDesign{1, 1, 1, 110, 2, 8.2};
  return b;
}

int initial_node(const fx::ScenarioBuilder& b, std::uint64_t seed) {
  Simulator probe(b.build(), Strategy::random_motion(), seed);
  return probe.snapshot().vehicles.at(0).node;
}

ModelingParams midpoint() {
  return {{FunctionType::exp_gauss, {2.5, 2.5}}, {FunctionType::exp_gauss, {2.5, 2.5}}};
}

}  // namespace

TEST(FeasibleSoc, Boundary) {
  // 27.67 kWh, 182.6 km range; 10 km total needs 10/range of the battery.
  const double cap = 27.6716;
  const double range = 6.6 * cap;
  const double need = 10.0 / range;
  EXPECT_TRUE(feasible_soc(1.0, cap, range, 2.0, 5.0, 3.0));
  EXPECT_TRUE(feasible_soc(need, cap, range, 2.0, 5.0, 3.0));
  EXPECT_FALSE(feasible_soc(need - 1e-9, cap, range, 2.0, 5.0, 3.0));
}

TEST(AssignVehicle, NearestFeasible) {
  const std::vector<DispatchCandidate> c{{0, 5.0, 3.0, 1.0}, {1, 2.0, 1.5, 1.0}};
  EXPECT_EQ(assign_vehicle(c, 4.0, 1.0, 20.0, 132.0), 1);
}

TEST(AssignVehicle, InfeasibleMeansQueue) {
  const std::vector<DispatchCandidate> c{{0, 1.0, 1.0, 0.01}};
  EXPECT_FALSE(assign_vehicle(c, 10.0, 5.0, 20.0, 132.0).has_value());
}

TEST(AssignCharger, SingleFreeCharger) {
  const std::vector<int> nodes{4};
  const std::vector<double> travel{3.0};
  const auto ch = assign_charger(nodes, travel, {{0.0}}, 10.0);
  EXPECT_EQ(ch.station, 0);
  EXPECT_EQ(ch.charger, 0);
  EXPECT_DOUBLE_EQ(ch.start, 13.0);
}

TEST(AssignCharger, AllBusyMinimizesTravelPlusWait) {
  const std::vector<int> nodes{1, 2};
  const std::vector<double> travel{2.0, 4.0};
  const auto ch = assign_charger(nodes, travel, {{110.0}, {103.0}}, 100.0);
  EXPECT_EQ(ch.station, 1);  // 4 + 3 < 2 + 10
  EXPECT_DOUBLE_EQ(ch.start, 104.0);
}

TEST(AssignCharger, EquidistantTieGoesToLowerNode) {
  const std::vector<int> nodes{9, 5};
  const std::vector<double> travel{2.0, 2.0};
  EXPECT_EQ(assign_charger(nodes, travel, {{0.0}, {0.0}}, 0.0).station, 1);
}

TEST(AssignCharger, FreeChargerBeatsNearerBusyOne) {
  const std::vector<int> nodes{1, 2};
  const std::vector<double> travel{1.0, 8.0};
  EXPECT_EQ(assign_charger(nodes, travel, {{50.0}, {0.0}}, 0.0).station, 1);
}

TEST(AssignCharger, NoStations) {
  EXPECT_ANY_THROW(assign_charger({}, {}, {}, 0.0));
}

TEST(Simulator, ZeroDemand) {
  auto b = two_node();
  b.design.n_saev = 3;
  Simulator sim(b.build(), Strategy::relocation(midpoint()), 5, true);
  sim.advance_until(240.0);
  const auto r = sim.report();
  EXPECT_EQ(r.mean_wait, 0.0);
  EXPECT_EQ(r.served, 0);
  for (const auto& e : sim.log()) {
    if (e.type != "transition") continue;
    EXPECT_TRUE((e.from == VehicleState::idle || e.from == VehicleState::relocating) &&
                (e.to == VehicleState::idle || e.to == VehicleState::relocating));
  }
}

TEST(Simulator, RequestAtVehicleNode) {
  auto b = two_node();
  const int at = initial_node(b, 3);
  b.demand = {{5.0, at, 1 - at}};
  const auto r = run_simulation(b.build(), Strategy::relocation(midpoint()), 60.0, 3);
  ASSERT_EQ(r.served, 1);
  EXPECT_EQ(r.waits[0], 0.0);
}

TEST(Simulator, RequestOneSegmentAway) {
  auto b = two_node();
  const int at = initial_node(b, 3);
  b.demand = {{5.0, 1 - at, at}};
  const auto r = run_simulation(b.build(), Strategy::relocation(midpoint()), 60.0, 3);
  ASSERT_EQ(r.served, 1);
  EXPECT_NEAR(r.waits[0], 3.0, 1e-9);
}

TEST(Simulator, ConcentratedForecastDrawsFleet) {
  fx::ScenarioBuilder b;
  b.net = std::make_shared<const RoadNetwork>(fx::grid_network(5, 5, 500.0));
  b.grid = GridSpec{-250.0, -250.0, 1000.0, 3, 3};
  b.forecast.assign(9, 0.0);
  b.forecast[4] = 2.0;
  b.design = SystemDesign{1, 1, 6, 110, 2, 8.2};
  const auto sc = b.build();
  const int anchor = cell_anchor_nodes(sc->grid, *sc->net)[4];
  Simulator sim(sc, Strategy::relocation(midpoint()), 11);
  sim.advance_until(25.0);
  for (const auto& v : sim.snapshot().vehicles) {
    EXPECT_EQ(v.state, VehicleState::idle);
    EXPECT_EQ(v.node, anchor);
  }
}

TEST(Simulator, ZeroForecastNoMovement) {
  fx::ScenarioBuilder b;
  b.net = std::make_shared<const RoadNetwork>(fx::grid_network(4, 4, 500.0));
  b.grid = GridSpec{-250.0, -250.0, 1000.0, 2, 2};
  b.design = SystemDesign{1, 1, 5, 110, 2, 8.2};
  const auto sc = b.build();
  Simulator sim(sc, Strategy::relocation(midpoint()), 2);
  const auto before = sim.snapshot();
  sim.advance_until(100.0);
  const auto after = sim.snapshot();
  for (std::size_t i = 0; i < before.vehicles.size(); ++i) EXPECT_EQ(after.vehicles[i].node, before.vehicles[i].node);
  EXPECT_EQ(sim.report().vehicle_km, 0.0);
}

TEST(Simulator, RandomMotionIsSeeded) {
  const auto sc = fx::random_scenario(4);
  const auto a = run_simulation(sc, Strategy::random_motion(), 600.0, 9).to_json(true).dump();
  EXPECT_EQ(a, run_simulation(sc, Strategy::random_motion(), 600.0, 9).to_json(true).dump());
  EXPECT_NE(a, run_simulation(sc, Strategy::random_motion(), 600.0, 10).to_json(true).dump());
}

TEST(Simulator, LowBatteryCharges) {
  fx::ScenarioBuilder b;
  b.net = std::make_shared<const RoadNetwork>(fx::grid_network(4, 4, 1500.0));
  b.grid = GridSpec{-750.0, -750.0, 3000.0, 2, 2};
  b.design = SystemDesign{1, 1, 1, 12, 1, 8.2};  // ~10 km range
  b.stations = {0};
  Rng rng(3);
  for (int i = 0; i < 30; ++i) {
    b.demand.push_back({i * 20.0 + 1.0, static_cast<int>(rng.index(16)), static_cast<int>(rng.index(16))});
  }
  for (auto& e : b.demand) {
    if (e.origin == e.destination) e.destination = (e.origin + 1) % 16;
  }
  const auto sc = b.build();
  EXPECT_EQ(fx::audit_run(sc, Strategy::random_motion(), 600.0, 1), "");
  EXPECT_GT(run_simulation(sc, Strategy::random_motion(), 600.0, 1).charging_events, 0);
}

TEST(Simulator, RelocatingVehicleCanBeDiverted) {
  bool diverted = false;
  for (std::uint64_t s = 1; s <= 10 && !diverted; ++s) {
    const auto sc = fx::random_scenario(s);
    Simulator sim(sc, Strategy::random_motion(), s, true);
    sim.advance_until(720.0);
    for (const auto& e : sim.log()) {
      diverted = diverted || (e.type == "transition" && e.from == VehicleState::relocating &&
                              e.to == VehicleState::in_service);
    }
  }
  EXPECT_TRUE(diverted);
}

TEST(Simulator, PropertiesOnRandomScenarios) {
  for (std::uint64_t s = 1; s <= 8; ++s) {
    const auto sc = fx::random_scenario(100 + s);
    EXPECT_EQ(fx::audit_run(sc, Strategy::relocation(midpoint()), 720.0, s), "") << "scenario " << s;
    EXPECT_EQ(fx::audit_run(sc, Strategy::random_motion(), 720.0, s), "") << "scenario " << s;
  }
}

TEST(Simulator, AdvanceInStepsMatchesOneRun) {
  const auto sc = fx::random_scenario(7);
  Simulator a(sc, Strategy::relocation(midpoint()), 3);
  a.advance_until(600.0);
  Simulator b(sc, Strategy::relocation(midpoint()), 3);
  for (double t = 13.0; t < 600.0; t += 13.0) b.advance_until(t);
  b.advance_until(600.0);
  EXPECT_EQ(a.report().to_json(true).dump(), b.report().to_json(true).dump());
}

TEST(Simulator, CopyContinuesIdentically) {
  const auto sc = fx::random_scenario(8);
  Simulator a(sc, Strategy::relocation(midpoint()), 4);
  a.advance_until(200.0);
  Simulator b = a;
  a.advance_until(500.0);
  b.advance_until(500.0);
  EXPECT_EQ(a.report().to_json(true).dump(), b.report().to_json(true).dump());
}

TEST(Simulator, ScheduleReplayMatchesSwitching) {
  const auto sc = fx::random_scenario(9);
  const auto p1 = midpoint();
  ModelingParams p2{{FunctionType::exp_gauss, {0.5, 1.0}}, {FunctionType::exp_gauss, {4.0, 0.5}}};
  Simulator live(sc, Strategy::relocation(p1), 6);
  live.advance_until(30.0);
  live.set_strategy(Strategy::relocation(p2));
  live.advance_until(300.0);
  const auto replay = run_simulation(sc, Strategy::relocation_schedule({p1, p2}), 300.0, 6);
  EXPECT_EQ(live.report().to_json(true).dump(), replay.to_json(true).dump());
}

TEST(Simulator, RequestCutoffAndWindowWait) {
  const auto sc = fx::random_scenario(12);
  Simulator sim(sc, Strategy::relocation(midpoint()), 1);
  sim.advance_until(60.0);
  sim.set_request_cutoff(90.0);
  sim.advance_until(200.0);
  const auto r = sim.report();
  for (std::size_t i = 0; i < static_cast<std::size_t>(r.total_requests); ++i) EXPECT_LT(sc->demand[i].time_min, 90.0);
  EXPECT_EQ(sim.requests_between(60.0, 90.0), static_cast<std::int64_t>(std::count_if(
      sc->demand.begin(), sc->demand.end(), [](const DemandEvent& e) { return e.time_min >= 60.0 && e.time_min < 90.0; })));
  EXPECT_TRUE(std::isnan(sim.window_wait(100.0, 130.0)));
}

TEST(Simulator, ReplacePendingDemand) {
  const auto sc = fx::random_scenario(13);
  Simulator base(sc, Strategy::relocation(midpoint()), 1);
  base.advance_until(60.0);
  Simulator swapped = base;
  swapped.replace_pending_demand({});
  swapped.advance_until(120.0);
  EXPECT_EQ(swapped.requests_between(60.0, 120.0), 0);
  Simulator same = base;
  std::vector<DemandEvent> rest;
  for (const auto& e : sc->demand) {
    if (e.time_min >= 60.0) rest.push_back(e);
  }
  same.replace_pending_demand(rest);
  same.advance_until(300.0);
  base.advance_until(300.0);
  EXPECT_EQ(same.report().to_json(true).dump(), base.report().to_json(true).dump());
  EXPECT_THROW(swapped.replace_pending_demand({{10.0, 0, 1}}), std::invalid_argument);
}

TEST(Simulator, EventLogCsv) {
  const auto sc = fx::random_scenario(5);
  Simulator sim(sc, Strategy::random_motion(), 1, true);
  sim.advance_until(120.0);
  std::ostringstream out;
  write_event_log_csv(out, sim.log());
  const auto text = out.str();
  EXPECT_EQ(text.rfind("time,event_type,vehicle,node,detail\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), sim.log().size() + 1);
}
