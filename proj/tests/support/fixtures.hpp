#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

#include "saev/demand.hpp"
#include "saev/fleet_sim.hpp"
#include "saev/rng.hpp"
#include "saev/road_net.hpp"

namespace saev::fx {

// Random connected graph: a random spanning tree plus `extra` chords.
inline RoadNetwork random_network(Rng& rng, int n, int extra, double extent_m = 5000.0) {
  std::vector<Node> nodes;
  for (int i = 0; i < n; ++i) nodes.push_back({i, rng.uniform(0.0, extent_m), rng.uniform(0.0, extent_m)});
  std::vector<Segment> segs;
  std::set<std::pair<int, int>> used;
  const auto add = [&](int a, int b) {
    if (a == b || used.count({std::min(a, b), std::max(a, b)})) return;
    used.insert({std::min(a, b), std::max(a, b)});
    const double d = std::hypot(nodes[a].x - nodes[b].x, nodes[a].y - nodes[b].y);
    segs.push_back({static_cast<int>(segs.size()), a, b, std::max(50.0, d * rng.uniform(1.0, 1.3))});
  };
  for (int i = 1; i < n; ++i) add(i, static_cast<int>(rng.index(static_cast<std::uint64_t>(i))));
  for (int e = 0; e < extra; ++e) {
    add(static_cast<int>(rng.index(static_cast<std::uint64_t>(n))), static_cast<int>(rng.index(static_cast<std::uint64_t>(n))));
  }
  return RoadNetwork(std::move(nodes), std::move(segs));
}

// Node grid with unit spacing `spacing_m`, 4-neighbour links.
inline RoadNetwork grid_network(int cols, int rows, double spacing_m) {
  std::vector<Node> nodes;
  std::vector<Segment> segs;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) nodes.push_back({r * cols + c, c * spacing_m, r * spacing_m});
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int n = r * cols + c;
      if (c + 1 < cols) segs.push_back({static_cast<int>(segs.size()), n, n + 1, spacing_m});
      if (r + 1 < rows) segs.push_back({static_cast<int>(segs.size()), n, n + cols, spacing_m});
    }
  }
  return RoadNetwork(std::move(nodes), std::move(segs));
}

// All-pairs shortest minutes on time-weighted edges.
inline std::vector<double> floyd_warshall(const RoadNetwork& net, const std::vector<double>& speeds_kmh) {
  const int n = net.node_count();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(static_cast<std::size_t>(n) * n, inf);
  for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i) * n + i] = 0.0;
  for (const auto& s : net.segments()) {
    const double w = edge_minutes(s.length_m, speeds_kmh[static_cast<std::size_t>(s.id)]);
    auto& ab = d[static_cast<std::size_t>(s.a) * n + s.b];
    auto& ba = d[static_cast<std::size_t>(s.b) * n + s.a];
    ab = std::min(ab, w);
    ba = std::min(ba, w);
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double via = d[static_cast<std::size_t>(i) * n + k] + d[static_cast<std::size_t>(k) * n + j];
        auto& cur = d[static_cast<std::size_t>(i) * n + j];
        if (via < cur) cur = via;
      }
    }
  }
  return d;
}

class FixedPredictor final : public DemandPredictor {
 public:
  explicit FixedPredictor(std::vector<double> expected) : expected_(std::move(expected)) {}
  DemandForecast forecast(const DemandTensor&, int) const override { return {expected_}; }

 private:
  std::vector<double> expected_;
};

struct ScenarioBuilder {
  std::shared_ptr<const RoadNetwork> net;
  double speed_kmh = 40.0;
  GridSpec grid;
  std::vector<DemandEvent> demand;
  std::vector<double> forecast;  // empty: all zero
  SystemDesign design{1, 1, 1, 110, 2, 8.2};
  std::vector<int> stations{0};
  double soc_trigger = 0.15;

  std::shared_ptr<const Scenario> build() const {
    auto sc = std::make_shared<Scenario>();
    sc->net = net;
    sc->routes = std::make_shared<const RoutingTable>(*net, SpeedModel{TrafficProfile::constant(speed_kmh)});
    sc->grid = grid;
    sc->demand = demand;
    std::sort(sc->demand.begin(), sc->demand.end(),
              [](const DemandEvent& a, const DemandEvent& b) { return a.time_min < b.time_min; });
    auto f = forecast;
    if (f.empty()) f.assign(static_cast<std::size_t>(grid.cell_count()), 0.0);
    sc->predictor = std::make_shared<FixedPredictor>(std::move(f));
    sc->design = design;
    sc->station_nodes = stations;
    sc->soc_trigger = soc_trigger;
    sc->validate();
    return sc;
  }
};

// Small random city for property checks: random graph, random intensity,
// random design. Heavy enough that vehicles charge.
inline std::shared_ptr<const Scenario> random_scenario(std::uint64_t seed) {
  Rng rng(seed);
  const int n = 12 + static_cast<int>(rng.index(18));
  auto net = std::make_shared<const RoadNetwork>(random_network(rng, n, n, 6000.0));
  GridSpec grid{0.0, 0.0, 1500.0, 4, 4};
  DemandIntensity intensity;
  intensity.bins = 48;
  intensity.rows = 4;
  intensity.cols = 4;
  std::vector<char> occupied(16, 0);
  for (int i = 0; i < n; ++i) occupied[static_cast<std::size_t>(node_to_cell(grid, *net, i))] = 1;
  for (int b = 0; b < 48; ++b) {
    for (int c = 0; c < 16; ++c) intensity.rates.push_back(occupied[static_cast<std::size_t>(c)] ? rng.uniform(0.0, 1.2) : 0.0);
  }
  ScenarioBuilder sb;
  sb.net = net;
  sb.speed_kmh = rng.uniform(20.0, 50.0);
  sb.grid = grid;
  sb.demand = generate_demand(intensity, 48, *net, grid, rng.next());
  sb.forecast.resize(16);
  for (int c = 0; c < 16; ++c) sb.forecast[static_cast<std::size_t>(c)] = occupied[static_cast<std::size_t>(c)] ? rng.uniform(0.0, 3.0) : 0.0;
  sb.design = SystemDesign{1 + static_cast<int>(rng.index(3)), 1 + static_cast<int>(rng.index(2)),
                           3 + static_cast<int>(rng.index(8)), 20 + static_cast<int>(rng.index(60)), 1, 8.2};
  sb.stations.clear();
  for (int s = 0; s < sb.design.n_cs; ++s) sb.stations.push_back(static_cast<int>(rng.index(static_cast<std::uint64_t>(n))));
  std::sort(sb.stations.begin(), sb.stations.end());
  sb.stations.erase(std::unique(sb.stations.begin(), sb.stations.end()), sb.stations.end());
  sb.design.n_cs = static_cast<int>(sb.stations.size());
  return sb.build();
}

}  // namespace saev::fx
