#include <benchmark/benchmark.h>

#include <numeric>

#include "saev/scenario.hpp"

using namespace saev;

namespace {

const City& city() {
  static const City c(ScenarioConfig::load(std::string(SAEV_DATA_DIR) + "/city.json"));
  return c;
}

void BM_RoutingTable(benchmark::State& state) {
  const auto net = city().net();
  const SpeedModel speeds{TrafficProfile::seoul_default(), SpeedMode::uniform, 0};
  for (auto _ : state) benchmark::DoNotOptimize(RoutingTable(*net, speeds));
}
BENCHMARK(BM_RoutingTable)->Unit(benchmark::kMillisecond);

void BM_SimulatedDay(benchmark::State& state) {
  const auto sc = city().day_scenario(0);
  const auto strategy = state.range(0) == 0 ? Strategy::random_motion() : Strategy::relocation(city().params());
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_simulation(sc, strategy, 1440.0, seed++).mean_wait);
}
BENCHMARK(BM_SimulatedDay)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_PMedianInterchange(benchmark::State& state) {
  const auto& net = *city().net();
  const auto weights = city().node_weights();
  std::vector<int> cand(static_cast<std::size_t>(net.node_count()));
  std::iota(cand.begin(), cand.end(), 0);
  const auto dist = path_length_matrix(net);
  const int p = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(pmedian(dist, net.node_count(), weights, p, cand, PMedianMethod::interchange).cost);
  }
}
BENCHMARK(BM_PMedianInterchange)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
