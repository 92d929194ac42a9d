// Acceptance checks, one line per criterion:
//   acceptance [--data DIR] [N ...]
// With no numbers every criterion runs. Exit status is nonzero when any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "fixtures.hpp"
#include "properties.hpp"
#include "saev/scenario.hpp"
#include "saev/surrogate.hpp"

using namespace saev;

namespace {

std::string g_data = SAEV_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Loaded once and shared by the city criteria.
struct CityFixture {
  ScenarioConfig cfg;
  std::unique_ptr<City> city;
  std::shared_ptr<const Scenario> day0;
  std::optional<ParamSearchResult> optimized;
};

CityFixture& city_fixture() {
  static CityFixture f = [] {
    CityFixture c;
    c.cfg = ScenarioConfig::load(g_data + "/city.json");
    c.city = std::make_unique<City>(c.cfg);
    c.day0 = c.city->day_scenario(c.cfg.day);
    return c;
  }();
  return f;
}

// Full-day exp-Gauss params for the evaluation day, optimized under the
// config's search settings and seed.
const ParamSearchResult& optimized_params() {
  auto& f = city_fixture();
  if (!f.optimized) {
    auto search = f.cfg.search;
    search.f1_type = search.f2_type = FunctionType::exp_gauss;
    f.optimized = optimize_params_full_day(f.day0, f.cfg.duration_min, search, f.cfg.seed, f.cfg.seed);
  }
  return *f.optimized;
}

// 1. Cost arithmetic on the two published design columns.
Outcome cost_columns() {
  const auto k = CostConstants::from_json_file(g_data + "/constants.json");
  struct Column {
    SystemDesign design;
    double install, maintenance, fleet, capacity;
  };
  const Column cols[] = {{{6, 2, 50, 139, 1}, 271512.0, 66000.0, 1089554.0, 17.48},
                         {{9, 3, 75, 101, 1}, 610902.0, 148500.0, 1549731.0, 12.70}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cols) {
    const auto cost = system_cost(c.design, k);
    const double cap = battery_capacity(c.design.n_series, c.design.n_parallel, k);
    ok = ok && std::abs(cost.cs_install - c.install) <= 1.0 && std::abs(cost.cs_maintenance - c.maintenance) <= 1e-6 &&
         std::abs(cost.fleet - c.fleet) <= 1.0 && std::abs(cap - c.capacity) < 0.005;
    detail += fmt("[install %.1f maint %.1f fleet %.1f cap %.3f] ", cost.cs_install, cost.cs_maintenance, cost.fleet,
                  cap);
  }
  return {ok, detail};
}

// 2. Charging times.
Outcome charging_times() {
  const auto k = CostConstants::from_json_file(g_data + "/constants.json");
  const double t101 = vehicle_perf({1, 1, 1, 101, 1}, k, 0.15).charging_time_min;
  const double t139 = vehicle_perf({1, 1, 1, 139, 1}, k, 0.15).charging_time_min;
  // 24 kWh pack charged from empty.
  auto unit = k;
  unit.cell_energy_kwh = 24.0;
  const double t24 = vehicle_perf({1, 1, 1, 1, 1}, unit, 0.0).charging_time_min;
  const bool ok = std::abs(t101 - 13.5) <= 0.05 && std::abs(t139 - 18.6) <= 0.05 && std::abs(t24 - 30.0) <= 0.05;
  return {ok, fmt("12.70 kWh %.3f min, 17.48 kWh %.3f min, 24 kWh %.3f min", t101, t139, t24)};
}

// 3. Routing against Floyd-Warshall. Segment lengths are multiples of 125 m
// and hourly speeds powers of two, so every edge time and every path sum is
// exact in binary floating point and both algorithms must agree bit for bit.
Outcome routing_oracle() {
  int mismatches = 0;
  std::int64_t pairs = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed);
    const int n = 2 + static_cast<int>(rng.index(29));
    const auto base = fx::random_network(rng, n, static_cast<int>(rng.index(static_cast<std::uint64_t>(n) + 1)));
    auto segs = base.segments();
    for (auto& s : segs) s.length_m = 125.0 * static_cast<double>(1 + rng.index(40));
    const RoadNetwork net(base.nodes(), segs);

    std::array<HourTraffic, 24> hours{};
    for (auto& h : hours) {
      h.band_probability = {0.25, 0.25, 0.25, 0.25};
      h.average_kmh = std::ldexp(1.0, 3 + static_cast<int>(rng.index(4)));  // 8..64 km/h
    }
    SpeedModel speeds{TrafficProfile(hours), SpeedMode::uniform, seed};
    const RoutingTable table(net, speeds);
    for (int hour = 0; hour < 24; ++hour) {
      const auto fw = fx::floyd_warshall(net, speeds.speeds_for_hour(net, hour));
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          const double want = fw[static_cast<std::size_t>(a) * n + b];
          ++pairs;
          if (table.minutes(hour, a, b) != want) ++mismatches;
          if (hour % 6 == 0 && shortest_time_path(net, speeds, a, b, hour).minutes != want) ++mismatches;
        }
      }
    }
  }
  return {mismatches == 0, fmt("%lld pairs x hours, %d mismatches", static_cast<long long>(pairs), mismatches)};
}

// 4. p-median against full enumeration.
Outcome pmedian_oracle() {
  int mismatched = 0;
  int heuristic_below = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed * 7919);
    const int n = 3 + static_cast<int>(rng.index(10));
    const int p = 1 + static_cast<int>(rng.index(3));
    const auto net = fx::random_network(rng, n, static_cast<int>(rng.index(static_cast<std::uint64_t>(n))));
    std::vector<double> w;
    for (int i = 0; i < n; ++i) w.push_back(rng.uniform(0.0, 5.0));
    std::vector<int> cand(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) cand[static_cast<std::size_t>(i)] = i;

    // Independent distances: Floyd-Warshall at 60 km/h gives minutes, km = minutes.
    const auto fw = fx::floyd_warshall(net, std::vector<double>(static_cast<std::size_t>(net.segment_count()), 60.0));
    const auto cost_of = [&](const std::vector<int>& sites) {
      double c = 0.0;
      for (int v = 0; v < n; ++v) {
        double best = std::numeric_limits<double>::infinity();
        for (int s : sites) best = std::min(best, fw[static_cast<std::size_t>(v) * n + s]);
        c += w[static_cast<std::size_t>(v)] * best;
      }
      return c;
    };
    double brute = std::numeric_limits<double>::infinity();
    std::vector<int> pick;
    std::function<void(int)> rec = [&](int from) {
      if (static_cast<int>(pick.size()) == p) {
        brute = std::min(brute, cost_of(pick));
        return;
      }
      for (int i = from; i < n; ++i) {
        pick.push_back(i);
        rec(i + 1);
        pick.pop_back();
      }
    };
    rec(0);

    const auto exact = pmedian(net, w, p, cand, PMedianMethod::exact);
    const auto heur = pmedian(net, w, p, cand, PMedianMethod::interchange);
    const double tol = 1e-9 * std::max(1.0, brute);
    if (std::abs(exact.cost - brute) > tol || std::abs(cost_of(exact.sites) - brute) > tol) ++mismatched;
    if (heur.cost < exact.cost - tol) ++heuristic_below;
  }
  return {mismatched == 0 && heuristic_below == 0,
          fmt("exact vs enumeration mismatches %d, interchange below exact %d", mismatched, heuristic_below)};
}

// 5. Relocation with optimized params against random motion.
Outcome relocation_vs_random() {
  auto& f = city_fixture();
  const auto& opt = optimized_params();
  std::vector<double> reloc;
  std::vector<double> random;
  for (const auto s : f.cfg.eval_seeds) {
    reloc.push_back(run_simulation(f.day0, Strategy::relocation(opt.params), f.cfg.duration_min, s).mean_wait_with_unserved);
    random.push_back(run_simulation(f.day0, Strategy::random_motion(), f.cfg.duration_min, s).mean_wait_with_unserved);
  }
  const double gain = 1.0 - mean(reloc) / mean(random);
  return {f.cfg.eval_seeds.size() >= 5 && gain >= 0.30,
          fmt("%zu seeds, %lld requests: relocation %.3f vs random %.3f min, reduction %.1f%%", f.cfg.eval_seeds.size(),
              static_cast<long long>(f.day0->demand.size()), mean(reloc), mean(random), 100.0 * gain)};
}

// 6. Sensitivity ordering. A pair may invert by at most the standard error
// of the per-seed paired difference (all masks run under common seeds).
Outcome sensitivity_ordering() {
  auto& f = city_fixture();
  const auto& opt = optimized_params();
  const auto rows = sensitivity_sweep(f.day0, opt.params, f.cfg.duration_min, f.cfg.eval_seeds, 1);
  std::map<std::string, std::vector<double>> w;
  for (const auto& r : rows) w[r.mask.label()] = r.waits;
  for (const auto s : f.cfg.eval_seeds) {
    w["random"].push_back(run_simulation(f.day0, Strategy::random_motion(), f.cfg.duration_min, s).mean_wait_with_unserved);
  }
  const std::vector<std::string> order{"P1*P2*P3", "P1*P3", "P1*P2", "P1", "random"};
  bool ok = f.cfg.eval_seeds.size() >= 5;
  std::string detail;
  for (const auto& k : order) detail += fmt("%s %.3f  ", k.c_str(), mean(w.at(k)));
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const auto& lo = w.at(order[i]);
    const auto& hi = w.at(order[i + 1]);
    std::vector<double> diff;
    for (std::size_t j = 0; j < lo.size(); ++j) diff.push_back(lo[j] - hi[j]);
    const double excess = mean(diff);
    if (excess > std_error(diff)) {
      ok = false;
      detail += fmt("| %s above %s by %.3f (se %.3f) ", order[i].c_str(), order[i + 1].c_str(), excess, std_error(diff));
    }
  }
  return {ok, detail};
}

// 7. Per-window optimized params against single full-day params, and the
// surrogate against per-window. Days 0-2 train, day 3 is held out; all three
// policies are compared on the held-out day under its simulation seed.
Outcome surrogate_loop() {
  auto& f = city_fixture();
  constexpr int kTrainDays = 3;
  const auto data = generate_training_data([&](int d) { return f.city->day_scenario(d); }, kTrainDays + 1,
                                           f.cfg.search, f.cfg.seed, 0, {},
                                           f.cfg.search.window_samples > 0 ? f.city->window_sampler()
                                                                           : WindowDemandSampler{});
  std::vector<TrainingRecord> train;
  for (const auto& r : data.records) {
    if (r.day < kTrainDays) train.push_back(r);
  }
  const auto trained = train_surrogate(train, f.cfg.train, f.cfg.seed);
  const auto model = std::make_shared<const SurrogateModel>(trained.model);

  const auto& held = data.days[kTrainDays];
  const auto sc = f.city->day_scenario(kTrainDays);
  const auto full_day = held.anchor ? *held.anchor
                                    : optimize_params_full_day(sc, f.cfg.duration_min, f.cfg.search, held.sim_seed,
                                                               f.cfg.seed)
                                          .params;
  const auto wait = [&](const Strategy& s) {
    return run_simulation(sc, s, f.cfg.duration_min, held.sim_seed).mean_wait_with_unserved;
  };
  const double w_full = wait(Strategy::relocation(full_day));
  const double w_window = wait(Strategy::relocation_schedule(held.schedule));
  const double w_surrogate = wait(Strategy::relocation(surrogate_source(model)));
  const double gain = 1.0 - w_window / w_full;
  const double gap = w_surrogate / w_window - 1.0;

  std::string train_gains;
  for (int d = 0; d < kTrainDays; ++d) {
    const auto& day = data.days[static_cast<std::size_t>(d)];
    if (!day.anchor) continue;
    const auto dsc = f.city->day_scenario(d);
    const double a = run_simulation(dsc, Strategy::relocation(*day.anchor), f.cfg.duration_min, day.sim_seed)
                         .mean_wait_with_unserved;
    const double b = run_simulation(dsc, Strategy::relocation_schedule(day.schedule), f.cfg.duration_min, day.sim_seed)
                         .mean_wait_with_unserved;
    train_gains += fmt(" %.1f%%", 100.0 * (1.0 - b / a));
  }
  return {gain >= 0.05 && gap <= 0.25,
          fmt("held-out day: full-day %.3f, per-window %.3f (%.1f%% lower), surrogate %.3f (%+.1f%%); "
              "training-day gains%s",
              w_full, w_window, 100.0 * gain, w_surrogate, 100.0 * gap, train_gains.c_str())};
}

// 8. optimize_system on a 32-point lattice (chargers per station 1..2 x
// fleet 30..45) against plain enumeration of the same lattice.
Outcome design_lattice() {
  auto& f = city_fixture();
  DesignSearchConfig ds;
  ds.lb = {4, 1, 30, 110, 2, 8.2};
  ds.ub = {4, 2, 45, 110, 2, 8.2};
  ds.w_target = 6.0;
  ds.seeds = {1, 2};
  const auto strategy = Strategy::random_motion();
  const auto& stations = f.city->stations();

  struct Eval {
    SystemDesign d;
    double cost;
    double wait;
  };
  std::vector<Eval> all;
  for (int ch = ds.lb.n_charger; ch <= ds.ub.n_charger; ++ch) {
    for (int fleet = ds.lb.n_saev; fleet <= ds.ub.n_saev; ++fleet) {
      const SystemDesign d{ds.lb.n_cs, ch, fleet, ds.lb.n_series, ds.lb.n_parallel, 8.2};
      all.push_back({d, system_cost(d, f.city->constants()).total,
                     design_wait(*f.day0, d, stations, strategy, f.cfg.duration_min, ds.seeds)});
    }
  }
  const auto key = [](const SystemDesign& d) {
    return std::array{d.n_cs, d.n_charger, d.n_saev, d.n_series, d.n_parallel};
  };
  const Eval* best = nullptr;
  int feasible = 0;
  for (const auto& e : all) {
    if (e.wait > ds.w_target) continue;
    ++feasible;
    if (!best || e.cost < best->cost || (e.cost == best->cost && key(e.d) < key(best->d))) best = &e;
  }
  std::string waits;
  for (const auto& e : all) waits += fmt(" %d/%d:%.2f", e.d.n_charger, e.d.n_saev, e.wait);
  const auto r = optimize_system(f.day0, strategy, f.cfg.duration_min, stations, ds, f.cfg.seed);
  const bool ok = all.size() == 32 && ds.lattice_size() == 32 && r.method == "enumeration" && best != nullptr &&
                  r.feasible && key(r.best.design) == key(best->d) && r.best.cost.total == best->cost;
  return {ok, fmt("%zu designs, %d feasible; enumeration optimum %d chargers x %d vehicles (%.0f), optimizer %d x %d "
                  "(%.0f, %d evaluations)",
                  all.size(), feasible, best ? best->d.n_charger : 0, best ? best->d.n_saev : 0,
                  best ? best->cost : 0.0, r.best.design.n_charger, r.best.design.n_saev, r.best.cost.total,
                  r.evaluations) +
                  "; waits" + waits};
}

// 9. Property suites and determinism.
Outcome properties() {
  std::string detail;
  bool ok = true;

  // Modeling functions.
  Rng rng(2024);
  int fn_bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto type = static_cast<FunctionType>(rng.index(3));
    std::vector<double> p;
    for (const auto& [lo, hi] : param_bounds(type)) p.push_back(rng.uniform(lo, hi));
    double a = rng.uniform(0.0, 30.0);
    double b = rng.uniform(0.0, 30.0);
    if (a > b) std::swap(a, b);
    const double fa = eval_modeling_function(type, p, a);
    const double fb = eval_modeling_function(type, p, b);
    const double f0 = eval_modeling_function(type, p, 0.0);
    if (!(fa >= 0.0 && fa <= 1.0 && fb >= 0.0 && fb <= 1.0 && fa >= fb && f0 == 1.0)) ++fn_bad;
  }
  ok = ok && fn_bad == 0;
  detail += fmt("function draws failing %d/10000; ", fn_bad);

  // Simulator invariants.
  int sim_bad = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto sc = fx::random_scenario(seed);
    Rng prng(seed);
    std::vector<double> flat;
    for (const auto& [lo, hi] : param_bounds(FunctionType::exp_gauss)) flat.push_back(prng.uniform(lo, hi));
    for (const auto& [lo, hi] : param_bounds(FunctionType::exp_gauss)) flat.push_back(prng.uniform(lo, hi));
    const auto strategy = seed % 2 == 0 ? Strategy::random_motion()
                                        : Strategy::relocation(ModelingParams::from_flat(
                                              FunctionType::exp_gauss, FunctionType::exp_gauss, flat));
    const auto err = fx::audit_run(sc, strategy, 720.0, seed);
    if (!err.empty()) {
      ++sim_bad;
      if (first.empty()) first = fmt(" (scenario %llu: %s)", static_cast<unsigned long long>(seed), err.c_str());
    }
  }
  ok = ok && sim_bad == 0;
  detail += fmt("scenarios failing audit %d/50%s; ", sim_bad, first.c_str());

  // Determinism through the CLI: repeated runs and worker counts.
  const auto dir = std::filesystem::temp_directory_path() / "saev_acceptance_cli";
  std::filesystem::remove_all(dir);
  const auto run = [&](const std::vector<std::string>& extra, const std::string& out) {
    std::vector<std::string> args{"--config", g_data + "/city.json", "--out", (dir / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    std::ostringstream o;
    std::ostringstream e;
    return cli::run(args, o, e);
  };
  const auto slurp = [&](const std::string& rel) {
    std::ifstream in(dir / rel, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  int codes = run({"simulate"}, "a") + run({"simulate"}, "b") + run({"--workers", "1", "sensitivity"}, "w1") +
              run({"--workers", "4", "sensitivity"}, "w4");
  const bool same_report = codes == 0 && !slurp("a/report.json").empty() && slurp("a/report.json") == slurp("b/report.json");
  const bool same_sens = codes == 0 && slurp("w1/sensitivity.json") == slurp("w4/sensitivity.json");

  // Library searches with 1 and 4 workers (small budgets).
  auto& f = city_fixture();
  ParamSearchConfig small = f.cfg.search;
  small.budget = {6, 3, 10};
  small.workers = 1;
  const auto p1 = optimize_params_full_day(f.day0, f.cfg.duration_min, small, 3, 3);
  small.workers = 4;
  const auto p4 = optimize_params_full_day(f.day0, f.cfg.duration_min, small, 3, 3);
  const bool same_search = p1.params == p4.params && p1.wait == p4.wait && p1.trace.size() == p4.trace.size();
  DesignSearchConfig ds;
  ds.lb = {2, 1, 40, 110, 2, 8.2};
  ds.ub = {3, 2, 42, 110, 2, 8.2};
  ds.w_target = 5.0;
  ds.seeds = {1};
  const auto design_json = [&](int workers) {
    ds.workers = workers;
    return optimize_system(f.day0, Strategy::random_motion(), f.cfg.duration_min, f.city->stations(), ds, 1)
        .to_json()
        .dump();
  };
  const bool same_design = design_json(1) == design_json(4);
  std::filesystem::remove_all(dir);

  ok = ok && same_report && same_sens && same_search && same_design;
  detail += fmt("repeat report identical %s, across workers: sensitivity %s, param search %s, design search %s",
                same_report ? "yes" : "no", same_sens ? "yes" : "no", same_search ? "yes" : "no",
                same_design ? "yes" : "no");
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--data" && i + 1 < argc) {
      g_data = argv[++i];
    } else {
      which.push_back(std::stoi(a));
    }
  }
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::map<int, std::function<Outcome()>> checks{
      {1, cost_columns},       {2, charging_times},       {3, routing_oracle},
      {4, pmedian_oracle},     {5, relocation_vs_random}, {6, sensitivity_ordering},
      {7, surrogate_loop},     {8, design_lattice},       {9, properties}};
  int failed = 0;
  for (const int n : which) {
    const auto it = checks.find(n);
    if (it == checks.end()) {
      std::printf("criterion %d: FAIL unknown criterion\n", n);
      ++failed;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s %s [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
