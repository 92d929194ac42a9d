#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "saev/error.hpp"
#include "saev/optimizer.hpp"
#include "saev/parallel.hpp"

using namespace saev;

TEST(ParallelMap, IndependentOfWorkers) {
  const auto f = [](std::size_t i) { return static_cast<double>(i * i) + 0.5; };
  EXPECT_EQ(parallel_map(37, 1, f), parallel_map(37, 4, f));
}

TEST(ParallelMap, RethrowsErrors) {
  EXPECT_THROW(parallel_map(10, 3, [](std::size_t i) -> int {
                 if (i == 6) throw std::runtime_error("boom");
                 return 0;
               }),
               std::runtime_error);
}

TEST(MinimizeBox, RecoversQuadraticOptimum) {
  const BoxBounds b{{0, 0, 0, 0}, {5, 5, 5, 5}};
  const auto obj = [](std::span<const double> x) {
    double s = 0;
    for (double v : x) s += (v - 0.5) * (v - 0.5);
    return s;
  };
  const auto r = minimize_box(obj, b, {}, 1);
  for (double v : r.x) EXPECT_NEAR(v, 0.5, 1e-2);
}

TEST(MinimizeBox, CollapsedBounds) {
  const BoxBounds b{{1.5, 2.0}, {1.5, 2.0}};
  const auto r = minimize_box([](std::span<const double> x) { return x[0] + x[1]; }, b, {6, 3, 10}, 4);
  EXPECT_EQ(r.x, (std::vector<double>{1.5, 2.0}));
}

TEST(MinimizeBox, DeterministicAndWorkerIndependent) {
  const BoxBounds b{{0, 0}, {5, 5}};
  const auto obj = [](std::span<const double> x) { return std::sin(3 * x[0]) + std::cos(2 * x[1]) + 0.1 * x[0]; };
  const auto a = minimize_box(obj, b, {}, 7, 1);
  const auto c = minimize_box(obj, b, {}, 7, 3);
  EXPECT_EQ(a.x, c.x);
  EXPECT_EQ(a.f, c.f);
  EXPECT_EQ(a.evaluations, c.evaluations);
}

TEST(MinimizeBox, TraceIsMonotone) {
  const BoxBounds b{{0, 0, 0}, {5, 5, 5}};
  const auto obj = [](std::span<const double> x) { return std::abs(x[0] - 1) + std::abs(x[1] - 4) + x[2]; };
  const auto r = minimize_box(obj, b, {}, 3);
  ASSERT_FALSE(r.trace.empty());
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].best_f, r.trace[i - 1].best_f);
  std::ostringstream out;
  write_trace_csv(out, r.trace);
  EXPECT_EQ(out.str().rfind("generation,best_wait,params\n", 0), 0u);
}

TEST(MinimizeBox, NanTreatedAsWorst) {
  const BoxBounds b{{0}, {1}};
  const auto r = minimize_box(
      [](std::span<const double> x) { return x[0] < 0.5 ? std::numeric_limits<double>::quiet_NaN() : x[0]; }, b,
      {}, 2);
  EXPECT_NEAR(r.x[0], 0.5, 1e-2);
}

TEST(MinimizeBox, WarmStartSurvivesTies) {
  const BoxBounds b{{0, 0}, {5, 5}};
  const std::vector<std::vector<double>> init{{1.25, 3.75}};
  const auto r = minimize_box([](std::span<const double>) { return 1.0; }, b, {8, 4, 20}, 9, 1, init);
  EXPECT_EQ(r.x, init[0]);
}

TEST(OptimizeParams, WithinBoundsAndDeterministic) {
  ParamSearchConfig cfg;
  cfg.budget = {10, 5, 20};
  const auto obj = [](const ModelingParams& p) {
    const auto x = p.flat();
    return (x[0] - 1.0) * (x[0] - 1.0) + (x[3] - 4.0) * (x[3] - 4.0);
  };
  const auto a = optimize_params(obj, cfg, 5);
  EXPECT_EQ(a.params, optimize_params(obj, cfg, 5).params);
  EXPECT_NO_THROW(a.params.validate());
}

TEST(ParamSearchConfig, JsonRoundTrip) {
  ParamSearchConfig c;
  c.budget = {12, 7, 30};
  c.window_samples = 3;
  c.anchor_full_day = true;
  c.mask.use_p3 = false;
  const auto back = ParamSearchConfig::from_json(c.to_json());
  EXPECT_EQ(back.budget.population, 12);
  EXPECT_EQ(back.window_samples, 3);
  EXPECT_TRUE(back.anchor_full_day);
  EXPECT_FALSE(back.mask.use_p3);
  EXPECT_THROW(ParamSearchConfig::from_json({{"population", 1}}), ConfigError);
}

namespace {

ParamSearchConfig tiny_search() {
  ParamSearchConfig c;
  c.budget = {4, 2, 4};
  return c;
}

std::shared_ptr<const Scenario> empty_day() {
  fx::ScenarioBuilder b;
  b.net = std::make_shared<const RoadNetwork>(fx::grid_network(3, 3, 500.0));
  b.grid = GridSpec{-250.0, -250.0, 1000.0, 2, 2};
  b.design = SystemDesign{1, 1, 2, 110, 2, 8.2};
  return b.build();
}

}  // namespace

TEST(TrainingData, OneDayGives48Records) {
  const auto sc = fx::random_scenario(3);
  const auto data = generate_training_data([&](int) { return sc; }, 1, tiny_search(), 1);
  ASSERT_EQ(data.records.size(), 48u);
  ASSERT_EQ(data.days.size(), 1u);
  EXPECT_EQ(data.days[0].schedule.size(), 48u);
  for (int k = 0; k < 48; ++k) {
    EXPECT_EQ(data.records[static_cast<std::size_t>(k)].window, k);
    EXPECT_NEAR(data.records[static_cast<std::size_t>(k)].snapshot.sim_time, 30.0 * k, 1e-9);
  }
}

TEST(TrainingData, ZeroDemandDayIsDegenerate) {
  const auto data = generate_training_data([](int) { return empty_day(); }, 1, tiny_search(), 1);
  ASSERT_EQ(data.records.size(), 48u);
  const auto mid = midpoint_params(FunctionType::exp_gauss, FunctionType::exp_gauss);
  for (const auto& r : data.records) {
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.target, mid);
  }
}

TEST(TrainingData, ScheduleReplaysChainedRun) {
  const auto sc = fx::random_scenario(6);
  const auto data = generate_training_data([&](int) { return sc; }, 1, tiny_search(), 2);
  const auto& day = data.days[0];
  const auto replay = run_simulation(sc, Strategy::relocation_schedule(day.schedule), 1440.0, day.sim_seed);
  Simulator chained(sc, Strategy::relocation_schedule(day.schedule), day.sim_seed);
  for (int k = 0; k < 48; ++k) {
    chained.advance_until(30.0 * k);
    const auto& rec = data.records[static_cast<std::size_t>(k)];
    EXPECT_EQ(snapshot_to_json(chained.snapshot()).dump(), snapshot_to_json(rec.snapshot).dump()) << "window " << k;
  }
  chained.advance_until(1440.0);
  EXPECT_EQ(chained.report().to_json().dump(), replay.to_json().dump());
}

TEST(TrainingData, SamplerRequiredForSamples) {
  auto cfg = tiny_search();
  cfg.window_samples = 2;
  const auto sc = fx::random_scenario(6);
  EXPECT_THROW(generate_training_data([&](int) { return sc; }, 1, cfg, 1), std::invalid_argument);
}

TEST(TrainingData, RecordJsonRoundTrip) {
  const auto sc = fx::random_scenario(6);
  const auto data = generate_training_data([&](int) { return sc; }, 1, tiny_search(), 2);
  for (const auto& r : data.records) {
    EXPECT_EQ(TrainingRecord::from_json(r.to_json()).to_json().dump(), r.to_json().dump());
  }
}

TEST(WindowSearch, AlternativesChangeTheObjective) {
  const auto sc = fx::random_scenario(14);
  Simulator base(sc, Strategy::relocation(midpoint_params(FunctionType::exp_gauss, FunctionType::exp_gauss)), 1);
  base.advance_until(300.0);
  const std::vector<std::vector<DemandEvent>> none;
  const auto plain = optimize_params_window(base, 300.0, 330.0, tiny_search(), 4);
  const auto again = optimize_params_window(base, 300.0, 330.0, tiny_search(), 4, {}, none);
  EXPECT_EQ(plain.params, again.params);
  EXPECT_EQ(plain.wait, again.wait);
  // An alternative stream with no requests averages in as nothing.
  const std::vector<std::vector<DemandEvent>> empty_alt{{}};
  EXPECT_EQ(optimize_params_window(base, 300.0, 330.0, tiny_search(), 4, {}, empty_alt).wait, plain.wait);
}

// --- system design -----------------------------------------------------------

namespace {

DesignSearchConfig two_level_lattice() {
  DesignSearchConfig c;
  c.lb = {1, 1, 2, 40, 1};
  c.ub = {2, 2, 3, 41, 2};
  c.w_target = 3.0;
  return c;
}

// Synthetic wait: falls with fleet, chargers and battery.
double fake_wait(const SystemDesign& d) {
  return 6.0 - 0.9 * d.n_saev - 0.4 * d.n_charger - 0.3 * d.n_cs - 0.02 * d.n_series - 0.5 * d.n_parallel;
}

DesignEvaluation brute_force(const DesignSearchConfig& c, const CostConstants& k) {
  DesignEvaluation best;
  bool have = false;
  for (int a = c.lb.n_cs; a <= c.ub.n_cs; ++a)
    for (int b = c.lb.n_charger; b <= c.ub.n_charger; ++b)
      for (int s = c.lb.n_saev; s <= c.ub.n_saev; ++s)
        for (int n = c.lb.n_series; n <= c.ub.n_series; ++n)
          for (int p = c.lb.n_parallel; p <= c.ub.n_parallel; ++p) {
            const SystemDesign d{a, b, s, n, p, 8.2};
            const double w = fake_wait(d);
            if (w > c.w_target) continue;
            const auto cost = system_cost(d, k);
            if (!have || cost.total < best.cost.total) {
              have = true;
              best.design = d;
              best.cost = cost;
              best.wait = w;
            }
          }
  return best;
}

}  // namespace

TEST(OptimizeSystem, LatticeMatchesEnumeration) {
  const auto c = two_level_lattice();
  ASSERT_EQ(c.lattice_size(), 32u);
  const CostConstants k;
  const auto r = optimize_system(fake_wait, k, c, 1);
  const auto want = brute_force(c, k);
  EXPECT_TRUE(r.feasible);
  EXPECT_EQ(r.best.design, want.design);
  EXPECT_EQ(r.method, "enumeration");
}

TEST(OptimizeSystem, InfiniteTargetGivesLowerBound) {
  auto c = two_level_lattice();
  c.w_target = std::numeric_limits<double>::infinity();
  EXPECT_EQ(optimize_system(fake_wait, CostConstants{}, c, 1).best.design, c.lb);
  c.enumeration_limit = 4;  // force the evolutionary search
  const auto r = optimize_system(fake_wait, CostConstants{}, c, 1);
  EXPECT_EQ(r.method, "evolutionary");
  EXPECT_EQ(r.best.design, c.lb);
}

TEST(OptimizeSystem, InfeasibleReturnsLeastViolating) {
  auto c = two_level_lattice();
  c.w_target = -100.0;
  const auto r = optimize_system(fake_wait, CostConstants{}, c, 1);
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.best.design, c.ub);
}

TEST(OptimizeSystem, EvolutionaryFindsFeasibleOnLargerLattice) {
  DesignSearchConfig c;
  c.lb = {1, 1, 1, 20, 1};
  c.ub = {6, 4, 8, 60, 2};
  c.w_target = 0.0;
  c.enumeration_limit = 10;
  const CostConstants k;
  const auto r = optimize_system(fake_wait, k, c, 3);
  EXPECT_EQ(r.method, "evolutionary");
  EXPECT_TRUE(r.feasible);
  EXPECT_LE(fake_wait(r.best.design), 0.0);
}

TEST(DesignSearchConfig, JsonAndValidation) {
  auto c = two_level_lattice();
  c.w_target = std::numeric_limits<double>::infinity();
  const auto back = DesignSearchConfig::from_json(c.to_json());
  EXPECT_EQ(back.lb, c.lb);
  EXPECT_TRUE(std::isinf(back.w_target));
  c.lb.n_cs = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

// --- analysis ------------------------------------------------------------------

TEST(Sensitivity, FourMasksDeterministic) {
  const auto sc = fx::random_scenario(21);
  const auto p = midpoint_params(FunctionType::exp_gauss, FunctionType::exp_gauss);
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto a = sensitivity_sweep(sc, p, 480.0, seeds, 1);
  const auto b = sensitivity_sweep(sc, p, 480.0, seeds, 3);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0].mask.label(), "P1");
  EXPECT_EQ(a[3].mask.label(), "P1*P2*P3");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a[i].waits, b[i].waits);
}

TEST(Sensitivity, P1MaskEqualsUnitFunctions) {
  const auto sc = fx::random_scenario(22);
  const auto p = midpoint_params(FunctionType::exp_gauss, FunctionType::exp_gauss);
  const ModelingParams ones{{FunctionType::exp_gauss, {0.0, 1.0}}, {FunctionType::exp_gauss, {0.0, 1.0}}};
  const auto a = run_simulation(sc, Strategy::relocation(p, {false, false}), 480.0, 3);
  const auto b = run_simulation(sc, Strategy::relocation(ones), 480.0, 3);
  EXPECT_EQ(a.to_json(true).dump(), b.to_json(true).dump());
}

TEST(FunctionTable, F2IsOneWithoutExcessAndF1Decreases) {
  const ModelingParams p{{FunctionType::exp_gauss, {0.4, 1.3}}, {FunctionType::exp_gauss, {1.1, 0.8}}};
  const std::vector<double> os{0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
  const auto t = function_value_table(p, os);
  EXPECT_EQ(t[0].f2, 1.0);
  for (std::size_t i = 2; i < t.size(); ++i) EXPECT_LT(t[i].f1, t[i - 1].f1);
  const std::vector<double> neg{-1.0};
  EXPECT_THROW(function_value_table(p, neg), std::invalid_argument);
}
