#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "saev/design_cost.hpp"
#include "saev/fleet_sim.hpp"
#include "saev/relocation.hpp"

namespace saev {

// --- box-constrained black-box minimization --------------------------------

struct BoxBounds {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t size() const { return lo.size(); }
};

struct SearchBudget {
  int population = 24;
  int generations = 20;
  int local_evals = 100;
};

struct TraceRow {
  int generation = 0;  // generations + 1 marks the local refinement
  double best_f = 0.0;
  std::vector<double> best_x;
};

struct SearchResult {
  std::vector<double> x;
  double f = 0.0;
  int evaluations = 0;
  std::vector<TraceRow> trace;
};

using Objective = std::function<double(std::span<const double>)>;

// Real-coded genetic search (elitist, tournament selection, blend crossover,
// Gaussian mutation) followed by bounded Nelder-Mead from the incumbent.
// The first generation holds `initial` (clipped), then the box midpoint,
// then uniform draws. Ties keep the earlier point, so a warm start survives
// unless something strictly better turns up. Candidates of one generation
// are evaluated in parallel; results do not depend on `workers`.
SearchResult minimize_box(const Objective& objective, const BoxBounds& bounds, const SearchBudget& budget,
                          std::uint64_t seed, int workers = 1, std::span<const std::vector<double>> initial = {});

void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace);

// --- modeling-parameter optimization ----------------------------------------

struct ParamSearchConfig {
  FunctionType f1_type = FunctionType::exp_gauss;
  FunctionType f2_type = FunctionType::exp_gauss;
  SearchBudget budget;
  SelectionMask mask;
  double lookahead_min = 30.0;  // window runs continue this long without new requests
  int replications = 1;         // seeded runs averaged per full-horizon evaluation
  bool warm_start = true;       // training data: seed each window with the previous optimum
  int window_samples = 0;       // extra demand draws per window evaluation (training data)
  bool anchor_full_day = false; // training data: seed every window with the day's full-horizon optimum
  int workers = 1;

  BoxBounds bounds() const;
  nlohmann::json to_json() const;
  static ParamSearchConfig from_json(const nlohmann::json& doc);
};

struct ParamSearchResult {
  ModelingParams params;
  double wait = 0.0;
  bool degenerate = false;  // no requests: params are the box midpoint
  int evaluations = 0;
  std::vector<TraceRow> trace;
};

ModelingParams midpoint_params(FunctionType f1, FunctionType f2);

using ParamObjective = std::function<double(const ModelingParams&)>;

ParamSearchResult optimize_params(const ParamObjective& objective, const ParamSearchConfig& config,
                                  std::uint64_t seed, std::span<const ModelingParams> initial = {});

// Whole-horizon objective: mean wait (unserved included), averaged over
// config.replications runs whose seeds derive from sim_seed (the first is
// sim_seed itself).
ParamSearchResult optimize_params_full_day(std::shared_ptr<const Scenario> scenario, double duration_min,
                                           const ParamSearchConfig& config, std::uint64_t sim_seed,
                                           std::uint64_t search_seed);

// Window objective: from a copy of `base` (paused at t0), run with candidate
// params, admit requests in [t0, t1), continue lookahead_min past t1, and
// score the mean wait of that window's requests. Each entry of
// `alternatives` is another request stream for [t0, t1); the score is then
// the mean over the actual stream and the alternatives, i.e. the window's
// expected wait rather than its wait under one realization.
ParamSearchResult optimize_params_window(const Simulator& base, double t0, double t1, const ParamSearchConfig& config,
                                         std::uint64_t search_seed, std::span<const ModelingParams> initial = {},
                                         std::span<const std::vector<DemandEvent>> alternatives = {});

// Window `index` of a run that used `prefix` params before it.
ParamSearchResult optimize_params_window(std::shared_ptr<const Scenario> scenario, int index,
                                         const ModelingParams& prefix, const ParamSearchConfig& config,
                                         std::uint64_t sim_seed, std::uint64_t search_seed);

// --- training data ----------------------------------------------------------

struct TrainingRecord {
  int day = 0;
  int window = 0;
  FleetSnapshot snapshot;  // at window start, with the window's forecast
  ModelingParams target;
  double wait = 0.0;
  std::int64_t requests = 0;
  bool degenerate = false;

  nlohmann::json to_json() const;
  static TrainingRecord from_json(const nlohmann::json& doc);
};

nlohmann::json snapshot_to_json(const FleetSnapshot& s);
FleetSnapshot snapshot_from_json(const nlohmann::json& doc);

struct TrainingDay {
  std::vector<ModelingParams> schedule;  // optimal params per window
  std::optional<ModelingParams> anchor;  // full-horizon optimum when anchoring
  std::uint64_t sim_seed = 0;
};

struct TrainingData {
  std::vector<TrainingRecord> records;
  std::vector<TrainingDay> days;
};

using DayScenarioFn = std::function<std::shared_ptr<const Scenario>(int day)>;
// Requests of one alternative draw for [t0, t1) of `day`.
using WindowDemandSampler = std::function<std::vector<DemandEvent>(int day, double t0, double t1, int sample)>;

// Each day is one chained run: every window is optimized from the live
// state, then the run advances through the window with the winning params.
// Re-running the day with Strategy::relocation_schedule(days[d].schedule)
// and days[d].sim_seed reproduces the chained trajectory.
// config.window_samples > 0 requires `sampler`.
TrainingData generate_training_data(const DayScenarioFn& day_scenario, int days, const ParamSearchConfig& config,
                                    std::uint64_t seed, int first_day = 0,
                                    const std::function<void(const TrainingRecord&)>& on_record = {},
                                    const WindowDemandSampler& sampler = {});

std::uint64_t day_sim_seed(std::uint64_t seed, int day);

// --- system design ------------------------------------------------------------

struct DesignSearchConfig {
  SystemDesign lb{1, 1, 1, 1, 1};
  SystemDesign ub{15, 6, 150, 200, 3};
  double w_target = 5.0;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int population = 24;
  int generations = 20;
  std::size_t enumeration_limit = 4096;
  int workers = 1;

  void validate() const;
  std::size_t lattice_size() const;
  nlohmann::json to_json() const;
  static DesignSearchConfig from_json(const nlohmann::json& doc);
};

struct DesignEvaluation {
  SystemDesign design;
  CostBreakdown cost;
  double wait = 0.0;
  bool feasible = false;
  double violation = 0.0;  // max(0, wait - w_target)

  nlohmann::json to_json() const;
};

struct DesignResult {
  DesignEvaluation best;
  bool feasible = false;
  std::string method;  // enumeration | evolutionary
  int evaluations = 0;

  nlohmann::json to_json() const;
};

using DesignWaitFn = std::function<double(const SystemDesign&)>;

// Feasible designs rank above infeasible ones; feasible by cost, infeasible
// by violation then cost; remaining ties by the lexicographic decision vector.
bool design_better(const DesignEvaluation& a, const DesignEvaluation& b);

// Lattices up to enumeration_limit points are enumerated exhaustively
// (cheapest first, stopping at the first feasible design). Larger lattices
// use an integer evolutionary search seeded with the lower bound.
DesignResult optimize_system(const DesignWaitFn& wait_fn, const CostConstants& constants,
                             const DesignSearchConfig& config, std::uint64_t seed);

// Wait = mean over config.seeds of run_simulation on the template with the
// candidate design and the stations listed for its N_CS.
DesignResult optimize_system(std::shared_ptr<const Scenario> scenario_template, const Strategy& strategy,
                             double duration_min, const StationTable& stations, const DesignSearchConfig& config,
                             std::uint64_t seed);

// Mean wait (unserved included) of the template with `design`, averaged over seeds.
double design_wait(const Scenario& scenario_template, const SystemDesign& design, const StationTable& stations,
                   const Strategy& strategy, double duration_min, std::span<const std::uint64_t> seeds);

// --- analysis ----------------------------------------------------------------

struct SensitivityRow {
  SelectionMask mask;
  std::vector<double> waits;  // one per seed
  double mean = 0.0;
  double std_error = 0.0;
};

// Masks P1, P1*P2, P1*P3, P1*P2*P3 under common seeds.
std::vector<SensitivityRow> sensitivity_sweep(std::shared_ptr<const Scenario> scenario, const ModelingParams& params,
                                              double duration_min, std::span<const std::uint64_t> seeds,
                                              int workers = 1);

struct FunctionValueRow {
  double O = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
};

// f2 is evaluated at max(0, O), matching how vehicle excess enters selection.
// Throws std::invalid_argument for negative O.
std::vector<FunctionValueRow> function_value_table(const ModelingParams& params, std::span<const double> O_values);

}  // namespace saev
