#include "saev/optimizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "saev/error.hpp"
#include "saev/parallel.hpp"
#include "saev/rng.hpp"

namespace saev {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// NaN or failing objectives rank last.
double sanitize(double f) { return std::isnan(f) ? kInf : f; }

void clip(std::vector<double>& x, const BoxBounds& b) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], b.lo[i], b.hi[i]);
}

struct Individual {
  std::vector<double> x;
  double f = kInf;
};

class NelderMead {
 public:
  NelderMead(const Objective& objective, const BoxBounds& bounds) : objective_(objective), bounds_(bounds) {}

  // Returns evaluations used; `best` is improved in place.
  int run(Individual& best, int budget) {
    const std::size_t d = best.x.size();
    if (budget <= 0 || d == 0) return 0;
    int used = 0;
    const auto eval = [&](std::vector<double> x) {
      clip(x, bounds_);
      ++used;
      return Individual{x, sanitize(objective_(x))};
    };

    std::vector<Individual> simplex{best};
    for (std::size_t i = 0; i < d && used < budget; ++i) {
      auto x = best.x;
      const double step = 0.05 * (bounds_.hi[i] - bounds_.lo[i]);
      x[i] = x[i] + step <= bounds_.hi[i] ? x[i] + step : x[i] - step;
      simplex.push_back(eval(x));
    }
    if (simplex.size() < d + 1) return finish(best, simplex, used);

    const auto by_f = [](const Individual& a, const Individual& b) { return a.f < b.f; };
    while (used < budget) {
      std::stable_sort(simplex.begin(), simplex.end(), by_f);
      std::vector<double> centroid(d, 0.0);
      for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t i = 0; i < d; ++i) centroid[i] += simplex[k].x[i] / static_cast<double>(d);
      }
      const auto along = [&](double t) {
        std::vector<double> x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = centroid[i] + t * (simplex[d].x[i] - centroid[i]);
        return x;
      };
      const Individual reflected = eval(along(-1.0));
      if (reflected.f < simplex[0].f) {
        if (used >= budget) {
          simplex[d] = reflected;
          break;
        }
        const Individual expanded = eval(along(-2.0));
        simplex[d] = expanded.f < reflected.f ? expanded : reflected;
      } else if (reflected.f < simplex[d - 1].f) {
        simplex[d] = reflected;
      } else {
        if (used >= budget) break;
        const bool outside = reflected.f < simplex[d].f;
        const Individual contracted = eval(along(outside ? -0.5 : 0.5));
        if (contracted.f < std::min(reflected.f, simplex[d].f)) {
          simplex[d] = contracted;
        } else {
          if (outside && reflected.f < simplex[d].f) simplex[d] = reflected;
          for (std::size_t k = 1; k <= d && used < budget; ++k) {
            std::vector<double> x(d);
            for (std::size_t i = 0; i < d; ++i) x[i] = simplex[0].x[i] + 0.5 * (simplex[k].x[i] - simplex[0].x[i]);
            simplex[k] = eval(x);
          }
        }
      }
    }
    return finish(best, simplex, used);
  }

 private:
  static int finish(Individual& best, const std::vector<Individual>& simplex, int used) {
    for (const auto& s : simplex) {
      if (s.f < best.f) best = s;
    }
    return used;
  }

  const Objective& objective_;
  const BoxBounds& bounds_;
};

}  // namespace

SearchResult minimize_box(const Objective& objective, const BoxBounds& bounds, const SearchBudget& budget,
                          std::uint64_t seed, int workers, std::span<const std::vector<double>> initial) {
  const std::size_t d = bounds.size();
  if (bounds.hi.size() != d) throw std::invalid_argument("minimize_box: bound sizes differ");
  for (std::size_t i = 0; i < d; ++i) {
    if (!(bounds.lo[i] <= bounds.hi[i])) throw std::invalid_argument("minimize_box: lo > hi");
  }
  for (const auto& x : initial) {
    if (x.size() != d) throw std::invalid_argument("minimize_box: initial point has wrong dimension");
  }
  const int pop_size = std::max(2, budget.population);
  const int generations = std::max(1, budget.generations);
  Rng rng(seed);
  SearchResult result;

  const auto evaluate = [&](std::vector<Individual>& pop, std::size_t from) {
    auto fs = parallel_map(pop.size() - from, workers,
                           [&](std::size_t i) { return sanitize(objective(pop[from + i].x)); });
    for (std::size_t i = 0; i < fs.size(); ++i) pop[from + i].f = fs[i];
    result.evaluations += static_cast<int>(fs.size());
  };

  std::vector<Individual> pop(static_cast<std::size_t>(pop_size));
  const std::size_t seeded = std::min(initial.size(), pop.size() - 1);
  for (std::size_t k = 0; k < pop.size(); ++k) {
    if (k < seeded) {
      pop[k].x = initial[k];
      clip(pop[k].x, bounds);
      continue;
    }
    pop[k].x.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      pop[k].x[i] = k == seeded ? 0.5 * (bounds.lo[i] + bounds.hi[i]) : rng.uniform(bounds.lo[i], bounds.hi[i]);
    }
  }
  evaluate(pop, 0);

  const auto by_f = [](const Individual& a, const Individual& b) { return a.f < b.f; };
  const auto tournament = [&]() -> const Individual& {
    const auto& a = pop[rng.index(pop.size())];
    const auto& b = pop[rng.index(pop.size())];
    return b.f < a.f ? b : a;
  };
  const double mutation_rate = d > 0 ? std::max(0.2, 1.0 / static_cast<double>(d)) : 0.0;
  constexpr std::size_t kElite = 2;

  for (int g = 0; g < generations; ++g) {
    std::stable_sort(pop.begin(), pop.end(), by_f);
    result.trace.push_back({g, pop[0].f, pop[0].x});
    if (g + 1 == generations) break;

    std::vector<Individual> next(pop.begin(), pop.begin() + static_cast<std::ptrdiff_t>(kElite));
    while (next.size() < pop.size()) {
      const auto& a = tournament();
      const auto& b = tournament();
      Individual child;
      child.x.resize(d);
      const bool cross = rng.uniform() < 0.9;
      for (std::size_t i = 0; i < d; ++i) {
        double v = a.x[i];
        if (cross) {
          // Blend crossover with alpha = 0.5.
          const double lo = std::min(a.x[i], b.x[i]);
          const double hi = std::max(a.x[i], b.x[i]);
          const double span = hi - lo;
          v = rng.uniform(lo - 0.5 * span, hi + 0.5 * span);
        }
        if (rng.uniform() < mutation_rate) v += 0.1 * (bounds.hi[i] - bounds.lo[i]) * rng.normal();
        child.x[i] = v;
      }
      clip(child.x, bounds);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    evaluate(pop, kElite);
  }

  Individual best = pop.front();
  const int local = NelderMead(objective, bounds).run(best, budget.local_evals);
  result.evaluations += local;
  if (local > 0) result.trace.push_back({generations + 1, best.f, best.x});
  result.x = best.x;
  result.f = best.f;
  return result;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace) {
  out << "generation,best_wait,params\n";
  for (const auto& row : trace) {
    out << row.generation << ',' << nlohmann::json(row.best_f).dump() << ',';
    for (std::size_t i = 0; i < row.best_x.size(); ++i) {
      if (i > 0) out << ' ';
      out << nlohmann::json(row.best_x[i]).dump();
    }
    out << '\n';
  }
}

// --- modeling parameters ------------------------------------------------------

BoxBounds ParamSearchConfig::bounds() const {
  BoxBounds b;
  for (const auto type : {f1_type, f2_type}) {
    for (const auto& [lo, hi] : param_bounds(type)) {
      b.lo.push_back(lo);
      b.hi.push_back(hi);
    }
  }
  return b;
}

nlohmann::json ParamSearchConfig::to_json() const {
  return {{"f1_type", to_string(f1_type)},
          {"f2_type", to_string(f2_type)},
          {"population", budget.population},
          {"generations", budget.generations},
          {"local_evals", budget.local_evals},
          {"use_p2", mask.use_p2},
          {"use_p3", mask.use_p3},
          {"lookahead_min", lookahead_min},
          {"replications", replications},
          {"warm_start", warm_start},
          {"window_samples", window_samples},
          {"anchor_full_day", anchor_full_day}};
}

ParamSearchConfig ParamSearchConfig::from_json(const nlohmann::json& doc) {
  ParamSearchConfig c;
  try {
    c.f1_type = parse_function_type(doc.value("f1_type", to_string(c.f1_type)));
    c.f2_type = parse_function_type(doc.value("f2_type", to_string(c.f2_type)));
    c.budget.population = doc.value("population", c.budget.population);
    c.budget.generations = doc.value("generations", c.budget.generations);
    c.budget.local_evals = doc.value("local_evals", c.budget.local_evals);
    c.mask.use_p2 = doc.value("use_p2", c.mask.use_p2);
    c.mask.use_p3 = doc.value("use_p3", c.mask.use_p3);
    c.lookahead_min = doc.value("lookahead_min", c.lookahead_min);
    c.replications = doc.value("replications", c.replications);
    c.warm_start = doc.value("warm_start", c.warm_start);
    c.window_samples = doc.value("window_samples", c.window_samples);
    c.anchor_full_day = doc.value("anchor_full_day", c.anchor_full_day);
    c.workers = doc.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search config: ") + e.what());
  }
  if (c.budget.population < 2 || c.budget.generations < 1 || c.budget.local_evals < 0) {
    throw ConfigError("search config: population >= 2, generations >= 1, local_evals >= 0 required");
  }
  if (!(c.lookahead_min >= 0.0)) throw ConfigError("search config: lookahead_min must be >= 0");
  if (c.replications < 1) throw ConfigError("search config: replications must be >= 1");
  if (c.window_samples < 0) throw ConfigError("search config: window_samples must be >= 0");
  return c;
}

ModelingParams midpoint_params(FunctionType f1, FunctionType f2) {
  ModelingParams p;
  p.f1.type = f1;
  p.f2.type = f2;
  for (const auto& [lo, hi] : param_bounds(f1)) p.f1.params.push_back(0.5 * (lo + hi));
  for (const auto& [lo, hi] : param_bounds(f2)) p.f2.params.push_back(0.5 * (lo + hi));
  return p;
}

ParamSearchResult optimize_params(const ParamObjective& objective, const ParamSearchConfig& config,
                                  std::uint64_t seed, std::span<const ModelingParams> initial) {
  const auto f1 = config.f1_type;
  const auto f2 = config.f2_type;
  std::vector<std::vector<double>> start;
  for (const auto& p : initial) {
    if (p.f1.type != f1 || p.f2.type != f2) throw std::invalid_argument("optimize_params: warm start has other types");
    start.push_back(p.flat());
  }
  const Objective flat = [&](std::span<const double> x) { return objective(ModelingParams::from_flat(f1, f2, x)); };
  const auto search = minimize_box(flat, config.bounds(), config.budget, seed, config.workers, start);
  ParamSearchResult r;
  r.params = ModelingParams::from_flat(f1, f2, search.x);
  r.wait = search.f;
  r.evaluations = search.evaluations;
  r.trace = search.trace;
  return r;
}

ParamSearchResult optimize_params_full_day(std::shared_ptr<const Scenario> scenario, double duration_min,
                                           const ParamSearchConfig& config, std::uint64_t sim_seed,
                                           std::uint64_t search_seed) {
  const auto objective = [&](const ModelingParams& p) {
    double sum = 0.0;
    for (int r = 0; r < config.replications; ++r) {
      const auto seed = r == 0 ? sim_seed : derive_seed(sim_seed, 0x7e9, static_cast<std::uint64_t>(r));
      sum += run_simulation(scenario, Strategy::relocation(p, config.mask), duration_min, seed).mean_wait_with_unserved;
    }
    return sum / config.replications;
  };
  return optimize_params(objective, config, search_seed);
}

ParamSearchResult optimize_params_window(const Simulator& base, double t0, double t1, const ParamSearchConfig& config,
                                         std::uint64_t search_seed, std::span<const ModelingParams> initial,
                                         std::span<const std::vector<DemandEvent>> alternatives) {
  bool any_requests = base.requests_between(t0, t1) > 0;
  for (const auto& alt : alternatives) any_requests = any_requests || !alt.empty();
  if (!any_requests) {
    ParamSearchResult r;
    r.params = midpoint_params(config.f1_type, config.f2_type);
    r.degenerate = true;
    return r;
  }
  // One paused copy per alternative stream, built once and reused by every candidate.
  std::vector<Simulator> starts{base};
  for (const auto& alt : alternatives) {
    Simulator s = base;
    s.replace_pending_demand(alt);
    starts.push_back(std::move(s));
  }
  const auto objective = [&](const ModelingParams& p) {
    double sum = 0.0;
    int counted = 0;
    for (const auto& start : starts) {
      Simulator sim = start;
      sim.set_strategy(Strategy::relocation(p, config.mask));
      sim.set_request_cutoff(t1);
      sim.advance_until(t1 + config.lookahead_min);
      const double w = sim.window_wait(t0, t1);
      if (std::isnan(w)) continue;
      sum += w;
      ++counted;
    }
    return counted > 0 ? sum / counted : 0.0;
  };
  return optimize_params(objective, config, search_seed, initial);
}

ParamSearchResult optimize_params_window(std::shared_ptr<const Scenario> scenario, int index,
                                         const ModelingParams& prefix, const ParamSearchConfig& config,
                                         std::uint64_t sim_seed, std::uint64_t search_seed) {
  if (index < 0) throw std::invalid_argument("optimize_params_window: negative window index");
  const double t0 = static_cast<double>(index) * scenario->bin_minutes;
  const double t1 = t0 + scenario->bin_minutes;
  Simulator base(scenario, Strategy::relocation(prefix, config.mask), sim_seed);
  base.advance_until(t0);
  return optimize_params_window(base, t0, t1, config, search_seed);
}

// --- training data ------------------------------------------------------------

namespace {

VehicleState parse_state(const std::string& s) {
  for (std::size_t i = 0; i < kVehicleStateCount; ++i) {
    const auto state = static_cast<VehicleState>(i);
    if (to_string(state) == s) return state;
  }
  throw ConfigError("unknown vehicle state: " + s);
}

}  // namespace

nlohmann::json snapshot_to_json(const FleetSnapshot& s) {
  nlohmann::json vehicles = nlohmann::json::array();
  for (const auto& v : s.vehicles) {
    vehicles.push_back(
        {{"id", v.id}, {"state", to_string(v.state)}, {"node", v.node}, {"soc", v.soc}, {"busy_until", v.busy_until}});
  }
  nlohmann::json stations = nlohmann::json::array();
  for (const auto& st : s.stations) {
    nlohmann::json chargers = nlohmann::json::array();
    for (const auto& c : st.chargers) chargers.push_back({{"occupied", c.occupied}, {"free_at", c.free_at}});
    stations.push_back({{"node", st.station_node}, {"chargers", chargers}});
  }
  return {{"sim_time", s.sim_time},
          {"window_index", s.window_index},
          {"slot", s.slot},
          {"bins_per_day", s.bins_per_day},
          {"grid",
           {{"origin_x", s.grid.origin_x},
            {"origin_y", s.grid.origin_y},
            {"cell_size", s.grid.cell_size},
            {"rows", s.grid.rows},
            {"cols", s.grid.cols}}},
          {"vehicles", vehicles},
          {"stations", stations},
          {"forecast", s.demand_window.expected}};
}

FleetSnapshot snapshot_from_json(const nlohmann::json& doc) {
  FleetSnapshot s;
  try {
    s.sim_time = doc.at("sim_time").get<double>();
    s.window_index = doc.at("window_index").get<int>();
    s.slot = doc.at("slot").get<int>();
    s.bins_per_day = doc.at("bins_per_day").get<int>();
    const auto& g = doc.at("grid");
    s.grid.origin_x = g.at("origin_x").get<double>();
    s.grid.origin_y = g.at("origin_y").get<double>();
    s.grid.cell_size = g.at("cell_size").get<double>();
    s.grid.rows = g.at("rows").get<int>();
    s.grid.cols = g.at("cols").get<int>();
    for (const auto& v : doc.at("vehicles")) {
      s.vehicles.push_back({v.at("id").get<int>(), parse_state(v.at("state").get<std::string>()),
                            v.at("node").get<int>(), v.at("soc").get<double>(), v.at("busy_until").get<double>()});
    }
    for (const auto& st : doc.at("stations")) {
      ChargingStationState cs;
      cs.station_node = st.at("node").get<int>();
      for (const auto& c : st.at("chargers")) cs.chargers.push_back({c.at("occupied").get<bool>(), c.at("free_at").get<double>()});
      s.stations.push_back(std::move(cs));
    }
    s.demand_window.expected = doc.at("forecast").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("snapshot: ") + e.what());
  }
  return s;
}

nlohmann::json TrainingRecord::to_json() const {
  return {{"day", day},
          {"window", window},
          {"snapshot", snapshot_to_json(snapshot)},
          {"target", target.to_json()},
          {"wait", std::isfinite(wait) ? nlohmann::json(wait) : nlohmann::json()},
          {"requests", requests},
          {"degenerate", degenerate}};
}

TrainingRecord TrainingRecord::from_json(const nlohmann::json& doc) {
  TrainingRecord r;
  try {
    r.day = doc.at("day").get<int>();
    r.window = doc.at("window").get<int>();
    r.snapshot = snapshot_from_json(doc.at("snapshot"));
    r.target = ModelingParams::from_json(doc.at("target"));
    r.wait = doc.at("wait").is_null() ? std::numeric_limits<double>::quiet_NaN() : doc.at("wait").get<double>();
    r.requests = doc.at("requests").get<std::int64_t>();
    r.degenerate = doc.at("degenerate").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training record: ") + e.what());
  }
  return r;
}

std::uint64_t day_sim_seed(std::uint64_t seed, int day) {
  return derive_seed(seed, 0x5111, static_cast<std::uint64_t>(day));
}

TrainingData generate_training_data(const DayScenarioFn& day_scenario, int days, const ParamSearchConfig& config,
                                    std::uint64_t seed, int first_day,
                                    const std::function<void(const TrainingRecord&)>& on_record,
                                    const WindowDemandSampler& sampler) {
  if (config.window_samples > 0 && !sampler) {
    throw std::invalid_argument("generate_training_data: window_samples > 0 needs a demand sampler");
  }
  TrainingData data;
  const auto midpoint = midpoint_params(config.f1_type, config.f2_type);
  for (int day = first_day; day < first_day + days; ++day) {
    const auto scenario = day_scenario(day);
    const double bin = scenario->bin_minutes;
    const int windows = 24 * 60 / scenario->bin_minutes;
    TrainingDay td;
    td.sim_seed = day_sim_seed(seed, day);
    if (config.anchor_full_day) {
      td.anchor = optimize_params_full_day(scenario, 24.0 * 60.0, config, td.sim_seed,
                                           derive_seed(seed, 0xa7c, static_cast<std::uint64_t>(day)))
                      .params;
    }
    // Empty windows keep the anchor when there is one.
    const auto fallback = td.anchor.value_or(midpoint);
    Simulator base(scenario, Strategy::relocation(fallback, config.mask), td.sim_seed);
    for (int k = 0; k < windows; ++k) {
      const double t0 = k * bin;
      const double t1 = t0 + bin;
      base.advance_until(t0);
      TrainingRecord rec;
      rec.day = day;
      rec.window = k;
      rec.snapshot = base.snapshot();
      rec.requests = base.requests_between(t0, t1);
      const auto search_seed = derive_seed(seed, static_cast<std::uint64_t>(day), static_cast<std::uint64_t>(k));
      std::vector<ModelingParams> warm;
      if (td.anchor) warm.push_back(*td.anchor);
      if (config.warm_start && k > 0) warm.push_back(td.schedule.back());
      std::vector<std::vector<DemandEvent>> alternatives;
      for (int r = 0; r < config.window_samples; ++r) alternatives.push_back(sampler(day, t0, t1, r));
      const auto best = optimize_params_window(base, t0, t1, config, search_seed, warm, alternatives);
      rec.target = best.degenerate ? fallback : best.params;
      rec.wait = best.degenerate ? std::numeric_limits<double>::quiet_NaN() : best.wait;
      rec.degenerate = best.degenerate;
      base.set_strategy(Strategy::relocation(rec.target, config.mask));
      td.schedule.push_back(rec.target);
      if (on_record) on_record(rec);
      data.records.push_back(std::move(rec));
    }
    data.days.push_back(std::move(td));
  }
  return data;
}

// --- system design --------------------------------------------------------------

namespace {

constexpr std::size_t kDesignGenes = 5;
using Genes = std::array<int, kDesignGenes>;

Genes genes_of(const SystemDesign& d) { return {d.n_cs, d.n_charger, d.n_saev, d.n_series, d.n_parallel}; }

SystemDesign design_of(const Genes& g, double gear_ratio) {
  SystemDesign d;
  d.n_cs = g[0];
  d.n_charger = g[1];
  d.n_saev = g[2];
  d.n_series = g[3];
  d.n_parallel = g[4];
  d.gear_ratio = gear_ratio;
  return d;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

void DesignSearchConfig::validate() const {
  lb.validate();
  ub.validate();
  const auto lo = genes_of(lb);
  const auto hi = genes_of(ub);
  for (std::size_t i = 0; i < kDesignGenes; ++i) {
    if (lo[i] > hi[i]) throw ConfigError("design search: lower bound exceeds upper bound");
  }
  if (std::isnan(w_target)) throw ConfigError("design search: w_target must be a number");
  if (seeds.empty()) throw ConfigError("design search: at least one seed required");
  if (population < 2 || generations < 1) throw ConfigError("design search: population >= 2, generations >= 1");
}

std::size_t DesignSearchConfig::lattice_size() const {
  const auto lo = genes_of(lb);
  const auto hi = genes_of(ub);
  std::size_t n = 1;
  for (std::size_t i = 0; i < kDesignGenes; ++i) {
    const auto span = static_cast<std::size_t>(hi[i] - lo[i] + 1);
    if (n > std::numeric_limits<std::size_t>::max() / span) return std::numeric_limits<std::size_t>::max();
    n *= span;
  }
  return n;
}

nlohmann::json DesignSearchConfig::to_json() const {
  return {{"lb", lb.to_json()},
          {"ub", ub.to_json()},
          {"w_target", std::isfinite(w_target) ? nlohmann::json(w_target) : nlohmann::json("inf")},
          {"seeds", seeds},
          {"population", population},
          {"generations", generations},
          {"enumeration_limit", enumeration_limit}};
}

DesignSearchConfig DesignSearchConfig::from_json(const nlohmann::json& doc) {
  DesignSearchConfig c;
  try {
    if (doc.contains("lb")) c.lb = SystemDesign::from_json(doc.at("lb"));
    if (doc.contains("ub")) c.ub = SystemDesign::from_json(doc.at("ub"));
    if (doc.contains("w_target")) {
      const auto& w = doc.at("w_target");
      c.w_target = w.is_string() && w.get<std::string>() == "inf" ? kInf : w.get<double>();
    }
    c.seeds = doc.value("seeds", c.seeds);
    c.population = doc.value("population", c.population);
    c.generations = doc.value("generations", c.generations);
    c.enumeration_limit = doc.value("enumeration_limit", c.enumeration_limit);
    c.workers = doc.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("design search: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json DesignEvaluation::to_json() const {
  return {{"design", design.to_json()},
          {"cost", cost.to_json()},
          {"wait", finite_or_null(wait)},
          {"feasible", feasible},
          {"violation", finite_or_null(violation)}};
}

nlohmann::json DesignResult::to_json() const {
  return {{"best", best.to_json()}, {"feasible", feasible}, {"method", method}, {"evaluations", evaluations}};
}

bool design_better(const DesignEvaluation& a, const DesignEvaluation& b) {
  if (a.feasible != b.feasible) return a.feasible;
  if (!a.feasible && a.violation != b.violation) return a.violation < b.violation;
  if (a.cost.total != b.cost.total) return a.cost.total < b.cost.total;
  return genes_of(a.design) < genes_of(b.design);
}

DesignResult optimize_system(const DesignWaitFn& wait_fn, const CostConstants& constants,
                             const DesignSearchConfig& config, std::uint64_t seed) {
  config.validate();
  const auto lo = genes_of(config.lb);
  const auto hi = genes_of(config.ub);
  const double gear = config.lb.gear_ratio;

  const auto make_eval = [&](const Genes& g) {
    DesignEvaluation e;
    e.design = design_of(g, gear);
    e.cost = system_cost(e.design, constants);
    return e;
  };
  const auto score = [&](std::vector<DesignEvaluation>& batch) {
    auto waits = parallel_map(batch.size(), config.workers, [&](std::size_t i) { return wait_fn(batch[i].design); });
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto& e = batch[i];
      e.wait = std::isnan(waits[i]) ? kInf : waits[i];
      e.feasible = e.wait <= config.w_target;
      e.violation = e.feasible ? 0.0 : e.wait - config.w_target;
    }
  };

  DesignResult result;
  if (config.lattice_size() <= config.enumeration_limit) {
    result.method = "enumeration";
    std::vector<DesignEvaluation> all;
    Genes g = lo;
    while (true) {
      all.push_back(make_eval(g));
      std::size_t i = kDesignGenes;
      while (i > 0 && g[i - 1] == hi[i - 1]) {
        g[i - 1] = lo[i - 1];
        --i;
      }
      if (i == 0) break;
      ++g[i - 1];
    }
    // Cheapest first: the first feasible design found is optimal.
    std::stable_sort(all.begin(), all.end(), [](const DesignEvaluation& a, const DesignEvaluation& b) {
      if (a.cost.total != b.cost.total) return a.cost.total < b.cost.total;
      return genes_of(a.design) < genes_of(b.design);
    });
    // Fixed chunk so the evaluation count does not depend on the worker count.
    constexpr std::size_t chunk = 8;
    std::optional<DesignEvaluation> best;
    for (std::size_t start = 0; start < all.size(); start += chunk) {
      std::vector<DesignEvaluation> batch(all.begin() + static_cast<std::ptrdiff_t>(start),
                                          all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), start + chunk)));
      score(batch);
      result.evaluations += static_cast<int>(batch.size());
      bool found = false;
      for (const auto& e : batch) {
        if (!best || design_better(e, *best)) best = e;
        found = found || e.feasible;
      }
      if (found) break;
    }
    result.best = *best;
    result.feasible = best->feasible;
    return result;
  }

  result.method = "evolutionary";
  Rng rng(seed);
  std::map<Genes, DesignEvaluation> memo;
  const auto evaluate_all = [&](const std::vector<Genes>& genes) {
    std::vector<DesignEvaluation> fresh;
    for (const auto& g : genes) {
      if (memo.count(g) == 0 &&
          std::none_of(fresh.begin(), fresh.end(), [&](const DesignEvaluation& e) { return genes_of(e.design) == g; })) {
        fresh.push_back(make_eval(g));
      }
    }
    score(fresh);
    result.evaluations += static_cast<int>(fresh.size());
    for (auto& e : fresh) memo.emplace(genes_of(e.design), e);
  };
  const auto random_genes = [&] {
    Genes g;
    for (std::size_t i = 0; i < kDesignGenes; ++i) {
      g[i] = lo[i] + static_cast<int>(rng.index(static_cast<std::size_t>(hi[i] - lo[i] + 1)));
    }
    return g;
  };
  const auto better_genes = [&](const Genes& a, const Genes& b) { return design_better(memo.at(a), memo.at(b)); };

  std::vector<Genes> pop{lo, hi};
  while (pop.size() < static_cast<std::size_t>(config.population)) pop.push_back(random_genes());
  evaluate_all(pop);
  for (int gen = 1; gen < config.generations; ++gen) {
    std::stable_sort(pop.begin(), pop.end(), better_genes);
    std::vector<Genes> next(pop.begin(), pop.begin() + 2);
    const auto tournament = [&]() -> const Genes& {
      const auto& a = pop[rng.index(pop.size())];
      const auto& b = pop[rng.index(pop.size())];
      return better_genes(b, a) ? b : a;
    };
    while (next.size() < pop.size()) {
      const auto& a = tournament();
      const auto& b = tournament();
      Genes child;
      for (std::size_t i = 0; i < kDesignGenes; ++i) {
        child[i] = rng.uniform() < 0.5 ? a[i] : b[i];
        if (rng.uniform() < 0.2) {
          const double scale = std::max(1.0, 0.1 * (hi[i] - lo[i]));
          int step = static_cast<int>(std::lround(scale * rng.normal()));
          if (step == 0) step = rng.uniform() < 0.5 ? -1 : 1;
          child[i] = std::clamp(child[i] + step, lo[i], hi[i]);
        }
      }
      next.push_back(child);
    }
    pop = std::move(next);
    evaluate_all(pop);
  }
  const DesignEvaluation* best = nullptr;
  for (const auto& [g, e] : memo) {
    if (!best || design_better(e, *best)) best = &e;
  }
  result.best = *best;
  result.feasible = best->feasible;
  return result;
}

double design_wait(const Scenario& scenario_template, const SystemDesign& design, const StationTable& stations,
                   const Strategy& strategy, double duration_min, std::span<const std::uint64_t> seeds) {
  const auto row = stations.find(design.n_cs);
  if (row == stations.end()) {
    throw ConfigError("station table has no entry for N_CS = " + std::to_string(design.n_cs));
  }
  auto scenario = std::make_shared<Scenario>(scenario_template);
  scenario->design = design;
  scenario->station_nodes = row->second;
  double sum = 0.0;
  for (const auto s : seeds) sum += run_simulation(scenario, strategy, duration_min, s).mean_wait_with_unserved;
  return sum / static_cast<double>(seeds.size());
}

DesignResult optimize_system(std::shared_ptr<const Scenario> scenario_template, const Strategy& strategy,
                             double duration_min, const StationTable& stations, const DesignSearchConfig& config,
                             std::uint64_t seed) {
  const auto wait_fn = [&](const SystemDesign& d) {
    return design_wait(*scenario_template, d, stations, strategy, duration_min, config.seeds);
  };
  return optimize_system(wait_fn, scenario_template->constants, config, seed);
}

// --- analysis ---------------------------------------------------------------------

std::vector<SensitivityRow> sensitivity_sweep(std::shared_ptr<const Scenario> scenario, const ModelingParams& params,
                                              double duration_min, std::span<const std::uint64_t> seeds,
                                              int workers) {
  const std::array<SelectionMask, 4> masks{
      SelectionMask{false, false}, SelectionMask{true, false}, SelectionMask{false, true}, SelectionMask{true, true}};
  const std::size_t n_seeds = seeds.size();
  const auto waits = parallel_map(masks.size() * n_seeds, workers, [&](std::size_t i) {
    const auto& mask = masks[i / n_seeds];
    return run_simulation(scenario, Strategy::relocation(params, mask), duration_min, seeds[i % n_seeds])
        .mean_wait_with_unserved;
  });
  std::vector<SensitivityRow> rows;
  for (std::size_t m = 0; m < masks.size(); ++m) {
    SensitivityRow row;
    row.mask = masks[m];
    row.waits.assign(waits.begin() + static_cast<std::ptrdiff_t>(m * n_seeds),
                     waits.begin() + static_cast<std::ptrdiff_t>((m + 1) * n_seeds));
    if (!row.waits.empty()) {
      const double n = static_cast<double>(row.waits.size());
      row.mean = std::accumulate(row.waits.begin(), row.waits.end(), 0.0) / n;
      if (row.waits.size() > 1) {
        double ss = 0.0;
        for (double w : row.waits) ss += (w - row.mean) * (w - row.mean);
        row.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<FunctionValueRow> function_value_table(const ModelingParams& params, std::span<const double> O_values) {
  std::vector<FunctionValueRow> rows;
  for (double O : O_values) rows.push_back({O, params.f1(O), params.f2(std::max(0.0, O))});
  return rows;
}

}  // namespace saev
