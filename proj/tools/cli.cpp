#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "saev/error.hpp"
#include "saev/scenario.hpp"

namespace saev::cli {

namespace {

using nlohmann::json;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  int workers = 1;
  std::string format = "json";
};

class Context {
 public:
  Context(const Globals& g, std::ostream& out) : globals_(g), out_(out) {
    config_ = ScenarioConfig::load(g.config_path);
    if (g.seed) config_.seed = *g.seed;
    config_.search.workers = g.workers;
    config_.design_search.workers = g.workers;
    std::filesystem::create_directories(g.out_dir);
  }

  ScenarioConfig& config() { return config_; }
  const City& city() {
    if (!city_) city_ = std::make_unique<City>(config_);
    return *city_;
  }
  std::uint64_t seed() const { return config_.seed; }
  int workers() const { return globals_.workers; }
  bool csv() const { return globals_.format == "csv"; }

  json meta() const {
    return {{"tool_version", kToolVersion}, {"config_digest", config_.digest}, {"seed", config_.seed}};
  }

  std::string path(const std::string& name) const {
    return (std::filesystem::path(globals_.out_dir) / name).string();
  }

  void write_json(const std::string& name, json body) {
    body["meta"] = meta();
    write_text(name, body.dump(2) + "\n");
  }

  void write_text(const std::string& name, const std::string& text) {
    const auto p = path(name);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p);
    f << text;
    out_ << p << '\n';
  }

  // CSV artifacts carry the same metadata as a leading comment line.
  std::string csv_header() const {
    return "# tool_version=" + std::string(kToolVersion) + " config_digest=" + config_.digest +
           " seed=" + std::to_string(config_.seed) + "\n";
  }

 private:
  const Globals& globals_;
  std::ostream& out_;
  ScenarioConfig config_;
  std::unique_ptr<City> city_;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string fmt(double v) { return json(v).dump(); }

std::string report_csv(const SimulationReport& r) {
  std::ostringstream s;
  s << "metric,value\n";
  const auto j = r.to_json(false);
  for (const auto& [k, v] : j.items()) {
    if (v.is_primitive()) s << k << ',' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
  }
  for (std::size_t i = 0; i < kVehicleStateCount; ++i) {
    s << "utilization_" << to_string(static_cast<VehicleState>(i)) << ',' << fmt(r.utilization[i]) << '\n';
  }
  return s.str();
}

void emit_simulation(Context& ctx, const Strategy& strategy, const std::string& stem) {
  const auto& cfg = ctx.config();
  const auto scenario = ctx.city().day_scenario(cfg.day);
  Simulator sim(scenario, strategy, ctx.seed(), ctx.csv());
  sim.set_request_cutoff(cfg.duration_min);
  sim.advance_until(cfg.duration_min);
  const auto report = sim.report();
  if (ctx.csv()) {
    ctx.write_text(stem + ".csv", ctx.csv_header() + report_csv(report));
    std::ostringstream log;
    write_event_log_csv(log, sim.log());
    ctx.write_text(stem + "_events.csv", ctx.csv_header() + log.str());
  } else {
    auto body = report.to_json(true);
    body["strategy"] = strategy.kind == Strategy::Kind::random_motion ? "random" : "relocation";
    if (strategy.kind == Strategy::Kind::relocation) {
      body["params"] = ctx.city().params().to_json();
      body["mask"] = strategy.mask.label();
    }
    ctx.write_json(stem + ".json", body);
  }
}

void cmd_optimize_params(Context& ctx, const std::string& window) {
  const auto& cfg = ctx.config();
  const auto scenario = ctx.city().day_scenario(cfg.day);
  const auto search_seed = derive_seed(ctx.seed(), 0x0b7);
  ParamSearchResult r;
  json scope;
  if (window == "full") {
    r = optimize_params_full_day(scenario, cfg.duration_min, cfg.search, ctx.seed(), search_seed);
    scope = "full";
  } else {
    int index = 0;
    try {
      index = std::stoi(window);
    } catch (const std::exception&) {
      throw ConfigError("--window must be 'full' or a window index");
    }
    if (index < 0 || index >= ctx.city().bins_per_day()) throw ConfigError("--window index out of range");
    r = optimize_params_window(scenario, index, ctx.city().params(), cfg.search, ctx.seed(), search_seed);
    scope = index;
  }
  ctx.write_json("params.json", {{"params", r.params.to_json()},
                                 {"wait", std::isfinite(r.wait) ? json(r.wait) : json()},
                                 {"degenerate", r.degenerate},
                                 {"evaluations", r.evaluations},
                                 {"window", scope},
                                 {"search", cfg.search.to_json()}});
  std::ostringstream trace;
  write_trace_csv(trace, r.trace);
  ctx.write_text("trace.csv", ctx.csv_header() + trace.str());
}

void cmd_gen_data(Context& ctx, int days, int first_day) {
  if (days < 1 || first_day < 0) throw ConfigError("--days must be >= 1 and --first-day >= 0");
  const auto& cfg = ctx.config();
  const auto& city = ctx.city();
  std::ostringstream lines;
  const auto data = generate_training_data([&](int d) { return city.day_scenario(d); }, days, cfg.search, ctx.seed(),
                                           first_day, [&](const TrainingRecord& r) {
                                             auto j = r.to_json();
                                             j["meta"] = ctx.meta();
                                             lines << j.dump() << '\n';
                                           },
                                           cfg.search.window_samples > 0 ? city.window_sampler() : WindowDemandSampler{});
  ctx.write_text("training.jsonl", lines.str());
  json schedules = json::array();
  for (std::size_t i = 0; i < data.days.size(); ++i) {
    json per = json::array();
    for (const auto& p : data.days[i].schedule) per.push_back(p.to_json());
    json entry{{"day", first_day + static_cast<int>(i)}, {"sim_seed", data.days[i].sim_seed}, {"schedule", per}};
    if (data.days[i].anchor) entry["anchor"] = data.days[i].anchor->to_json();
    schedules.push_back(std::move(entry));
  }
  ctx.write_json("schedules.json", {{"days", schedules}, {"search", cfg.search.to_json()}});
}

std::vector<TrainingRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<TrainingRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(TrainingRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  return records;
}

void cmd_train(Context& ctx, const std::string& data_path) {
  const auto records = read_records(data_path);
  auto result = train_surrogate(records, ctx.config().train, ctx.seed());
  result.model.config_digest = ctx.config().digest;
  auto model = result.model.to_json();
  model["meta"] = ctx.meta();
  ctx.write_text("model.json", model.dump() + "\n");
  ctx.write_json("metrics.json", {{"test", result.test.to_json()},
                                  {"train_rows", result.train_rows.size()},
                                  {"test_rows", result.test_rows.size()},
                                  {"usable_records", result.usable},
                                  {"train", ctx.config().train.to_json()}});
}

void cmd_predict(Context& ctx, const std::string& model_path, const std::string& snapshot_path, double at) {
  const auto model = SurrogateModel::from_json(read_json(model_path));
  FleetSnapshot snap;
  if (!snapshot_path.empty()) {
    snap = snapshot_from_json(read_json(snapshot_path));
  } else {
    const auto& cfg = ctx.config();
    if (at < 0.0 || at > cfg.duration_min) throw ConfigError("--at must lie within the simulated horizon");
    Simulator sim(ctx.city().day_scenario(cfg.day), ctx.city().strategy(), ctx.seed());
    sim.advance_until(at);
    snap = sim.snapshot();
  }
  const auto params = predict_params(model, snap);
  ctx.write_json("predicted_params.json",
                 {{"params", params.to_json()}, {"sim_time", snap.sim_time}, {"window_index", snap.window_index}});
}

void cmd_plan_stations(Context& ctx, const std::vector<int>& p_override) {
  auto& cfg = ctx.config();
  if (!p_override.empty()) cfg.p_list = p_override;
  cfg.stations_path.clear();  // always plan, never reuse a table
  const auto& city = ctx.city();
  auto body = station_table_to_json(city.stations());
  json doc = {{"stations", body}};
  ctx.write_json("stations.json", doc);
}

void cmd_optimize_system(Context& ctx, const std::string& stations_path) {
  auto& cfg = ctx.config();
  if (!stations_path.empty()) cfg.stations_path = stations_path;
  const auto& city = ctx.city();
  const auto scenario = city.day_scenario(cfg.day);
  const auto result =
      optimize_system(scenario, city.strategy(), cfg.duration_min, city.stations(), cfg.design_search, ctx.seed());
  ctx.write_json("design.json", {{"result", result.to_json()}, {"design_search", cfg.design_search.to_json()}});
}

void cmd_sensitivity(Context& ctx) {
  const auto& cfg = ctx.config();
  const auto scenario = ctx.city().day_scenario(cfg.day);
  const auto rows = sensitivity_sweep(scenario, ctx.city().params(), cfg.duration_min, cfg.eval_seeds, ctx.workers());
  std::vector<double> random_waits;
  for (const auto s : cfg.eval_seeds) {
    random_waits.push_back(
        run_simulation(scenario, Strategy::random_motion(), cfg.duration_min, s).mean_wait_with_unserved);
  }
  std::vector<double> os;
  for (int i = 0; i <= 20; ++i) os.push_back(i * 0.5);
  const auto fv = function_value_table(ctx.city().params(), os);
  if (ctx.csv()) {
    std::ostringstream s;
    s << ctx.csv_header() << "mask,mean_wait,std_error\n";
    for (const auto& r : rows) s << r.mask.label() << ',' << fmt(r.mean) << ',' << fmt(r.std_error) << '\n';
    ctx.write_text("sensitivity.csv", s.str());
    std::ostringstream f;
    f << ctx.csv_header() << "O,f1,f2\n";
    for (const auto& r : fv) f << fmt(r.O) << ',' << fmt(r.f1) << ',' << fmt(r.f2) << '\n';
    ctx.write_text("function_values.csv", f.str());
    return;
  }
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"mask", r.mask.label()}, {"waits", r.waits}, {"mean_wait", r.mean}, {"std_error", r.std_error}});
  }
  json values = json::array();
  for (const auto& r : fv) values.push_back({{"O", r.O}, {"f1", r.f1}, {"f2", r.f2}});
  double mean_random = 0.0;
  for (double w : random_waits) mean_random += w / static_cast<double>(random_waits.size());
  ctx.write_json("sensitivity.json", {{"rows", table},
                                      {"random_motion", {{"waits", random_waits}, {"mean_wait", mean_random}}},
                                      {"params", ctx.city().params().to_json()},
                                      {"seeds", cfg.eval_seeds},
                                      {"function_values", values}});
}

void structured_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SAEV fleet simulation and optimization", "saev"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kToolVersion));

  Globals g;
  app.add_option("--config", g.config_path, "Scenario configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Simulation seed (overrides the config)");
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Parallel candidate evaluations")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--format", g.format, "Artifact format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Run one day with the configured strategy");
  auto* baseline = app.add_subcommand("baseline", "Run one day with random motion");
  std::string window = "full";
  auto* opt_params = app.add_subcommand("optimize-params", "Optimize modeling parameters");
  opt_params->add_option("--window", window, "'full' or a 30-min window index")->capture_default_str();
  int days = 3;
  int first_day = 0;
  auto* gen = app.add_subcommand("gen-data", "Per-window optimization records for surrogate training");
  gen->add_option("--days", days)->capture_default_str();
  gen->add_option("--first-day", first_day)->capture_default_str();
  std::string data_path;
  auto* train = app.add_subcommand("train-surrogate", "Fit the parameter surrogate");
  train->add_option("--data", data_path, "training.jsonl from gen-data")->required()->check(CLI::ExistingFile);
  std::string model_path;
  std::string snapshot_path;
  double at = 0.0;
  auto* predict = app.add_subcommand("predict-params", "Predict modeling parameters for a snapshot");
  predict->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  predict->add_option("--snapshot", snapshot_path, "Snapshot JSON; default simulates to --at")->check(CLI::ExistingFile);
  predict->add_option("--at", at, "Minutes into the configured day")->capture_default_str();
  std::vector<int> p_list;
  auto* plan = app.add_subcommand("plan-stations", "p-median charging station table");
  plan->add_option("--p", p_list, "Station counts to plan (default from config)")->delimiter(',');
  std::string stations_path;
  auto* opt_system = app.add_subcommand("optimize-system", "Minimum-cost design meeting the wait target");
  opt_system->add_option("--stations", stations_path, "Station table from plan-stations")->check(CLI::ExistingFile);
  auto* sensitivity = app.add_subcommand("sensitivity", "Selection-factor combinations and function values");

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    Context ctx(g, out);
    if (simulate->parsed()) emit_simulation(ctx, ctx.city().strategy(), "report");
    if (baseline->parsed()) emit_simulation(ctx, Strategy::random_motion(), "baseline");
    if (opt_params->parsed()) cmd_optimize_params(ctx, window);
    if (gen->parsed()) cmd_gen_data(ctx, days, first_day);
    if (train->parsed()) cmd_train(ctx, data_path);
    if (predict->parsed()) cmd_predict(ctx, model_path, snapshot_path, at);
    if (plan->parsed()) cmd_plan_stations(ctx, p_list);
    if (opt_system->parsed()) cmd_optimize_system(ctx, stations_path);
    if (sensitivity->parsed()) cmd_sensitivity(ctx);
  } catch (const ConfigError& e) {
    structured_error(err, "config", e.what());
    return 2;
  } catch (const std::exception& e) {
    structured_error(err, "runtime", e.what());
    return 1;
  }
  return 0;
}

}  // namespace saev::cli
