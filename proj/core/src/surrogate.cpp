#include "saev/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "saev/error.hpp"
#include "saev/rng.hpp"

namespace saev {

namespace {

// Linear interpolation between order statistics.
double quantile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::size_t feature_count(int pooling) {
  return static_cast<std::size_t>(pooling * pooling) + 1 + kVehicleStateCount + 5 + 2 + 4;
}

std::vector<double> extract_features(const FleetSnapshot& s, int pooling) {
  if (pooling < 1) throw std::invalid_argument("extract_features: pooling must be >= 1");
  std::vector<double> f(feature_count(pooling), 0.0);
  const auto& g = s.grid;
  const auto& demand = s.demand_window.expected;
  double total = 0.0;
  for (int cell = 0; cell < static_cast<int>(demand.size()) && cell < g.cell_count(); ++cell) {
    const double d = demand[static_cast<std::size_t>(cell)];
    const int pr = (cell / g.cols) * pooling / g.rows;
    const int pc = (cell % g.cols) * pooling / g.cols;
    f[static_cast<std::size_t>(pr * pooling + pc)] += d;
    total += d;
  }
  std::size_t at = static_cast<std::size_t>(pooling * pooling);
  f[at++] = total;

  std::vector<double> soc;
  for (const auto& v : s.vehicles) {
    f[at + static_cast<std::size_t>(v.state)] += 1.0;
    soc.push_back(v.soc);
  }
  at += kVehicleStateCount;
  std::sort(soc.begin(), soc.end());
  if (!soc.empty()) {
    f[at] = std::accumulate(soc.begin(), soc.end(), 0.0) / static_cast<double>(soc.size());
    f[at + 1] = soc.front();
    f[at + 2] = quantile(soc, 0.25);
    f[at + 3] = quantile(soc, 0.5);
    f[at + 4] = quantile(soc, 0.75);
  }
  at += 5;

  std::size_t chargers = 0;
  std::size_t occupied = 0;
  double to_free = 0.0;
  for (const auto& st : s.stations) {
    for (const auto& c : st.chargers) {
      ++chargers;
      if (c.occupied) {
        ++occupied;
        to_free += std::max(0.0, c.free_at - s.sim_time);
      }
    }
  }
  f[at++] = chargers > 0 ? static_cast<double>(occupied) / static_cast<double>(chargers) : 0.0;
  f[at++] = occupied > 0 ? to_free / static_cast<double>(occupied) : 0.0;

  const int per_day = std::max(1, s.bins_per_day);
  const int slot = s.slot;
  const double day_frac = static_cast<double>(((slot % per_day) + per_day) % per_day) / per_day;
  const int dow = ((slot / per_day) % 7 + 7) % 7;
  constexpr double kTau = 2.0 * std::numbers::pi;
  f[at++] = std::sin(kTau * day_frac);
  f[at++] = std::cos(kTau * day_frac);
  f[at++] = std::sin(kTau * dow / 7.0);
  f[at++] = std::cos(kTau * dow / 7.0);
  return f;
}

std::vector<double> ScalerState::apply(std::span<const double> v) const {
  if (v.size() != min.size()) throw std::invalid_argument("scaler: feature count mismatch");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double range = max[i] - min[i];
    out[i] = range > 0.0 ? (v[i] - min[i]) / range : 0.0;
  }
  return out;
}

ScalerState fit_scaler(std::span<const std::vector<double>> features) {
  if (features.empty()) throw std::invalid_argument("fit_scaler: empty training set");
  ScalerState s{features.front(), features.front()};
  for (const auto& v : features) {
    if (v.size() != s.min.size()) throw std::invalid_argument("fit_scaler: ragged features");
    for (std::size_t i = 0; i < v.size(); ++i) {
      s.min[i] = std::min(s.min[i], v[i]);
      s.max[i] = std::max(s.max[i], v[i]);
    }
  }
  return s;
}

double forward_target(double x) { return std::log(x + kTargetEpsilon); }
double inverse_target(double y) { return std::exp(y) - kTargetEpsilon; }

std::string to_string(LearnerKind kind) { return kind == LearnerKind::knn ? "knn" : "ridge"; }

LearnerKind parse_learner_kind(const std::string& s) {
  if (s == "knn") return LearnerKind::knn;
  if (s == "ridge") return LearnerKind::ridge;
  throw ConfigError("unknown learner: " + s);
}

// --- k-NN ------------------------------------------------------------------------

void KnnRegressor::fit(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  if (x.empty() || x.size() != y.size()) throw std::invalid_argument("knn: need matching, non-empty x and y");
  if (k_ < 1) throw std::invalid_argument("knn: k must be >= 1");
  x_ = x;
  y_ = y;
}

std::vector<double> KnnRegressor::predict(std::span<const double> x) const {
  if (x_.empty()) throw std::logic_error("knn: not fitted");
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(x_.size());
  for (std::size_t i = 0; i < x_.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) d2 += (x[j] - x_[i][j]) * (x[j] - x_[i][j]);
    dist.emplace_back(std::sqrt(d2), i);
  }
  const auto k = std::min(static_cast<std::size_t>(k_), dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

  const std::size_t dims = y_.front().size();
  std::vector<double> out(dims, 0.0);
  std::size_t exact = 0;
  for (std::size_t n = 0; n < k && dist[n].first == 0.0; ++n) {
    for (std::size_t t = 0; t < dims; ++t) out[t] += y_[dist[n].second][t];
    ++exact;
  }
  if (exact > 0) {
    for (auto& v : out) v /= static_cast<double>(exact);
    return out;
  }
  double wsum = 0.0;
  for (std::size_t n = 0; n < k; ++n) {
    const double w = 1.0 / dist[n].first;
    wsum += w;
    for (std::size_t t = 0; t < dims; ++t) out[t] += w * y_[dist[n].second][t];
  }
  for (auto& v : out) v /= wsum;
  return out;
}

nlohmann::json KnnRegressor::to_json() const { return {{"kind", "knn"}, {"k", k_}, {"x", x_}, {"y", y_}}; }

std::unique_ptr<KnnRegressor> KnnRegressor::from_json(const nlohmann::json& doc) {
  auto r = std::make_unique<KnnRegressor>(doc.at("k").get<int>());
  r->fit(doc.at("x").get<std::vector<std::vector<double>>>(), doc.at("y").get<std::vector<std::vector<double>>>());
  return r;
}

// --- ridge -----------------------------------------------------------------------

namespace {

// Solves A x = b for symmetric positive definite A (Cholesky).
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) throw std::runtime_error("ridge: system not positive definite");
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= a[i * n + k] * b[k];
    b[i] /= a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) b[i] -= a[k * n + i] * b[k];
    b[i] /= a[i * n + i];
  }
  return b;
}

}  // namespace

void RidgeRegressor::fit(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  if (x.empty() || x.size() != y.size()) throw std::invalid_argument("ridge: need matching, non-empty x and y");
  if (!(lambda_ > 0.0)) throw std::invalid_argument("ridge: lambda must be > 0");
  const std::size_t n = x.size();
  const std::size_t d = x.front().size();
  const std::size_t t = y.front().size();
  std::vector<double> xm(d, 0.0);
  std::vector<double> ym(t, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) xm[j] += x[r][j] / static_cast<double>(n);
    for (std::size_t j = 0; j < t; ++j) ym[j] += y[r][j] / static_cast<double>(n);
  }
  std::vector<double> gram(d * d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x[r][i] - xm[i];
      for (std::size_t j = 0; j < d; ++j) gram[i * d + j] += xi * (x[r][j] - xm[j]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) gram[i * d + i] += lambda_;
  weights_.assign(t, {});
  intercept_.assign(t, 0.0);
  for (std::size_t target = 0; target < t; ++target) {
    std::vector<double> rhs(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const double yc = y[r][target] - ym[target];
      for (std::size_t i = 0; i < d; ++i) rhs[i] += (x[r][i] - xm[i]) * yc;
    }
    weights_[target] = solve_spd(gram, rhs, d);
    double b = ym[target];
    for (std::size_t i = 0; i < d; ++i) b -= weights_[target][i] * xm[i];
    intercept_[target] = b;
  }
}

std::vector<double> RidgeRegressor::predict(std::span<const double> x) const {
  if (weights_.empty()) throw std::logic_error("ridge: not fitted");
  std::vector<double> out(weights_.size());
  for (std::size_t t = 0; t < weights_.size(); ++t) {
    double v = intercept_[t];
    for (std::size_t i = 0; i < x.size(); ++i) v += weights_[t][i] * x[i];
    out[t] = v;
  }
  return out;
}

nlohmann::json RidgeRegressor::to_json() const {
  return {{"kind", "ridge"}, {"lambda", lambda_}, {"weights", weights_}, {"intercept", intercept_}};
}

std::unique_ptr<RidgeRegressor> RidgeRegressor::from_json(const nlohmann::json& doc) {
  auto r = std::make_unique<RidgeRegressor>(doc.at("lambda").get<double>());
  r->weights_ = doc.at("weights").get<std::vector<std::vector<double>>>();
  r->intercept_ = doc.at("intercept").get<std::vector<double>>();
  return r;
}

// --- model ------------------------------------------------------------------------

SurrogateModel::SurrogateModel(std::unique_ptr<Regressor> learner, ScalerState scaler, int pooling, FunctionType f1,
                               FunctionType f2)
    : learner_(std::move(learner)), scaler_(std::move(scaler)), pooling_(pooling), f1_(f1), f2_(f2) {}

const Regressor& SurrogateModel::learner() const {
  if (!learner_) throw std::logic_error("surrogate: model is not trained");
  return *learner_;
}

ModelingParams SurrogateModel::predict(const FleetSnapshot& snapshot) const {
  const auto& reg = learner();
  const auto raw = reg.predict(scaler_.apply(extract_features(snapshot, pooling_)));
  std::vector<double> values(raw.size());
  std::vector<std::pair<double, double>> bounds = param_bounds(f1_);
  const auto b2 = param_bounds(f2_);
  bounds.insert(bounds.end(), b2.begin(), b2.end());
  if (raw.size() != bounds.size()) throw std::logic_error("surrogate: target count does not match function types");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    values[i] = std::clamp(inverse_target(raw[i]), bounds[i].first, bounds[i].second);
  }
  return ModelingParams::from_flat(f1_, f2_, values);
}

nlohmann::json SurrogateModel::to_json() const {
  return {{"format", "saev-surrogate"},
          {"version", 1},
          {"learner", learner().to_json()},
          {"scaler", {{"min", scaler_.min}, {"max", scaler_.max}}},
          {"pooling", pooling_},
          {"target_transform", {{"kind", "log"}, {"epsilon", kTargetEpsilon}}},
          {"f1_type", to_string(f1_)},
          {"f2_type", to_string(f2_)},
          {"config_digest", config_digest}};
}

SurrogateModel SurrogateModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", std::string{}) != "saev-surrogate") throw ConfigError("not a surrogate model artifact");
    const auto& l = doc.at("learner");
    std::unique_ptr<Regressor> learner;
    if (parse_learner_kind(l.at("kind").get<std::string>()) == LearnerKind::knn) {
      learner = KnnRegressor::from_json(l);
    } else {
      learner = RidgeRegressor::from_json(l);
    }
    ScalerState scaler{doc.at("scaler").at("min").get<std::vector<double>>(),
                       doc.at("scaler").at("max").get<std::vector<double>>()};
    SurrogateModel m(std::move(learner), std::move(scaler), doc.at("pooling").get<int>(),
                     parse_function_type(doc.at("f1_type").get<std::string>()),
                     parse_function_type(doc.at("f2_type").get<std::string>()));
    m.config_digest = doc.value("config_digest", std::string{});
    if (m.scaler_.min.size() != feature_count(m.pooling_) || m.scaler_.max.size() != m.scaler_.min.size()) {
      throw ConfigError("surrogate: scaler size does not match pooling");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("surrogate model: ") + e.what());
  }
}

SurrogateModel SurrogateModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(doc);
}

void SurrogateModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump() << '\n';
}

ModelingParams predict_params(const SurrogateModel& model, const FleetSnapshot& snapshot) {
  return model.predict(snapshot);
}

ParamsSource surrogate_source(std::shared_ptr<const SurrogateModel> model) {
  if (!model || !model->trained()) throw std::logic_error("surrogate_source: model is not trained");
  return [model](const FleetSnapshot& s) { return model->predict(s); };
}

// --- training ----------------------------------------------------------------------

nlohmann::json TrainConfig::to_json() const {
  return {{"learner", to_string(learner)},
          {"k", k},
          {"ridge_lambda", ridge_lambda},
          {"train_fraction", train_fraction},
          {"chronological", chronological},
          {"include_degenerate", include_degenerate},
          {"pooling", pooling}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  try {
    c.learner = parse_learner_kind(doc.value("learner", to_string(c.learner)));
    c.k = doc.value("k", c.k);
    c.ridge_lambda = doc.value("ridge_lambda", c.ridge_lambda);
    c.train_fraction = doc.value("train_fraction", c.train_fraction);
    c.chronological = doc.value("chronological", c.chronological);
    c.include_degenerate = doc.value("include_degenerate", c.include_degenerate);
    c.pooling = doc.value("pooling", c.pooling);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (c.k < 1 || !(c.ridge_lambda > 0.0) || !(c.train_fraction > 0.0 && c.train_fraction < 1.0) || c.pooling < 1) {
    throw ConfigError("train config: k >= 1, ridge_lambda > 0, 0 < train_fraction < 1, pooling >= 1 required");
  }
  return c;
}

nlohmann::json SurrogateMetrics::to_json() const {
  return {{"rmse", rmse},
          {"mae", mae},
          {"rmse_per_param", rmse_per_param},
          {"mae_per_param", mae_per_param},
          {"count", count}};
}

SurrogateMetrics evaluate_surrogate(const SurrogateModel& model, std::span<const TrainingRecord> records) {
  SurrogateMetrics m;
  double se = 0.0;
  double ae = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    const auto truth = r.target.flat();
    const auto pred = model.predict(r.snapshot).flat();
    if (m.rmse_per_param.empty()) {
      m.rmse_per_param.assign(truth.size(), 0.0);
      m.mae_per_param.assign(truth.size(), 0.0);
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const double e = pred[i] - truth[i];
      m.rmse_per_param[i] += e * e;
      m.mae_per_param[i] += std::abs(e);
      se += e * e;
      ae += std::abs(e);
      ++n;
    }
    ++m.count;
  }
  if (m.count == 0) return m;
  for (std::size_t i = 0; i < m.rmse_per_param.size(); ++i) {
    m.rmse_per_param[i] = std::sqrt(m.rmse_per_param[i] / static_cast<double>(m.count));
    m.mae_per_param[i] /= static_cast<double>(m.count);
  }
  m.rmse = std::sqrt(se / static_cast<double>(n));
  m.mae = ae / static_cast<double>(n);
  return m;
}

TrainResult train_surrogate(std::span<const TrainingRecord> records, const TrainConfig& config, std::uint64_t seed) {
  std::vector<const TrainingRecord*> usable;
  for (const auto& r : records) {
    if (config.include_degenerate || !r.degenerate) usable.push_back(&r);
  }
  if (usable.size() < 10) {
    throw ConfigError("train_surrogate: need at least 10 usable records, have " + std::to_string(usable.size()));
  }
  const auto f1 = usable.front()->target.f1.type;
  const auto f2 = usable.front()->target.f2.type;
  for (const auto* r : usable) {
    if (r->target.f1.type != f1 || r->target.f2.type != f2) {
      throw ConfigError("train_surrogate: records mix modeling function types");
    }
  }

  TrainResult result;
  result.usable = usable.size();
  std::vector<std::size_t> order(usable.size());
  std::iota(order.begin(), order.end(), 0);
  if (!config.chronological) {
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  }
  auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(usable.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, usable.size() - 1);
  result.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  result.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

  std::vector<std::vector<double>> features;
  std::vector<std::vector<double>> targets;
  for (const auto i : result.train_rows) {
    features.push_back(extract_features(usable[i]->snapshot, config.pooling));
    auto t = usable[i]->target.flat();
    for (auto& v : t) v = forward_target(v);
    targets.push_back(std::move(t));
  }
  auto scaler = fit_scaler(features);
  for (auto& f : features) f = scaler.apply(f);

  std::unique_ptr<Regressor> learner;
  if (config.learner == LearnerKind::knn) {
    learner = std::make_unique<KnnRegressor>(config.k);
  } else {
    learner = std::make_unique<RidgeRegressor>(config.ridge_lambda);
  }
  learner->fit(features, targets);
  result.model = SurrogateModel(std::move(learner), std::move(scaler), config.pooling, f1, f2);

  std::vector<TrainingRecord> test;
  for (const auto i : result.test_rows) test.push_back(*usable[i]);
  result.test = evaluate_surrogate(result.model, test);
  return result;
}

}  // namespace saev
