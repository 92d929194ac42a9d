#include "saev/relocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "saev/error.hpp"

namespace saev {

FunctionType parse_function_type(const std::string& s) {
  if (s == "linear") return FunctionType::linear;
  if (s == "concave") return FunctionType::concave;
  if (s == "exp_gauss" || s == "exp-gauss" || s == "exponential_gauss") return FunctionType::exp_gauss;
  throw ConfigError("unknown modeling function type '" + s + "'");
}

std::string to_string(FunctionType type) {
  switch (type) {
    case FunctionType::linear:
      return "linear";
    case FunctionType::concave:
      return "concave";
    case FunctionType::exp_gauss:
      return "exp_gauss";
  }
  return "?";
}

std::size_t param_count(FunctionType type) { return type == FunctionType::linear ? 1 : 2; }

std::vector<std::pair<double, double>> param_bounds(FunctionType type) {
  switch (type) {
    case FunctionType::linear:
      return {{0.0, 15.0}};
    case FunctionType::concave:
      return {{0.0, 10.0}, {1.0, 10.0}};
    case FunctionType::exp_gauss:
      return {{0.0, 5.0}, {0.0, 5.0}};
  }
  return {};
}

bool params_in_bounds(FunctionType type, std::span<const double> params) {
  const auto inside = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  switch (type) {
    case FunctionType::linear:
      return params.size() == 1 && inside(params[0], 0.0, 15.0);
    case FunctionType::concave:
      return params.size() == 2 && inside(params[0], 0.0, 10.0) && inside(params[1], 1.0, 10.0);
    case FunctionType::exp_gauss:
      return params.size() == 2 && inside(params[0], 0.0, 5.0) && inside(params[1], 0.0, 5.0);
  }
  return false;
}

double eval_modeling_function(FunctionType type, std::span<const double> params, double O) {
  if (!params_in_bounds(type, params)) {
    throw std::invalid_argument("modeling function " + to_string(type) + ": parameters out of bounds");
  }
  if (!(O >= 0.0)) throw std::invalid_argument("modeling function: O must be >= 0");
  if (O == 0.0) return 1.0;
  double v = 0.0;
  switch (type) {
    case FunctionType::linear:
      v = 1.0 - params[0] * O;
      break;
    case FunctionType::concave:
      v = 1.0 - params[0] * std::pow(O, params[1]);
      break;
    case FunctionType::exp_gauss:
      v = std::exp(-params[0] * std::pow(O, params[1]));
      break;
  }
  return std::clamp(v, 0.0, 1.0);
}

std::vector<double> ModelingParams::flat() const {
  std::vector<double> out(f1.params);
  out.insert(out.end(), f2.params.begin(), f2.params.end());
  return out;
}

ModelingParams ModelingParams::from_flat(FunctionType t1, FunctionType t2, std::span<const double> values) {
  const auto n1 = param_count(t1);
  const auto n2 = param_count(t2);
  if (values.size() != n1 + n2) throw std::invalid_argument("ModelingParams::from_flat: wrong length");
  ModelingParams p;
  p.f1 = {t1, {values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n1)}};
  p.f2 = {t2, {values.begin() + static_cast<std::ptrdiff_t>(n1), values.end()}};
  return p;
}

void ModelingParams::validate() const {
  if (!params_in_bounds(f1.type, f1.params)) throw ConfigError("f1 parameters out of bounds for " + to_string(f1.type));
  if (!params_in_bounds(f2.type, f2.params)) throw ConfigError("f2 parameters out of bounds for " + to_string(f2.type));
}

nlohmann::json ModelingParams::to_json() const {
  return {{"f1", {{"type", to_string(f1.type)}, {"params", f1.params}}},
          {"f2", {{"type", to_string(f2.type)}, {"params", f2.params}}}};
}

ModelingParams ModelingParams::from_json(const nlohmann::json& doc) {
  ModelingParams p;
  try {
    p.f1 = {parse_function_type(doc.at("f1").at("type").get<std::string>()),
            doc.at("f1").at("params").get<std::vector<double>>()};
    p.f2 = {parse_function_type(doc.at("f2").at("type").get<std::string>()),
            doc.at("f2").at("params").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("modeling params: ") + e.what());
  }
  p.validate();
  return p;
}

std::string SelectionMask::label() const {
  std::string s = "P1";
  if (use_p2) s += "*P2";
  if (use_p3) s += "*P3";
  return s;
}

std::vector<int> cell_anchor_nodes(const GridSpec& grid, const RoadNetwork& net) {
  std::vector<int> anchor(static_cast<std::size_t>(grid.cell_count()), -1);
  std::vector<double> best(anchor.size(), std::numeric_limits<double>::infinity());
  for (int n = 0; n < net.node_count(); ++n) {
    const int c = node_to_cell(grid, net, n);
    const int row = c / grid.cols;
    const int col = c % grid.cols;
    const double cx = grid.origin_x + (col + 0.5) * grid.cell_size;
    const double cy = grid.origin_y + (row + 0.5) * grid.cell_size;
    const auto& nd = net.node(n);
    const double d2 = (nd.x - cx) * (nd.x - cx) + (nd.y - cy) * (nd.y - cy);
    if (d2 < best[static_cast<std::size_t>(c)]) {
      best[static_cast<std::size_t>(c)] = d2;
      anchor[static_cast<std::size_t>(c)] = n;
    }
  }
  return anchor;
}

double vehicle_excess(int cell, std::span<const int> assigned_counts, const DemandForecast& forecast) {
  return static_cast<double>(assigned_counts[static_cast<std::size_t>(cell)]) - forecast.at(cell);
}

std::vector<int> candidate_cells(const DemandForecast& forecast, std::span<const int> anchors, int top_k) {
  std::vector<int> cells;
  for (std::size_t c = 0; c < forecast.expected.size(); ++c) {
    if (forecast.expected[c] > 0.0 && anchors[c] >= 0) cells.push_back(static_cast<int>(c));
  }
  if (top_k > 0 && static_cast<int>(cells.size()) > top_k) {
    std::stable_sort(cells.begin(), cells.end(), [&](int a, int b) { return forecast.at(a) > forecast.at(b); });
    cells.resize(static_cast<std::size_t>(top_k));
    std::sort(cells.begin(), cells.end());
  }
  return cells;
}

std::vector<CandidateScore> selection_scores(std::span<const int> candidates, std::span<const double> distance_km,
                                             const DemandForecast& forecast, std::span<const int> assigned_counts,
                                             const ModelingParams& params, const SelectionMask& mask) {
  if (distance_km.size() != candidates.size()) {
    throw std::invalid_argument("selection_scores: one distance per candidate required");
  }
  std::vector<CandidateScore> out;
  if (candidates.empty()) return out;
  double total = 0.0;
  for (int c : candidates) total += forecast.at(c);
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    CandidateScore s;
    s.cell = candidates[i];
    s.p1 = total > 0.0 ? forecast.at(s.cell) / total : 0.0;
    if (mask.use_p2) s.p2 = params.f1(std::max(0.0, distance_km[i]));
    if (mask.use_p3) s.p3 = params.f2(std::max(0.0, vehicle_excess(s.cell, assigned_counts, forecast)));
    s.product = s.p1 * s.p2 * s.p3;
    out.push_back(s);
  }
  return out;
}

std::vector<CandidateScore> selection_scores(int vehicle_node, std::span<const int> candidates,
                                             std::span<const int> anchors, const DemandForecast& forecast,
                                             std::span<const int> assigned_counts, const ModelingParams& params,
                                             const SelectionMask& mask, const RoutingTable& routes, int hour) {
  std::vector<double> dist(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    dist[i] = routes.km(hour, vehicle_node, anchors[static_cast<std::size_t>(candidates[i])]);
  }
  return selection_scores(candidates, dist, forecast, assigned_counts, params, mask);
}

std::optional<int> select_destination(std::span<const CandidateScore> scores) {
  if (scores.empty()) return std::nullopt;
  const CandidateScore* best = &scores[0];
  for (const auto& s : scores) {
    if (s.product > best->product || (s.product == best->product && s.cell < best->cell)) best = &s;
  }
  return best->cell;
}

}  // namespace saev
