#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "saev/demand.hpp"
#include "saev/road_net.hpp"

namespace saev {

// Shapes of the selection-weight functions.
//   linear     max(0, 1 - x1*O)
//   concave    max(0, 1 - x1*O^x2)
//   exp_gauss  exp(-x1*O^x2)
enum class FunctionType { linear, concave, exp_gauss };

FunctionType parse_function_type(const std::string& s);
std::string to_string(FunctionType type);

std::size_t param_count(FunctionType type);
// Search box for each parameter of `type`.
std::vector<std::pair<double, double>> param_bounds(FunctionType type);
bool params_in_bounds(FunctionType type, std::span<const double> params);

// Value in [0, 1]. O = 0 always yields 1 (0^x2 is taken as 0, including
// x2 = 0). Throws std::invalid_argument for out-of-bounds parameters or O < 0.
double eval_modeling_function(FunctionType type, std::span<const double> params, double O);

struct FunctionSpec {
  FunctionType type = FunctionType::exp_gauss;
  std::vector<double> params;

  double operator()(double O) const { return eval_modeling_function(type, params, O); }
  friend bool operator==(const FunctionSpec&, const FunctionSpec&) = default;
};

// f1 weighs distance (km), f2 weighs vehicle excess.
struct ModelingParams {
  FunctionSpec f1;
  FunctionSpec f2;

  // [f1 params..., f2 params...]
  std::vector<double> flat() const;
  static ModelingParams from_flat(FunctionType f1, FunctionType f2, std::span<const double> values);
  void validate() const;

  nlohmann::json to_json() const;
  static ModelingParams from_json(const nlohmann::json& doc);

  friend bool operator==(const ModelingParams&, const ModelingParams&) = default;
};

// P1 is always on.
struct SelectionMask {
  bool use_p2 = true;
  bool use_p3 = true;

  std::string label() const;
  friend bool operator==(const SelectionMask&, const SelectionMask&) = default;
};

struct CandidateScore {
  int cell = -1;
  double p1 = 0.0;
  double p2 = 1.0;
  double p3 = 1.0;
  double product = 0.0;
};

// Representative node of each grid cell: the cell's node nearest its
// centroid (lowest id on ties); -1 for cells without nodes.
std::vector<int> cell_anchor_nodes(const GridSpec& grid, const RoadNetwork& net);

// Assigned-minus-predicted vehicles at `cell`.
double vehicle_excess(int cell, std::span<const int> assigned_counts, const DemandForecast& forecast);

// Cells with positive forecast and an anchor node, ascending by index.
// top_k > 0 keeps only the top_k cells by forecast (ties to lower index).
std::vector<int> candidate_cells(const DemandForecast& forecast, std::span<const int> anchors, int top_k = 0);

// distance_km[i] is the travel distance from the vehicle to candidates[i].
// Empty candidates give an empty result (no relocation target).
std::vector<CandidateScore> selection_scores(std::span<const int> candidates, std::span<const double> distance_km,
                                             const DemandForecast& forecast, std::span<const int> assigned_counts,
                                             const ModelingParams& params, const SelectionMask& mask);

// Distances taken from the routing table at `hour` to each candidate's anchor.
std::vector<CandidateScore> selection_scores(int vehicle_node, std::span<const int> candidates,
                                             std::span<const int> anchors, const DemandForecast& forecast,
                                             std::span<const int> assigned_counts, const ModelingParams& params,
                                             const SelectionMask& mask, const RoutingTable& routes, int hour);

// Argmax of the product; ties go to the lowest cell index.
std::optional<int> select_destination(std::span<const CandidateScore> scores);

}  // namespace saev
