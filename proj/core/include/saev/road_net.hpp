#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace saev {

struct Node {
  int id = 0;
  double x = 0.0;  // meters
  double y = 0.0;  // meters
};

// Undirected road section.
struct Segment {
  int id = 0;
  int a = 0;
  int b = 0;
  double length_m = 0.0;
};

struct Adjacent {
  int node;
  int segment;
};

// Validated, connected, undirected road graph. Node and segment ids are
// contiguous from zero and equal their index.
class RoadNetwork {
 public:
  RoadNetwork(std::vector<Node> nodes, std::vector<Segment> segments);

  static RoadNetwork from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int segment_count() const { return static_cast<int>(segments_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Segment& segment(int id) const { return segments_[static_cast<std::size_t>(id)]; }

  std::span<const Adjacent> neighbors(int node) const {
    const auto lo = offsets_[static_cast<std::size_t>(node)];
    const auto hi = offsets_[static_cast<std::size_t>(node) + 1];
    return {adjacency_.data() + lo, hi - lo};
  }

  // Shortest segment joining a and b, or -1.
  int segment_between(int a, int b) const;

 private:
  std::vector<Node> nodes_;
  std::vector<Segment> segments_;
  std::vector<std::size_t> offsets_;
  std::vector<Adjacent> adjacency_;
};

RoadNetwork load_network(const nlohmann::json& doc);
RoadNetwork load_network_file(const std::string& path);

// Speed bands of the hourly traffic distribution, km/h.
inline constexpr std::array<double, 4> kBandMidpointsKmh = {15.0, 45.0, 75.0, 105.0};

struct HourTraffic {
  std::array<double, 4> band_probability{};  // [0-30, 30-60, 60-90, 90-120] km/h
  double average_kmh = 0.0;
};

class TrafficProfile {
 public:
  TrafficProfile() = default;
  TrafficProfile(std::array<HourTraffic, 24> hours, double city_average_kmh = 35.8);

  // Hourly Seoul road-speed statistics (24 rows).
  static TrafficProfile seoul_default();
  // Every hour at one speed; convenient for tests.
  static TrafficProfile constant(double kmh);

  static TrafficProfile from_csv(std::istream& in);
  static TrafficProfile from_csv_file(const std::string& path);
  void write_csv(std::ostream& out) const;

  const HourTraffic& hour(int h) const { return hours_[static_cast<std::size_t>(h)]; }
  double city_average_kmh() const { return city_average_kmh_; }

 private:
  void validate() const;

  std::array<HourTraffic, 24> hours_{};
  double city_average_kmh_ = 35.8;
};

enum class SpeedMode { uniform, sampled };

SpeedMode parse_speed_mode(const std::string& s);
std::string to_string(SpeedMode mode);

// uniform: the hour's average speed on every segment. sampled: a band drawn
// per (segment, hour) from the hour's distribution, reported at its midpoint;
// the draw is a pure function of (seed, segment, hour).
double segment_speed(const TrafficProfile& profile, int segment_id, int hour, SpeedMode mode,
                     std::uint64_t seed);

struct SpeedModel {
  TrafficProfile profile;
  SpeedMode mode = SpeedMode::uniform;
  std::uint64_t seed = 0;

  double speed(int segment_id, int hour) const {
    return segment_speed(profile, segment_id, hour, mode, seed);
  }
  std::vector<double> speeds_for_hour(const RoadNetwork& net, int hour) const;
};

inline double edge_minutes(double length_m, double speed_kmh) {
  return length_m / 1000.0 / speed_kmh * 60.0;
}

struct Route {
  std::vector<int> nodes;
  double minutes = 0.0;
  double km = 0.0;
};

// Dijkstra over time weights length / speed. speeds_kmh is indexed by
// segment id. Throws std::runtime_error if `to` is unreachable.
Route shortest_time_path(const RoadNetwork& net, std::span<const double> speeds_kmh, int from, int to);
Route shortest_time_path(const RoadNetwork& net, const SpeedModel& speeds, int from, int to, int hour);

// Single-source shortest-time tree. pred[v] is the predecessor node on the
// tree path (-1 at the source and unreachable nodes).
struct ShortestTree {
  std::vector<double> minutes;
  std::vector<double> km;
  std::vector<int> pred;
};

ShortestTree shortest_time_tree(const RoadNetwork& net, std::span<const double> speeds_kmh, int source);

// All-pairs shortest-time routes for each hour of the day, computed once.
// Read-only after construction and safe to share between simulations.
class RoutingTable {
 public:
  RoutingTable(const RoadNetwork& net, const SpeedModel& speeds);

  int node_count() const { return n_; }
  double minutes(int hour, int from, int to) const { return minutes_[at(hour, from, to)]; }
  double km(int hour, int from, int to) const { return km_[at(hour, from, to)]; }

  // Node sequence with cumulative minutes and km from `from`.
  struct Path {
    std::vector<int> nodes;
    std::vector<double> cum_minutes;
    std::vector<double> cum_km;
  };
  Path path(int hour, int from, int to) const;

 private:
  std::size_t at(int hour, int from, int to) const {
    return (static_cast<std::size_t>(hour) * static_cast<std::size_t>(n_) +
            static_cast<std::size_t>(from)) *
               static_cast<std::size_t>(n_) +
           static_cast<std::size_t>(to);
  }

  int n_ = 0;
  std::vector<double> minutes_;
  std::vector<double> km_;
  std::vector<int> pred_;
};

struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 700.0;
  int rows = 50;
  int cols = 50;

  int cell_count() const { return rows * cols; }
  void validate() const;
};

// Row-major cell index of the half-open cell containing (x, y); points
// outside the grid clamp to the nearest border cell.
int point_to_cell(const GridSpec& grid, double x, double y);
int node_to_cell(const GridSpec& grid, const RoadNetwork& net, int node_id);

}  // namespace saev
