#include "saev/road_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "saev/error.hpp"
#include "saev/rng.hpp"

namespace saev {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void malformed(const std::string& what) {
  throw NetworkError(NetworkErrorKind::malformed, "network: " + what);
}

}  // namespace

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Segment> segments)
    : nodes_(std::move(nodes)), segments_(std::move(segments)) {
  const int n = node_count();
  if (n == 0) malformed("no nodes");
  for (int i = 0; i < n; ++i) {
    if (nodes_[static_cast<std::size_t>(i)].id != i) malformed("node ids must be contiguous from 0");
    const auto& nd = nodes_[static_cast<std::size_t>(i)];
    if (!std::isfinite(nd.x) || !std::isfinite(nd.y)) malformed("non-finite node coordinate");
  }
  for (int i = 0; i < segment_count(); ++i) {
    const auto& s = segments_[static_cast<std::size_t>(i)];
    if (s.id != i) malformed("segment ids must be contiguous from 0");
    if (s.a < 0 || s.a >= n || s.b < 0 || s.b >= n) {
      throw NetworkError(NetworkErrorKind::dangling_endpoint,
                         "network: segment " + std::to_string(s.id) + " references missing node " +
                             std::to_string((s.a < 0 || s.a >= n) ? s.a : s.b));
    }
    if (!(s.length_m > 0.0) || !std::isfinite(s.length_m)) {
      malformed("segment " + std::to_string(s.id) + " has non-positive length");
    }
    if (s.a == s.b) malformed("segment " + std::to_string(s.id) + " is a self loop");
  }

  std::vector<std::size_t> degree(static_cast<std::size_t>(n), 0);
  for (const auto& s : segments_) {
    ++degree[static_cast<std::size_t>(s.a)];
    ++degree[static_cast<std::size_t>(s.b)];
  }
  offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) {
    offsets_[static_cast<std::size_t>(i) + 1] = offsets_[static_cast<std::size_t>(i)] + degree[static_cast<std::size_t>(i)];
  }
  adjacency_.resize(offsets_.back());
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& s : segments_) {
    adjacency_[fill[static_cast<std::size_t>(s.a)]++] = {s.b, s.id};
    adjacency_[fill[static_cast<std::size_t>(s.b)]++] = {s.a, s.id};
  }

  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const auto& adj : neighbors(u)) {
      if (!seen[static_cast<std::size_t>(adj.node)]) {
        seen[static_cast<std::size_t>(adj.node)] = 1;
        ++reached;
        stack.push_back(adj.node);
      }
    }
  }
  if (reached != n) {
    throw NetworkError(NetworkErrorKind::disconnected,
                       "network: graph is disconnected (" + std::to_string(reached) + " of " +
                           std::to_string(n) + " nodes reachable from node 0)");
  }
}

int RoadNetwork::segment_between(int a, int b) const {
  int best = -1;
  for (const auto& adj : neighbors(a)) {
    if (adj.node == b && (best < 0 || segment(adj.segment).length_m < segment(best).length_m)) {
      best = adj.segment;
    }
  }
  return best;
}

RoadNetwork RoadNetwork::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("segments") ||
      !doc["nodes"].is_array() || !doc["segments"].is_array()) {
    malformed("expected object with 'nodes' and 'segments' arrays");
  }
  std::vector<Node> nodes;
  std::vector<Segment> segments;
  try {
    for (const auto& j : doc["nodes"]) {
      nodes.push_back({j.at("id").get<int>(), j.at("x").get<double>(), j.at("y").get<double>()});
    }
    for (const auto& j : doc["segments"]) {
      segments.push_back({j.at("id").get<int>(), j.at("a").get<int>(), j.at("b").get<int>(),
                          j.at("length_m").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    malformed(e.what());
  }
  std::sort(nodes.begin(), nodes.end(), [](const Node& l, const Node& r) { return l.id < r.id; });
  std::sort(segments.begin(), segments.end(),
            [](const Segment& l, const Segment& r) { return l.id < r.id; });
  return RoadNetwork(std::move(nodes), std::move(segments));
}

nlohmann::json RoadNetwork::to_json() const {
  nlohmann::json doc;
  auto& nodes = doc["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes_) nodes.push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
  auto& segs = doc["segments"] = nlohmann::json::array();
  for (const auto& s : segments_) {
    segs.push_back({{"id", s.id}, {"a", s.a}, {"b", s.b}, {"length_m", s.length_m}});
  }
  return doc;
}

RoadNetwork load_network(const nlohmann::json& doc) { return RoadNetwork::from_json(doc); }

RoadNetwork load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open network file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("parse error in ") + path + ": " + e.what());
  }
  return load_network(doc);
}

// ---------------------------------------------------------------------------
// Traffic

TrafficProfile::TrafficProfile(std::array<HourTraffic, 24> hours, double city_average_kmh)
    : hours_(hours), city_average_kmh_(city_average_kmh) {
  validate();
}

void TrafficProfile::validate() const {
  if (!(city_average_kmh_ > 0.0)) throw ConfigError("traffic: city average speed must be > 0");
  for (int h = 0; h < 24; ++h) {
    const auto& row = hours_[static_cast<std::size_t>(h)];
    double sum = 0.0;
    for (double p : row.band_probability) {
      if (p < 0.0) throw ConfigError("traffic: negative band probability at hour " + std::to_string(h));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("traffic: band probabilities at hour " + std::to_string(h) + " sum to " +
                        std::to_string(sum));
    }
    if (!(row.average_kmh > 0.0)) {
      throw ConfigError("traffic: non-positive average speed at hour " + std::to_string(h));
    }
  }
}

TrafficProfile TrafficProfile::seoul_default() {
  // Percentages per band and the hourly average speed.
  static constexpr double table[24][5] = {
      {36.92, 44.85, 15.74, 2.49, 41.2}, {24.38, 56.45, 14.20, 4.97, 44.1},
      {16.09, 64.50, 14.20, 5.21, 46.0}, {10.76, 68.88, 15.27, 5.09, 47.4},
      {11.36, 67.93, 15.62, 5.09, 47.3}, {19.53, 60.82, 15.86, 3.79, 44.8},
      {30.53, 53.61, 15.62, 0.24, 40.6}, {46.86, 41.30, 11.72, 0.12, 36.3},
      {60.83, 29.35, 9.70, 0.12, 33.4},  {60.95, 29.23, 9.70, 0.12, 33.3},
      {61.30, 29.35, 9.23, 0.12, 32.7},  {62.01, 28.88, 8.87, 0.24, 32.7},
      {60.35, 28.05, 11.36, 0.24, 33.6}, {61.18, 27.81, 10.77, 0.24, 32.8},
      {64.26, 27.10, 8.52, 0.12, 31.2},  {65.91, 26.15, 7.81, 0.12, 30.4},
      {66.62, 26.51, 6.75, 0.12, 29.4},  {71.01, 23.31, 5.68, 0.00, 27.4},
      {74.20, 22.49, 3.31, 0.00, 26.0},  {69.47, 26.51, 4.02, 0.00, 28.3},
      {61.06, 27.93, 11.01, 0.00, 32.5}, {57.04, 29.82, 13.02, 0.12, 34.4},
      {54.20, 32.31, 13.25, 0.24, 35.1}, {46.86, 37.16, 14.91, 1.07, 38.1},
  };
  std::array<HourTraffic, 24> hours{};
  for (std::size_t h = 0; h < 24; ++h) {
    // Published rows are rounded to 0.01%; renormalize so each row sums to 1.
    double sum = 0.0;
    for (std::size_t b = 0; b < 4; ++b) sum += table[h][b];
    for (std::size_t b = 0; b < 4; ++b) hours[h].band_probability[b] = table[h][b] / sum;
    hours[h].average_kmh = table[h][4];
  }
  return TrafficProfile(hours, 35.8);
}

TrafficProfile TrafficProfile::constant(double kmh) {
  std::array<HourTraffic, 24> hours{};
  for (auto& h : hours) {
    h.band_probability = {0.0, 1.0, 0.0, 0.0};
    h.average_kmh = kmh;
  }
  return TrafficProfile(hours, kmh);
}

TrafficProfile TrafficProfile::from_csv(std::istream& in) {
  std::array<HourTraffic, 24> hours{};
  std::array<bool, 24> seen{};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("hour", 0) == 0) continue;  // header
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("traffic csv line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (values.size() != 6) {
      throw ConfigError("traffic csv line " + std::to_string(line_no) + ": expected 6 columns");
    }
    const int h = static_cast<int>(values[0]);
    if (h < 0 || h > 23 || values[0] != h) {
      throw ConfigError("traffic csv line " + std::to_string(line_no) + ": hour out of range");
    }
    auto& row = hours[static_cast<std::size_t>(h)];
    double sum = 0.0;
    for (std::size_t b = 0; b < 4; ++b) sum += values[b + 1];
    // Accept percentages or fractions.
    for (std::size_t b = 0; b < 4; ++b) row.band_probability[b] = sum > 0 ? values[b + 1] / sum : 0.0;
    row.average_kmh = values[5];
    seen[static_cast<std::size_t>(h)] = true;
  }
  for (int h = 0; h < 24; ++h) {
    if (!seen[static_cast<std::size_t>(h)]) throw ConfigError("traffic csv: missing hour " + std::to_string(h));
  }
  return TrafficProfile(hours);
}

TrafficProfile TrafficProfile::from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open traffic file: " + path);
  return from_csv(in);
}

void TrafficProfile::write_csv(std::ostream& out) const {
  out << "hour,p0_30,p30_60,p60_90,p90_120,avg_kmh\n";
  out.precision(17);
  for (int h = 0; h < 24; ++h) {
    const auto& row = hours_[static_cast<std::size_t>(h)];
    out << h;
    for (double p : row.band_probability) out << ',' << p;
    out << ',' << row.average_kmh << '\n';
  }
}

SpeedMode parse_speed_mode(const std::string& s) {
  if (s == "uniform") return SpeedMode::uniform;
  if (s == "sampled") return SpeedMode::sampled;
  throw ConfigError("unknown traffic mode '" + s + "' (expected uniform|sampled)");
}

std::string to_string(SpeedMode mode) { return mode == SpeedMode::uniform ? "uniform" : "sampled"; }

double segment_speed(const TrafficProfile& profile, int segment_id, int hour, SpeedMode mode,
                     std::uint64_t seed) {
  if (hour < 0 || hour > 23) throw std::out_of_range("segment_speed: hour must be in 0..23");
  const auto& row = profile.hour(hour);
  if (mode == SpeedMode::uniform) return row.average_kmh;
  const std::uint64_t bits =
      derive_seed(seed, static_cast<std::uint64_t>(segment_id), static_cast<std::uint64_t>(hour));
  const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
  double acc = 0.0;
  for (std::size_t b = 0; b < 4; ++b) {
    acc += row.band_probability[b];
    if (u < acc && row.band_probability[b] > 0.0) return kBandMidpointsKmh[b];
  }
  // Rounding left u above the cumulative sum: take the last populated band.
  for (std::size_t b = 4; b-- > 0;) {
    if (row.band_probability[b] > 0.0) return kBandMidpointsKmh[b];
  }
  return row.average_kmh;
}

std::vector<double> SpeedModel::speeds_for_hour(const RoadNetwork& net, int hour) const {
  std::vector<double> out(static_cast<std::size_t>(net.segment_count()));
  for (int s = 0; s < net.segment_count(); ++s) out[static_cast<std::size_t>(s)] = speed(s, hour);
  return out;
}

// ---------------------------------------------------------------------------
// Routing

ShortestTree shortest_time_tree(const RoadNetwork& net, std::span<const double> speeds_kmh, int source) {
  const auto n = static_cast<std::size_t>(net.node_count());
  if (speeds_kmh.size() != static_cast<std::size_t>(net.segment_count())) {
    throw std::invalid_argument("shortest_time_tree: one speed per segment required");
  }
  ShortestTree tree{std::vector<double>(n, kInf), std::vector<double>(n, kInf), std::vector<int>(n, -1)};
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  tree.minutes[static_cast<std::size_t>(source)] = 0.0;
  tree.km[static_cast<std::size_t>(source)] = 0.0;
  heap.push({0.0, source});
  std::vector<char> done(n, 0);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (done[static_cast<std::size_t>(u)]) continue;
    done[static_cast<std::size_t>(u)] = 1;
    for (const auto& adj : net.neighbors(u)) {
      const auto& seg = net.segment(adj.segment);
      const double w = edge_minutes(seg.length_m, speeds_kmh[static_cast<std::size_t>(adj.segment)]);
      const double nd = d + w;
      const auto v = static_cast<std::size_t>(adj.node);
      const double nkm = tree.km[static_cast<std::size_t>(u)] + seg.length_m / 1000.0;
      // Equal-time ties prefer the shorter distance, then the lower predecessor.
      if (nd < tree.minutes[v] ||
          (nd == tree.minutes[v] && !done[v] &&
           (nkm < tree.km[v] || (nkm == tree.km[v] && u < tree.pred[v])))) {
        tree.minutes[v] = nd;
        tree.km[v] = nkm;
        tree.pred[v] = u;
        heap.push({nd, adj.node});
      }
    }
  }
  return tree;
}

Route shortest_time_path(const RoadNetwork& net, std::span<const double> speeds_kmh, int from, int to) {
  if (from < 0 || from >= net.node_count() || to < 0 || to >= net.node_count()) {
    throw std::out_of_range("shortest_time_path: node id out of range");
  }
  if (from == to) return Route{{from}, 0.0, 0.0};
  const auto tree = shortest_time_tree(net, speeds_kmh, from);
  if (!std::isfinite(tree.minutes[static_cast<std::size_t>(to)])) {
    throw std::runtime_error("shortest_time_path: node " + std::to_string(to) + " unreachable from " +
                             std::to_string(from));
  }
  Route r;
  for (int v = to; v != -1; v = tree.pred[static_cast<std::size_t>(v)]) r.nodes.push_back(v);
  std::reverse(r.nodes.begin(), r.nodes.end());
  r.minutes = tree.minutes[static_cast<std::size_t>(to)];
  r.km = tree.km[static_cast<std::size_t>(to)];
  return r;
}

Route shortest_time_path(const RoadNetwork& net, const SpeedModel& speeds, int from, int to, int hour) {
  const auto v = speeds.speeds_for_hour(net, hour);
  return shortest_time_path(net, v, from, to);
}

RoutingTable::RoutingTable(const RoadNetwork& net, const SpeedModel& speeds) : n_(net.node_count()) {
  const std::size_t per_hour = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
  minutes_.resize(24 * per_hour);
  km_.resize(24 * per_hour);
  pred_.resize(24 * per_hour);
  std::vector<double> prev_speeds;
  for (int h = 0; h < 24; ++h) {
    const auto v = speeds.speeds_for_hour(net, h);
    if (h > 0 && v == prev_speeds) {
      const auto src = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(h - 1) * per_hour);
      const auto dst = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(h) * per_hour);
      std::copy_n(minutes_.begin() + src, per_hour, minutes_.begin() + dst);
      std::copy_n(km_.begin() + src, per_hour, km_.begin() + dst);
      std::copy_n(pred_.begin() + src, per_hour, pred_.begin() + dst);
      continue;
    }
    for (int s = 0; s < n_; ++s) {
      const auto tree = shortest_time_tree(net, v, s);
      const std::size_t base = at(h, s, 0);
      std::copy(tree.minutes.begin(), tree.minutes.end(), minutes_.begin() + static_cast<std::ptrdiff_t>(base));
      std::copy(tree.km.begin(), tree.km.end(), km_.begin() + static_cast<std::ptrdiff_t>(base));
      std::copy(tree.pred.begin(), tree.pred.end(), pred_.begin() + static_cast<std::ptrdiff_t>(base));
    }
    prev_speeds = v;
  }
}

RoutingTable::Path RoutingTable::path(int hour, int from, int to) const {
  Path p;
  for (int v = to; v != -1; v = (v == from ? -1 : pred_[at(hour, from, v)])) p.nodes.push_back(v);
  std::reverse(p.nodes.begin(), p.nodes.end());
  p.cum_minutes.reserve(p.nodes.size());
  p.cum_km.reserve(p.nodes.size());
  for (int v : p.nodes) {
    p.cum_minutes.push_back(minutes(hour, from, v));
    p.cum_km.push_back(km(hour, from, v));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Grid

void GridSpec::validate() const {
  if (rows < 1 || cols < 1) throw ConfigError("grid: rows and cols must be >= 1");
  if (!(cell_size > 0.0)) throw ConfigError("grid: cell_size must be > 0");
}

int point_to_cell(const GridSpec& grid, double x, double y) {
  const auto clamp_index = [](double v, int count) {
    const double f = std::floor(v);
    if (!(f >= 0.0)) return 0;
    if (f >= count - 1) return count - 1;
    return static_cast<int>(f);
  };
  const int col = clamp_index((x - grid.origin_x) / grid.cell_size, grid.cols);
  const int row = clamp_index((y - grid.origin_y) / grid.cell_size, grid.rows);
  return row * grid.cols + col;
}

int node_to_cell(const GridSpec& grid, const RoadNetwork& net, int node_id) {
  const auto& n = net.node(node_id);
  return point_to_cell(grid, n.x, n.y);
}

}  // namespace saev
