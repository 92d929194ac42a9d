#include "saev/demand.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "saev/error.hpp"
#include "saev/rng.hpp"

namespace saev {

std::vector<DemandEvent> read_demand_csv(std::istream& in) {
  std::vector<DemandEvent> events;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.rfind("time_min", 0) == 0) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',')) {
      throw ConfigError("demand csv line " + std::to_string(line_no) + ": expected time_min,origin_node,dest_node");
    }
    DemandEvent e;
    try {
      e = {std::stod(a), std::stoi(b), std::stoi(c)};
    } catch (const std::exception&) {
      throw ConfigError("demand csv line " + std::to_string(line_no) + ": bad number");
    }
    if (e.time_min < 0.0) throw ConfigError("demand csv line " + std::to_string(line_no) + ": negative time");
    if (e.origin == e.destination) {
      throw ConfigError("demand csv line " + std::to_string(line_no) + ": origin equals destination");
    }
    events.push_back(e);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const DemandEvent& l, const DemandEvent& r) { return l.time_min < r.time_min; });
  return events;
}

std::vector<DemandEvent> read_demand_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open demand file: " + path);
  return read_demand_csv(in);
}

void write_demand_csv(std::ostream& out, std::span<const DemandEvent> events) {
  out << "time_min,origin_node,dest_node\n";
  out.precision(17);
  for (const auto& e : events) out << e.time_min << ',' << e.origin << ',' << e.destination << '\n';
}

DemandTensor::DemandTensor(GridSpec grid, int bin_minutes, int bins)
    : grid_(grid), bin_minutes_(bin_minutes), bins_(bins) {
  grid_.validate();
  if (bin_minutes <= 0) throw std::invalid_argument("DemandTensor: bin_minutes must be > 0");
  if (bins < 0) throw std::invalid_argument("DemandTensor: negative bin count");
  counts_.assign(static_cast<std::size_t>(bins) * static_cast<std::size_t>(cells()), 0);
}

std::int64_t DemandTensor::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

DemandTensor DemandTensor::slice(int first, int count) const {
  DemandTensor out(grid_, bin_minutes_, count);
  for (int b = 0; b < count; ++b) {
    const int src = first + b;
    if (src < 0 || src >= bins_) continue;
    for (int c = 0; c < cells(); ++c) out.at(b, c) = at(src, c);
  }
  return out;
}

DemandTensor bin_demand(std::span<const DemandEvent> events, const GridSpec& grid, const RoadNetwork& net,
                        int bin_minutes, int bins) {
  if (bin_minutes <= 0) throw std::invalid_argument("bin_demand: bin_minutes must be > 0");
  if (bins <= 0) {
    bins = 0;
    for (const auto& e : events) {
      bins = std::max(bins, static_cast<int>(std::floor(e.time_min / bin_minutes)) + 1);
    }
  }
  DemandTensor tensor(grid, bin_minutes, bins);
  for (const auto& e : events) {
    const int b = static_cast<int>(std::floor(e.time_min / bin_minutes));
    if (b < 0 || b >= bins) {
      throw std::out_of_range("bin_demand: event at t=" + std::to_string(e.time_min) + " outside tensor");
    }
    ++tensor.at(b, node_to_cell(grid, net, e.origin));
  }
  return tensor;
}

double DemandIntensity::total() const { return std::accumulate(rates.begin(), rates.end(), 0.0); }

DemandIntensity DemandIntensity::from_json(const nlohmann::json& doc) {
  DemandIntensity in;
  try {
    in.bins = doc.at("bins").get<int>();
    in.rows = doc.at("rows").get<int>();
    in.cols = doc.at("cols").get<int>();
    in.rates = doc.at("rates").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("intensity: ") + e.what());
  }
  if (in.bins < 1 || in.rows < 1 || in.cols < 1) throw ConfigError("intensity: dimensions must be >= 1");
  if (in.rates.size() != static_cast<std::size_t>(in.bins) * static_cast<std::size_t>(in.rows * in.cols)) {
    throw ConfigError("intensity: rates length must equal bins*rows*cols");
  }
  for (double r : in.rates) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("intensity: rates must be finite and >= 0");
  }
  return in;
}

DemandIntensity DemandIntensity::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open intensity file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("intensity parse error: " + std::string(e.what()));
  }
  return from_json(doc);
}

nlohmann::json DemandIntensity::to_json() const {
  return {{"bins", bins}, {"rows", rows}, {"cols", cols}, {"rates", rates}};
}

OdMatrix OdMatrix::from_json(const nlohmann::json& doc) {
  OdMatrix od;
  od.cells = doc.at("cells").get<int>();
  od.weights = doc.at("weights").get<std::vector<double>>();
  if (od.weights.size() != static_cast<std::size_t>(od.cells) * static_cast<std::size_t>(od.cells)) {
    throw ConfigError("od matrix: weights must be cells*cells");
  }
  return od;
}

namespace {

std::size_t pick_weighted(Rng& rng, std::span<const double> weights, double total) {
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

}  // namespace

std::vector<DemandEvent> generate_demand(const DemandIntensity& intensity, int horizon_bins,
                                         const RoadNetwork& net, const GridSpec& grid, std::uint64_t seed,
                                         int bin_minutes, const OdMatrix* od) {
  if (intensity.rows != grid.rows || intensity.cols != grid.cols) {
    throw ConfigError("generate_demand: intensity grid does not match grid spec");
  }
  if (net.node_count() < 2) throw ConfigError("generate_demand: need at least two nodes");
  const int cells = grid.cell_count();
  if (od != nullptr && od->cells != cells) throw ConfigError("generate_demand: od matrix size mismatch");

  std::vector<std::vector<int>> cell_nodes(static_cast<std::size_t>(cells));
  for (int n = 0; n < net.node_count(); ++n) {
    cell_nodes[static_cast<std::size_t>(node_to_cell(grid, net, n))].push_back(n);
  }

  Rng rng(seed);
  std::vector<DemandEvent> events;
  for (int b = 0; b < horizon_bins; ++b) {
    const int src_bin = b % intensity.bins;
    for (int c = 0; c < cells; ++c) {
      const double rate = intensity.rate(src_bin, c);
      if (rate <= 0.0) continue;
      const auto& nodes = cell_nodes[static_cast<std::size_t>(c)];
      if (nodes.empty()) {
        throw ConfigError("generate_demand: cell " + std::to_string(c) + " has positive rate but no nodes");
      }
      const auto count = rng.poisson(rate);
      for (std::int64_t k = 0; k < count; ++k) {
        DemandEvent e;
        e.time_min = (b + rng.uniform()) * bin_minutes;
        e.origin = nodes[rng.index(nodes.size())];
        if (od != nullptr) {
          const std::span<const double> row(od->weights.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(cells),
                                            static_cast<std::size_t>(cells));
          double total = 0.0;
          for (std::size_t d = 0; d < row.size(); ++d) {
            const auto& dn = cell_nodes[d];
            const bool usable = !dn.empty() && !(dn.size() == 1 && dn[0] == e.origin);
            if (usable) total += row[d];
          }
          if (total > 0.0) {
            std::vector<double> w(row.begin(), row.end());
            for (std::size_t d = 0; d < w.size(); ++d) {
              const auto& dn = cell_nodes[d];
              if (dn.empty() || (dn.size() == 1 && dn[0] == e.origin)) w[d] = 0.0;
            }
            const auto& dn = cell_nodes[pick_weighted(rng, w, total)];
            do {
              e.destination = dn[rng.index(dn.size())];
            } while (e.destination == e.origin);
            events.push_back(e);
            continue;
          }
        }
        const auto pick = rng.index(static_cast<std::uint64_t>(net.node_count() - 1));
        e.destination = static_cast<int>(pick) >= e.origin ? static_cast<int>(pick) + 1 : static_cast<int>(pick);
        events.push_back(e);
      }
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const DemandEvent& l, const DemandEvent& r) { return l.time_min < r.time_min; });
  return events;
}

double DemandForecast::total() const { return std::accumulate(expected.begin(), expected.end(), 0.0); }

double BaselineModel::seasonal_mean(int slot, int cell) const {
  const int day = slot / day_length_bins;
  const int dow = ((day % 7) + 7) % 7;
  const int bod = ((slot % day_length_bins) + day_length_bins) % day_length_bins;
  return seasonal[(static_cast<std::size_t>(dow) * static_cast<std::size_t>(day_length_bins) +
                   static_cast<std::size_t>(bod)) *
                      static_cast<std::size_t>(cells) +
                  static_cast<std::size_t>(cell)];
}

BaselineModel fit_baseline(const DemandTensor& history, int day_length_bins, double alpha) {
  if (day_length_bins <= 0) throw std::invalid_argument("fit_baseline: day_length_bins must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("fit_baseline: alpha must be in [0,1]");
  if (history.bins() < day_length_bins) {
    throw std::invalid_argument("fit_baseline: history must span at least one full day");
  }
  BaselineModel m;
  m.day_length_bins = day_length_bins;
  m.cells = history.cells();
  m.alpha = alpha;
  const std::size_t cells = static_cast<std::size_t>(m.cells);
  const std::size_t per_day = static_cast<std::size_t>(day_length_bins) * cells;
  std::vector<double> sum(7 * per_day, 0.0);
  std::vector<int> days_per_dow(7, 0);
  std::vector<double> all_sum(per_day, 0.0);
  const int full_days = history.bins() / day_length_bins;
  for (int d = 0; d < full_days; ++d) {
    const int dow = d % 7;
    ++days_per_dow[static_cast<std::size_t>(dow)];
    for (int b = 0; b < day_length_bins; ++b) {
      const auto row = history.bin(d * day_length_bins + b);
      for (std::size_t c = 0; c < cells; ++c) {
        const double v = static_cast<double>(row[c]);
        sum[static_cast<std::size_t>(dow) * per_day + static_cast<std::size_t>(b) * cells + c] += v;
        all_sum[static_cast<std::size_t>(b) * cells + c] += v;
      }
    }
  }
  m.seasonal.assign(7 * per_day, 0.0);
  for (std::size_t dow = 0; dow < 7; ++dow) {
    for (std::size_t i = 0; i < per_day; ++i) {
      // Weekdays absent from a short history fall back to the all-days mean.
      m.seasonal[dow * per_day + i] = days_per_dow[dow] > 0 ? sum[dow * per_day + i] / days_per_dow[dow]
                                                            : all_sum[i] / full_days;
    }
  }
  return m;
}

DemandForecast predict_demand(const BaselineModel& model, const DemandTensor& recent, int target_slot) {
  if (recent.bins() != kRecentWindowBins) {
    throw std::invalid_argument("predict_demand: recent window must hold exactly 8 bins, got " +
                                std::to_string(recent.bins()));
  }
  if (recent.cells() != model.cells) throw std::invalid_argument("predict_demand: grid size mismatch");
  DemandForecast f;
  f.expected.resize(static_cast<std::size_t>(model.cells));
  for (int c = 0; c < model.cells; ++c) {
    double recent_sum = 0.0;
    for (int b = 0; b < kRecentWindowBins; ++b) recent_sum += static_cast<double>(recent.at(b, c));
    const double recent_mean = recent_sum / kRecentWindowBins;
    const double v = model.alpha * recent_mean + (1.0 - model.alpha) * model.seasonal_mean(target_slot, c);
    f.expected[static_cast<std::size_t>(c)] = std::max(0.0, v);
  }
  return f;
}

ForecastMetrics evaluate_predictor(const DemandPredictor& predictor, const DemandTensor& truth, int first_bin,
                                   int last_bin, int slot_offset) {
  ForecastMetrics m;
  double se = 0.0;
  double ape = 0.0;
  for (int b = first_bin; b < last_bin; ++b) {
    const auto recent = truth.slice(b - kRecentWindowBins, kRecentWindowBins);
    const auto f = predictor.forecast(recent, b + slot_offset);
    for (int c = 0; c < truth.cells(); ++c) {
      const double y = static_cast<double>(truth.at(b, c));
      const double e = f.at(c) - y;
      se += e * e;
      ++m.cells_scored;
      if (y != 0.0) {
        ape += std::abs(e / y);
        ++m.cells_in_mape;
      }
    }
  }
  if (m.cells_scored > 0) m.rmse = std::sqrt(se / static_cast<double>(m.cells_scored));
  if (m.cells_in_mape > 0) m.mape = 100.0 * ape / static_cast<double>(m.cells_in_mape);
  return m;
}

}  // namespace saev
