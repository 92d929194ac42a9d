#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "saev/road_net.hpp"

namespace saev {

struct DemandEvent {
  double time_min = 0.0;  // since scenario start
  int origin = 0;
  int destination = 0;

  friend bool operator==(const DemandEvent&, const DemandEvent&) = default;
};

std::vector<DemandEvent> read_demand_csv(std::istream& in);
std::vector<DemandEvent> read_demand_csv_file(const std::string& path);
void write_demand_csv(std::ostream& out, std::span<const DemandEvent> events);

// Demand counts per (time bin, grid cell).
class DemandTensor {
 public:
  DemandTensor() = default;
  DemandTensor(GridSpec grid, int bin_minutes, int bins);

  const GridSpec& grid() const { return grid_; }
  int bin_minutes() const { return bin_minutes_; }
  int bins() const { return bins_; }
  int cells() const { return grid_.cell_count(); }

  std::int64_t& at(int bin, int cell) { return counts_[index(bin, cell)]; }
  std::int64_t at(int bin, int cell) const { return counts_[index(bin, cell)]; }
  std::span<const std::int64_t> bin(int b) const {
    return {counts_.data() + index(b, 0), static_cast<std::size_t>(cells())};
  }
  std::int64_t total() const;

  // Bins [first, first + count); bins outside the tensor are zero-filled.
  DemandTensor slice(int first, int count) const;

 private:
  std::size_t index(int bin, int cell) const {
    return static_cast<std::size_t>(bin) * static_cast<std::size_t>(cells()) + static_cast<std::size_t>(cell);
  }

  GridSpec grid_;
  int bin_minutes_ = 30;
  int bins_ = 0;
  std::vector<std::int64_t> counts_;
};

// Event at t lands in bin floor(t / bin_minutes), cell of its origin node.
// bins = 0 sizes the tensor to the last event.
DemandTensor bin_demand(std::span<const DemandEvent> events, const GridSpec& grid, const RoadNetwork& net,
                        int bin_minutes, int bins = 0);

// Poisson rates per (bin, cell), row-major over cells.
struct DemandIntensity {
  int bins = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> rates;

  double rate(int bin, int cell) const {
    return rates[static_cast<std::size_t>(bin) * static_cast<std::size_t>(rows * cols) +
                 static_cast<std::size_t>(cell)];
  }
  double total() const;

  static DemandIntensity from_json(const nlohmann::json& doc);
  static DemandIntensity from_json_file(const std::string& path);
  nlohmann::json to_json() const;
};

// Destination weights per origin cell over destination cells. Absent means
// uniform over all nodes except the origin.
struct OdMatrix {
  int cells = 0;
  std::vector<double> weights;  // [origin_cell][dest_cell]

  static OdMatrix from_json(const nlohmann::json& doc);
};

// Independent Poisson counts per (bin, cell); bins past the intensity's
// length wrap around (daily repetition). Sorted by time.
std::vector<DemandEvent> generate_demand(const DemandIntensity& intensity, int horizon_bins,
                                         const RoadNetwork& net, const GridSpec& grid, std::uint64_t seed,
                                         int bin_minutes = 30, const OdMatrix* od = nullptr);

// Expected counts for the next bin, one per grid cell.
struct DemandForecast {
  std::vector<double> expected;

  double at(int cell) const { return expected[static_cast<std::size_t>(cell)]; }
  double total() const;
};

inline constexpr int kRecentWindowBins = 8;

class DemandPredictor {
 public:
  virtual ~DemandPredictor() = default;
  // recent: the last kRecentWindowBins bins before target_slot.
  virtual DemandForecast forecast(const DemandTensor& recent, int target_slot) const = 0;
};

// Seasonal mean per (day of week, bin of day, cell) blended with the mean of
// the recent window.
struct BaselineModel {
  int day_length_bins = 48;
  int cells = 0;
  double alpha = 0.5;
  std::vector<double> seasonal;  // [7][day_length_bins][cells]

  double seasonal_mean(int slot, int cell) const;
};

BaselineModel fit_baseline(const DemandTensor& history, int day_length_bins, double alpha);

DemandForecast predict_demand(const BaselineModel& model, const DemandTensor& recent, int target_slot);

class BaselinePredictor final : public DemandPredictor {
 public:
  explicit BaselinePredictor(BaselineModel model) : model_(std::move(model)) {}
  DemandForecast forecast(const DemandTensor& recent, int target_slot) const override {
    return predict_demand(model_, recent, target_slot);
  }
  const BaselineModel& model() const { return model_; }

 private:
  BaselineModel model_;
};

struct ForecastMetrics {
  double rmse = 0.0;
  double mape = 0.0;  // percent; cells with zero true count are skipped
  std::int64_t cells_scored = 0;
  std::int64_t cells_in_mape = 0;
};

// Scores one-step forecasts for bins [first_bin, last_bin) of `truth`,
// feeding each forecast the preceding window from `truth`.
ForecastMetrics evaluate_predictor(const DemandPredictor& predictor, const DemandTensor& truth, int first_bin,
                                   int last_bin, int slot_offset = 0);

}  // namespace saev
