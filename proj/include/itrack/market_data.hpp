#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace itrack {

// Trading step index t. Signed so that window arithmetic like t - T_E can be
// checked against zero instead of wrapping.
using Step = std::int64_t;

// Calendar date stored as days since 1970-01-01.
class Date {
 public:
  Date() = default;
  explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

  static Date from_ymd(int year, unsigned month, unsigned day);
  // Strict YYYY-MM-DD. Throws std::invalid_argument on anything else.
  static Date parse(std::string_view iso);

  std::string iso() const;
  int year() const;
  std::int32_t days() const noexcept { return days_; }
  bool is_weekend() const;
  Date next_day() const { return Date(days_ + 1); }

  friend auto operator<=>(const Date&, const Date&) = default;

 private:
  std::int32_t days_ = 0;
};

class TradingCalendar {
 public:
  TradingCalendar() = default;
  // Dates must be strictly increasing.
  explicit TradingCalendar(std::vector<Date> dates);

  // `n` consecutive weekdays starting at (or after) `first`.
  static TradingCalendar weekdays(Date first, std::size_t n);

  std::size_t size() const noexcept { return dates_.size(); }
  const Date& date(Step t) const;
  std::optional<Step> find(const Date& d) const;
  Step index(const Date& d) const;  // throws MissingDataError
  std::span<const Date> dates() const noexcept { return dates_; }

 private:
  std::vector<Date> dates_;
};

// Close prices for every series (constituents and the index pseudo-instrument)
// aligned to a calendar. Absent prices are NaN internally and surface as
// std::nullopt.
class PricePanel {
 public:
  PricePanel() = default;
  PricePanel(std::size_t n_steps, std::vector<std::string> ids, std::string index_id);

  std::size_t n_steps() const noexcept { return n_steps_; }
  std::size_t n_series() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t series) const { return ids_.at(series); }
  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t series_of(std::string_view id) const;  // throws MissingDataError

  std::size_t index_series() const noexcept { return index_series_; }
  const std::string& index_id() const { return ids_[index_series_]; }

  bool has(std::size_t series, Step t) const;
  std::optional<double> price(std::size_t series, Step t) const;
  double raw(std::size_t series, Step t) const { return data_[series][static_cast<std::size_t>(t)]; }
  void set(std::size_t series, Step t, double price);
  std::span<const double> series(std::size_t s) const { return data_[s]; }

  // First and last present step of a series.
  std::optional<std::pair<Step, Step>> span_of(std::size_t series) const;

 private:
  std::size_t n_steps_ = 0;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> lookup_;
  std::size_t index_series_ = 0;
  std::vector<std::vector<double>> data_;
};

// Per-step index weights. The support at each step is the universe S_t.
class IndexWeightPanel {
 public:
  using Entry = std::pair<std::size_t, double>;  // (series, weight)

  IndexWeightPanel() = default;
  explicit IndexWeightPanel(std::size_t n_steps) : rows_(n_steps) {}

  std::size_t n_steps() const noexcept { return rows_.size(); }
  // Entries sorted by series; weights >= 0 summing to 1.
  std::span<const Entry> at(Step t) const { return rows_.at(static_cast<std::size_t>(t)); }
  double weight(Step t, std::size_t series) const;
  void set_row(Step t, std::vector<Entry> row);

 private:
  std::vector<std::vector<Entry>> rows_;
};

class UniverseCalendar {
 public:
  UniverseCalendar() = default;
  UniverseCalendar(const IndexWeightPanel& weights, std::size_t index_series);

  std::span<const std::size_t> members(Step t) const { return members_.at(static_cast<std::size_t>(t)); }
  bool contains(Step t, std::size_t series) const;
  std::size_t index_series() const noexcept { return index_series_; }
  std::size_t n_steps() const noexcept { return members_.size(); }

 private:
  std::vector<std::vector<std::size_t>> members_;
  std::size_t index_series_ = 0;
};

struct MarketPanels {
  TradingCalendar calendar;
  PricePanel prices;
  UniverseCalendar universe;
  IndexWeightPanel weights;
};

// Tolerance accepted on a weights row sum when loading; rows are then
// renormalized exactly.
inline constexpr double kWeightSumTolerance = 1e-6;

MarketPanels load_panels(const std::filesystem::path& prices_path,
                         const std::filesystem::path& weights_path,
                         const std::string& index_id);

// Build panels from in-memory data and run the same validation as the loader.
MarketPanels assemble_panels(TradingCalendar calendar, PricePanel prices, IndexWeightPanel weights);

void write_prices_csv(const std::filesystem::path& path, const TradingCalendar& calendar,
                      const PricePanel& prices);
void write_weights_csv(const std::filesystem::path& path, const TradingCalendar& calendar,
                       const PricePanel& prices, const IndexWeightPanel& weights);

// r_{i,t:t+T} = p_{i,t+T} / p_{i,t} - 1. Throws MissingDataError naming the
// absent endpoint.
double horizon_return(const PricePanel& prices, std::size_t series, Step t, Step horizon);
std::optional<double> try_horizon_return(const PricePanel& prices, std::size_t series, Step t,
                                         Step horizon);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace itrack
