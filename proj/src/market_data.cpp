#include "itrack/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "itrack/csv.hpp"
#include "itrack/errors.hpp"

namespace itrack {

namespace chr = std::chrono;

// ---------------------------------------------------------------------------
// Date

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  if (!ymd.ok()) {
    throw std::invalid_argument("invalid calendar date");
  }
  return Date(static_cast<std::int32_t>(chr::sys_days{ymd}.time_since_epoch().count()));
}

Date Date::parse(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw std::invalid_argument("expected YYYY-MM-DD, got '" + std::string(iso) + "'");
  }
  auto field = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    const auto* first = iso.data() + pos;
    const auto* last = first + len;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
      throw std::invalid_argument("expected YYYY-MM-DD, got '" + std::string(iso) + "'");
    }
    return v;
  };
  return from_ymd(field(0, 4), static_cast<unsigned>(field(5, 2)), static_cast<unsigned>(field(8, 2)));
}

std::string Date::iso() const {
  const chr::year_month_day ymd{chr::sys_days{chr::days{days_}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int Date::year() const {
  const chr::year_month_day ymd{chr::sys_days{chr::days{days_}}};
  return static_cast<int>(ymd.year());
}

bool Date::is_weekend() const {
  const chr::weekday wd{chr::sys_days{chr::days{days_}}};
  return wd == chr::Saturday || wd == chr::Sunday;
}

// ---------------------------------------------------------------------------
// TradingCalendar

TradingCalendar::TradingCalendar(std::vector<Date> dates) : dates_(std::move(dates)) {
  for (std::size_t k = 1; k < dates_.size(); ++k) {
    if (!(dates_[k - 1] < dates_[k])) {
      throw ValidationError("trading calendar is not strictly increasing at " + dates_[k].iso());
    }
  }
}

TradingCalendar TradingCalendar::weekdays(Date first, std::size_t n) {
  std::vector<Date> out;
  out.reserve(n);
  Date d = first;
  while (out.size() < n) {
    if (!d.is_weekend()) out.push_back(d);
    d = d.next_day();
  }
  return TradingCalendar(std::move(out));
}

const Date& TradingCalendar::date(Step t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= dates_.size()) {
    throw MissingDataError("step " + std::to_string(t) + " is outside the trading calendar");
  }
  return dates_[static_cast<std::size_t>(t)];
}

std::optional<Step> TradingCalendar::find(const Date& d) const {
  auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
  if (it == dates_.end() || *it != d) return std::nullopt;
  return static_cast<Step>(it - dates_.begin());
}

Step TradingCalendar::index(const Date& d) const {
  if (auto t = find(d)) return *t;
  throw MissingDataError(d.iso() + " is not a trading date");
}

// ---------------------------------------------------------------------------
// PricePanel

PricePanel::PricePanel(std::size_t n_steps, std::vector<std::string> ids, std::string index_id)
    : n_steps_(n_steps), ids_(std::move(ids)) {
  for (std::size_t k = 0; k < ids_.size(); ++k) {
    if (!lookup_.emplace(ids_[k], k).second) {
      throw ValidationError("duplicate instrument id '" + ids_[k] + "'");
    }
  }
  auto it = lookup_.find(index_id);
  if (it == lookup_.end()) {
    throw ValidationError("index id '" + index_id + "' has no price series");
  }
  index_series_ = it->second;
  data_.assign(ids_.size(), std::vector<double>(n_steps_, std::numeric_limits<double>::quiet_NaN()));
}

std::optional<std::size_t> PricePanel::find(std::string_view id) const {
  auto it = lookup_.find(std::string(id));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t PricePanel::series_of(std::string_view id) const {
  if (auto s = find(id)) return *s;
  throw MissingDataError("unknown instrument '" + std::string(id) + "'");
}

bool PricePanel::has(std::size_t series, Step t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= n_steps_) return false;
  return !std::isnan(data_[series][static_cast<std::size_t>(t)]);
}

std::optional<double> PricePanel::price(std::size_t series, Step t) const {
  if (!has(series, t)) return std::nullopt;
  return data_[series][static_cast<std::size_t>(t)];
}

void PricePanel::set(std::size_t series, Step t, double price) {
  data_.at(series).at(static_cast<std::size_t>(t)) = price;
}

std::optional<std::pair<Step, Step>> PricePanel::span_of(std::size_t series) const {
  const auto& s = data_.at(series);
  std::optional<std::pair<Step, Step>> out;
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (std::isnan(s[t])) continue;
    if (!out) out.emplace(static_cast<Step>(t), static_cast<Step>(t));
    out->second = static_cast<Step>(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weights and universe

double IndexWeightPanel::weight(Step t, std::size_t series) const {
  if (t < 0 || static_cast<std::size_t>(t) >= rows_.size()) return 0.0;
  const auto& row = rows_[static_cast<std::size_t>(t)];
  auto it = std::lower_bound(row.begin(), row.end(), series,
                             [](const Entry& e, std::size_t s) { return e.first < s; });
  return (it != row.end() && it->first == series) ? it->second : 0.0;
}

void IndexWeightPanel::set_row(Step t, std::vector<Entry> row) {
  std::sort(row.begin(), row.end());
  rows_.at(static_cast<std::size_t>(t)) = std::move(row);
}

UniverseCalendar::UniverseCalendar(const IndexWeightPanel& weights, std::size_t index_series)
    : members_(weights.n_steps()), index_series_(index_series) {
  for (std::size_t t = 0; t < weights.n_steps(); ++t) {
    for (const auto& [s, w] : weights.at(static_cast<Step>(t))) {
      members_[t].push_back(s);
    }
  }
}

bool UniverseCalendar::contains(Step t, std::size_t series) const {
  if (t < 0 || static_cast<std::size_t>(t) >= members_.size()) return false;
  const auto& m = members_[static_cast<std::size_t>(t)];
  return std::binary_search(m.begin(), m.end(), series);
}

// ---------------------------------------------------------------------------
// Numbers

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Validation and loading

MarketPanels assemble_panels(TradingCalendar calendar, PricePanel prices, IndexWeightPanel weights) {
  if (prices.n_steps() != calendar.size() || weights.n_steps() != calendar.size()) {
    throw ValidationError("panel lengths do not match the trading calendar");
  }
  for (std::size_t s = 0; s < prices.n_series(); ++s) {
    auto span = prices.span_of(s);
    if (!span) continue;
    for (Step t = span->first; t <= span->second; ++t) {
      auto p = prices.price(s, t);
      if (!p) {
        throw ValidationError("price series of '" + prices.id(s) + "' has a gap at " +
                              calendar.date(t).iso());
      }
      if (!(*p > 0.0) || !std::isfinite(*p)) {
        throw ValidationError("non-positive price for '" + prices.id(s) + "' on " +
                              calendar.date(t).iso());
      }
    }
  }
  const std::size_t m = prices.index_series();
  for (Step t = 0; t < static_cast<Step>(calendar.size()); ++t) {
    if (!prices.has(m, t)) {
      throw ValidationError("index '" + prices.id(m) + "' has no level on " + calendar.date(t).iso());
    }
    double sum = 0.0;
    for (const auto& [s, w] : weights.at(t)) {
      if (s == m) throw ValidationError("index series carries a constituent weight");
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw ValidationError("negative weight for '" + prices.id(s) + "' on " + calendar.date(t).iso());
      }
      if (!prices.has(s, t)) {
        throw ValidationError("'" + prices.id(s) + "' is weighted on " + calendar.date(t).iso() +
                              " but has no price");
      }
      sum += w;
    }
    if (weights.at(t).empty()) {
      throw ValidationError("no index weights on " + calendar.date(t).iso());
    }
    if (std::abs(sum - 1.0) > kWeightSumTolerance) {
      throw ValidationError("index weights on " + calendar.date(t).iso() + " sum to " +
                            format_double(sum) + ", expected 1");
    }
    if (sum != 1.0) {
      std::vector<IndexWeightPanel::Entry> row(weights.at(t).begin(), weights.at(t).end());
      for (auto& e : row) e.second /= sum;
      weights.set_row(t, std::move(row));
    }
  }
  UniverseCalendar universe(weights, m);
  return MarketPanels{std::move(calendar), std::move(prices), std::move(universe), std::move(weights)};
}

namespace {

struct Cell {
  Date date;
  std::string instrument;
  double value;
  std::size_t line;
};

std::vector<Cell> read_cells(const std::filesystem::path& path, std::string_view value_column) {
  CsvReader reader(path);
  const std::vector<std::string> expected{"date", "instrument", std::string(value_column)};
  auto header = reader.next();
  if (!header || *header != expected) {
    throw ParseError(path.string(), 1, "expected header 'date,instrument," + std::string(value_column) + "'");
  }
  std::vector<Cell> cells;
  while (auto row = reader.next()) {
    const std::size_t line = reader.line();
    if (row->size() != 3) {
      throw ParseError(path.string(), line, "expected 3 fields, got " + std::to_string(row->size()));
    }
    Cell c;
    c.line = line;
    try {
      c.date = Date::parse((*row)[0]);
      c.value = parse_double((*row)[2]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(path.string(), line, e.what());
    }
    if ((*row)[1].empty()) throw ParseError(path.string(), line, "empty instrument id");
    c.instrument = std::move((*row)[1]);
    cells.push_back(std::move(c));
  }
  return cells;
}

}  // namespace

MarketPanels load_panels(const std::filesystem::path& prices_path,
                         const std::filesystem::path& weights_path, const std::string& index_id) {
  auto price_cells = read_cells(prices_path, "close");
  auto weight_cells = read_cells(weights_path, "weight");

  std::set<Date> date_set;
  std::set<std::string> id_set;
  for (const auto& c : price_cells) {
    date_set.insert(c.date);
    id_set.insert(c.instrument);
  }
  TradingCalendar calendar(std::vector<Date>(date_set.begin(), date_set.end()));
  PricePanel prices(calendar.size(), std::vector<std::string>(id_set.begin(), id_set.end()), index_id);

  for (const auto& c : price_cells) {
    const auto s = *prices.find(c.instrument);
    const Step t = *calendar.find(c.date);
    if (prices.has(s, t)) {
      throw ParseError(prices_path.string(), c.line, "duplicate row for '" + c.instrument + "' on " + c.date.iso());
    }
    if (!(c.value > 0.0) || !std::isfinite(c.value)) {
      throw ValidationError("non-positive price for '" + c.instrument + "' on " + c.date.iso());
    }
    prices.set(s, t, c.value);
  }

  std::vector<std::vector<IndexWeightPanel::Entry>> rows(calendar.size());
  std::vector<bool> seen(calendar.size(), false);
  for (const auto& c : weight_cells) {
    if (c.instrument == index_id) continue;  // index pseudo-row carries no weight
    auto t = calendar.find(c.date);
    if (!t) {
      throw ValidationError("weights dated " + c.date.iso() + " have no prices");
    }
    auto s = prices.find(c.instrument);
    if (!s) {
      throw ValidationError("'" + c.instrument + "' is weighted on " + c.date.iso() + " but has no prices");
    }
    auto& row = rows[static_cast<std::size_t>(*t)];
    for (const auto& e : row) {
      if (e.first == *s) {
        throw ParseError(weights_path.string(), c.line, "duplicate weight for '" + c.instrument + "'");
      }
    }
    row.emplace_back(*s, c.value);
    seen[static_cast<std::size_t>(*t)] = true;
  }
  IndexWeightPanel weights(calendar.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (!seen[t]) {
      throw ValidationError("prices dated " + calendar.date(static_cast<Step>(t)).iso() + " have no weights");
    }
    weights.set_row(static_cast<Step>(t), std::move(rows[t]));
  }
  return assemble_panels(std::move(calendar), std::move(prices), std::move(weights));
}

void write_prices_csv(const std::filesystem::path& path, const TradingCalendar& calendar,
                      const PricePanel& prices) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "date,instrument,close\n";
  for (Step t = 0; t < static_cast<Step>(calendar.size()); ++t) {
    const std::string d = calendar.date(t).iso();
    for (std::size_t s = 0; s < prices.n_series(); ++s) {
      if (auto p = prices.price(s, t)) out << d << ',' << prices.id(s) << ',' << format_double(*p) << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

void write_weights_csv(const std::filesystem::path& path, const TradingCalendar& calendar,
                       const PricePanel& prices, const IndexWeightPanel& weights) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "date,instrument,weight\n";
  for (Step t = 0; t < static_cast<Step>(calendar.size()); ++t) {
    const std::string d = calendar.date(t).iso();
    for (const auto& [s, w] : weights.at(t)) {
      out << d << ',' << prices.id(s) << ',' << format_double(w) << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Returns

std::optional<double> try_horizon_return(const PricePanel& prices, std::size_t series, Step t,
                                         Step horizon) {
  auto p0 = prices.price(series, t);
  if (!p0) return std::nullopt;
  auto p1 = prices.price(series, t + horizon);
  if (!p1) return std::nullopt;
  return *p1 / *p0 - 1.0;
}

double horizon_return(const PricePanel& prices, std::size_t series, Step t, Step horizon) {
  auto p0 = prices.price(series, t);
  if (!p0) {
    throw MissingDataError("no start price for '" + prices.id(series) + "' at step " + std::to_string(t));
  }
  auto p1 = prices.price(series, t + horizon);
  if (!p1) {
    throw MissingDataError("no end price for '" + prices.id(series) + "' at step " +
                           std::to_string(t + horizon));
  }
  return *p1 / *p0 - 1.0;
}

}  // namespace itrack
