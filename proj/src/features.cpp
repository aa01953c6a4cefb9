#include "itrack/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "itrack/errors.hpp"

namespace itrack {

std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::intercept: return "A";
    case FeatureKind::slope: return "B";
    case FeatureKind::excess_mean: return "L";
    case FeatureKind::excess_stdev: return "S";
    case FeatureKind::index_mean: return "L_m";
    case FeatureKind::index_stdev: return "S_m";
  }
  return "?";
}

void FeatureGridSpec::validate() const {
  if (tau_offsets.empty()) throw ConfigError("features.tau_offsets", "must not be empty");
  if (window_lengths.empty()) throw ConfigError("features.window_lengths", "must not be empty");
  for (std::size_t k = 0; k < tau_offsets.size(); ++k) {
    if (tau_offsets[k] < 1) throw ConfigError("features.tau_offsets", "offsets must be >= 1");
    if (k > 0 && tau_offsets[k] <= tau_offsets[k - 1]) {
      throw ConfigError("features.tau_offsets", "offsets must be strictly increasing");
    }
  }
  for (std::size_t k = 0; k < window_lengths.size(); ++k) {
    if (window_lengths[k] < 2) throw ConfigError("features.window_lengths", "lengths must be >= 2");
    if (k > 0 && window_lengths[k] <= window_lengths[k - 1]) {
      throw ConfigError("features.window_lengths", "lengths must be strictly increasing");
    }
  }
}

WindowStats window_stats(std::span<const double> instrument_daily, std::span<const double> index_daily,
                         Step end, Step length) {
  const auto first = static_cast<std::size_t>(end - length + 1);
  const auto last = static_cast<std::size_t>(end);
  const double n = static_cast<double>(length);

  double mx = 0.0, my = 0.0, me = 0.0;
  for (std::size_t d = first; d <= last; ++d) {
    mx += index_daily[d];
    my += instrument_daily[d];
    me += instrument_daily[d] - index_daily[d];
  }
  mx /= n;
  my /= n;
  me /= n;

  double sxx = 0.0, sxy = 0.0, see = 0.0;
  for (std::size_t d = first; d <= last; ++d) {
    const double dx = index_daily[d] - mx;
    const double dy = instrument_daily[d] - my;
    const double de = (instrument_daily[d] - index_daily[d]) - me;
    sxx += dx * dx;
    sxy += dx * dy;
    see += de * de;
  }
  WindowStats s{};
  s.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  s.intercept = my - s.slope * mx;
  s.excess_mean = me;
  s.excess_stdev = std::sqrt(see / (n - 1.0));
  s.index_mean = mx;
  s.index_stdev = std::sqrt(sxx / (n - 1.0));
  return s;
}

namespace {

void fill_tensor(FeatureTensor& x, const FeatureGridSpec& spec, std::size_t row, std::size_t col,
                 const WindowStats& s) {
  x.at(FeatureKind::intercept, row, col) = s.intercept;
  x.at(FeatureKind::slope, row, col) = s.slope;
  x.at(FeatureKind::excess_mean, row, col) = s.excess_mean;
  x.at(FeatureKind::excess_stdev, row, col) = s.excess_stdev;
  x.at(FeatureKind::index_mean, row, col) = s.index_mean;
  x.at(FeatureKind::index_stdev, row, col) = s.index_stdev;
  (void)spec;
}

}  // namespace

FeatureTensor build_tensor(const ReturnPanel& returns, std::size_t series, Step t_minus_1,
                           const FeatureGridSpec& spec) {
  spec.validate();
  returns.check_visible(t_minus_1, "feature tensor");
  const Step first_price = t_minus_1 - spec.depth();
  const std::size_t m = returns.index_series();
  if (first_price < 0) {
    throw MissingDataError("feature history before the start of the calendar for '" +
                           returns.prices().id(series) + "'");
  }
  const auto len = static_cast<std::size_t>(t_minus_1 + 1);
  std::vector<double> di(len, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> dm(len, std::numeric_limits<double>::quiet_NaN());
  for (Step d = first_price + 1; d <= t_minus_1; ++d) {
    di[static_cast<std::size_t>(d)] = returns.daily(series, d);
    dm[static_cast<std::size_t>(d)] = returns.daily(m, d);
    if (std::isnan(di[static_cast<std::size_t>(d)]) || std::isnan(dm[static_cast<std::size_t>(d)])) {
      throw MissingDataError("insufficient feature history for '" + returns.prices().id(series) +
                             "' at step " + std::to_string(t_minus_1));
    }
  }
  FeatureTensor x(spec);
  for (std::size_t r = 0; r < spec.rows(); ++r) {
    const Step end = t_minus_1 + 1 - spec.tau_offsets[r];
    for (std::size_t c = 0; c < spec.cols(); ++c) {
      fill_tensor(x, spec, r, c, window_stats(di, dm, end, spec.window_lengths[c]));
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// FeatureBuilder

namespace {

std::vector<double> daily_series(const ReturnPanel& returns, std::size_t series, Step limit) {
  std::vector<double> out(static_cast<std::size_t>(limit + 1), std::numeric_limits<double>::quiet_NaN());
  for (Step d = 1; d <= limit; ++d) out[static_cast<std::size_t>(d)] = returns.daily(series, d);
  return out;
}

// Length of the run of valid values ending at d.
bool has_run(std::span<const double> daily, Step end, Step length) {
  if (end - length + 1 < 1) return false;
  for (Step d = end; d > end - length; --d) {
    if (std::isnan(daily[static_cast<std::size_t>(d)])) return false;
  }
  return true;
}

}  // namespace

FeatureBuilder::FeatureBuilder(const ReturnPanel& returns, FeatureGridSpec spec)
    : returns_(returns), spec_(std::move(spec)) {
  spec_.validate();
  limit_ = returns_.visible_until().value_or(static_cast<Step>(returns_.prices().n_steps()) - 1);
  limit_ = std::min(limit_, static_cast<Step>(returns_.prices().n_steps()) - 1);
  index_daily_ = daily_series(returns_, returns_.index_series(), limit_);
}

FeatureBuilder::SeriesCache& FeatureBuilder::cache_for(std::size_t series) {
  auto it = caches_.find(series);
  if (it != caches_.end()) return it->second;
  SeriesCache c;
  c.daily = daily_series(returns_, series, limit_);
  const auto n = static_cast<std::size_t>(limit_ + 1) * spec_.cols();
  c.stats.resize(n);
  c.ready.assign(n, 0);
  return caches_.emplace(series, std::move(c)).first->second;
}

std::optional<FeatureTensor> FeatureBuilder::try_build(std::size_t series, Step t_minus_1) {
  returns_.check_visible(t_minus_1, "feature tensor");
  if (t_minus_1 > limit_) return std::nullopt;
  const Step depth = spec_.depth();
  if (t_minus_1 - depth < 0) return std::nullopt;
  if (!has_run(index_daily_, t_minus_1, depth)) return std::nullopt;
  SeriesCache& c = cache_for(series);
  if (!has_run(c.daily, t_minus_1, depth)) return std::nullopt;

  FeatureTensor x(spec_);
  for (std::size_t r = 0; r < spec_.rows(); ++r) {
    const Step end = t_minus_1 + 1 - spec_.tau_offsets[r];
    for (std::size_t col = 0; col < spec_.cols(); ++col) {
      const auto slot = static_cast<std::size_t>(end) * spec_.cols() + col;
      if (!c.ready[slot]) {
        c.stats[slot] = window_stats(c.daily, index_daily_, end, spec_.window_lengths[col]);
        c.ready[slot] = 1;
      }
      fill_tensor(x, spec_, r, col, c.stats[slot]);
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Empirical CDF

EmpiricalCdf::EmpiricalCdf(std::vector<double> knots, std::vector<double> ordinates)
    : knots_(std::move(knots)), ordinates_(std::move(ordinates)) {
  if (knots_.size() < 2 || knots_.size() != ordinates_.size()) {
    throw DegenerateError("empirical CDF needs at least two knots with matching ordinates");
  }
  for (std::size_t k = 1; k < knots_.size(); ++k) {
    if (!(knots_[k] > knots_[k - 1]) || !(ordinates_[k] > ordinates_[k - 1])) {
      throw DegenerateError("empirical CDF knots and ordinates must be strictly increasing");
    }
  }
}

double EmpiricalCdf::evaluate(double x) const {
  if (!(x > knots_.front())) return ordinates_.front();
  if (!(x < knots_.back())) return ordinates_.back();
  // First knot strictly greater than x; x lies in [knots_[k-1], knots_[k]).
  const auto k = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), x) - knots_.begin());
  const double x0 = knots_[k - 1], x1 = knots_[k];
  const double y0 = ordinates_[k - 1], y1 = ordinates_[k];
  return y0 + (x - x0) / (x1 - x0) * (y1 - y0);
}

double EmpiricalCdf::inverse(double p) const {
  if (!(p > ordinates_.front())) return knots_.front();
  if (!(p < ordinates_.back())) return knots_.back();
  const auto k = static_cast<std::size_t>(
      std::upper_bound(ordinates_.begin(), ordinates_.end(), p) - ordinates_.begin());
  const double x0 = knots_[k - 1], x1 = knots_[k];
  const double y0 = ordinates_[k - 1], y1 = ordinates_[k];
  return x0 + (p - y0) / (y1 - y0) * (x1 - x0);
}

EmpiricalCdf fit_cdf(std::span<const double> train_values) {
  std::vector<double> knots(train_values.begin(), train_values.end());
  for (double v : knots) {
    if (!std::isfinite(v)) throw DegenerateError("empirical CDF input is not finite");
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  if (knots.size() < 2) {
    throw DegenerateError("empirical CDF needs at least two distinct values, got " +
                          std::to_string(knots.size()));
  }
  const double denom = static_cast<double>(knots.size() + 1);
  std::vector<double> ords(knots.size());
  for (std::size_t k = 0; k < knots.size(); ++k) ords[k] = static_cast<double>(k + 1) / denom;
  return EmpiricalCdf(std::move(knots), std::move(ords));
}

// ---------------------------------------------------------------------------
// CdfSet

const EmpiricalCdf& CdfSet::input_cdf(std::size_t coord) const {
  if (granularity == CdfGranularity::per_cell) return inputs.at(coord);
  return inputs.at(coord / (rows * cols));
}

void CdfSet::transform_input(std::span<const double> raw, std::span<double> out) const {
  const std::size_t dim = kFeatureKinds * rows * cols;
  if (raw.size() != dim || out.size() != dim) {
    throw ShapeError("input has " + std::to_string(raw.size()) + " values, transform expects " +
                     std::to_string(dim));
  }
  for (std::size_t k = 0; k < dim; ++k) out[k] = input_cdf(k).evaluate(raw[k]);
}

std::array<double, 3> CdfSet::transform_target(const FactorEstimate& e) const {
  return {targets[0].evaluate(e.alpha), targets[1].evaluate(e.beta), targets[2].evaluate(e.residual)};
}

FactorEstimate CdfSet::inverse_target(const std::array<double, 3>& u) const {
  return {targets[0].inverse(u[0]), targets[1].inverse(u[1]), targets[2].inverse(u[2]),
          EstimateKind::predicted};
}

CdfSet fit_cdf_set(std::span<const Record> train, CdfGranularity granularity,
                   std::optional<StepRange> allowed) {
  if (train.empty()) throw EmptyInputError("cannot fit CDFs on an empty training block");
  for (const auto& r : train) {
    if (allowed && (r.t < allowed->first || r.t > allowed->second)) {
      throw LookAheadError("record dated step " + std::to_string(r.t) + " is outside the training block [" +
                           std::to_string(allowed->first) + ", " + std::to_string(allowed->second) + "]");
    }
  }
  CdfSet set;
  set.granularity = granularity;
  set.rows = train.front().x.rows();
  set.cols = train.front().x.cols();
  const std::size_t cell_count = set.rows * set.cols;
  const std::size_t dim = kFeatureKinds * cell_count;
  for (const auto& r : train) {
    if (r.x.size() != dim || r.x.rows() != set.rows) throw ShapeError("training tensors differ in shape");
  }

  std::vector<double> column;
  if (granularity == CdfGranularity::per_cell) {
    column.resize(train.size());
    set.inputs.reserve(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      for (std::size_t n = 0; n < train.size(); ++n) column[n] = train[n].x.values()[k];
      try {
        set.inputs.push_back(fit_cdf(column));
      } catch (const DegenerateError& e) {
        throw DegenerateError("input coordinate " + std::to_string(k) + ": " + e.what());
      }
    }
  } else {
    column.resize(train.size() * cell_count);
    for (std::size_t kind = 0; kind < kFeatureKinds; ++kind) {
      for (std::size_t n = 0; n < train.size(); ++n) {
        for (std::size_t c = 0; c < cell_count; ++c) {
          column[n * cell_count + c] = train[n].x.values()[kind * cell_count + c];
        }
      }
      try {
        set.inputs.push_back(fit_cdf(column));
      } catch (const DegenerateError& e) {
        throw DegenerateError("feature kind " + std::string(to_string(static_cast<FeatureKind>(kind))) + ": " +
                              e.what());
      }
    }
  }

  column.resize(train.size());
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t n = 0; n < train.size(); ++n) {
      const auto& t = train[n].target;
      column[n] = k == 0 ? t.alpha : (k == 1 ? t.beta : t.residual);
    }
    try {
      set.targets[k] = fit_cdf(column);
    } catch (const DegenerateError& e) {
      throw DegenerateError("target coordinate " + std::to_string(k) + ": " + e.what());
    }
  }
  return set;
}

TransformedData transform_records(const CdfSet& cdfs, std::span<const Record> records) {
  TransformedData out;
  out.n = records.size();
  out.dim = kFeatureKinds * cdfs.rows * cdfs.cols;
  out.inputs.resize(out.n * out.dim);
  out.targets.resize(out.n * 3);
  for (std::size_t n = 0; n < records.size(); ++n) {
    cdfs.transform_input(records[n].x.values(), std::span<double>(out.inputs).subspan(n * out.dim, out.dim));
    const auto u = cdfs.transform_target(records[n].target);
    std::copy(u.begin(), u.end(), out.targets.begin() + static_cast<std::ptrdiff_t>(n * 3));
  }
  return out;
}

std::pair<CdfSet, std::pair<TransformedData, TransformedData>> transform_dataset(
    std::span<const Record> train, std::span<const Record> validation, CdfGranularity granularity,
    std::optional<StepRange> allowed) {
  CdfSet cdfs = fit_cdf_set(train, granularity, allowed);
  auto tr = transform_records(cdfs, train);
  auto va = transform_records(cdfs, validation);
  return {std::move(cdfs), {std::move(tr), std::move(va)}};
}

}  // namespace itrack
