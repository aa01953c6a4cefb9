#include "itrack/factor_targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "itrack/errors.hpp"

namespace itrack {

std::optional<double> ReturnPanel::at(std::size_t series, Step t, Step horizon) const {
  check_visible(t + horizon, "horizon return");
  return try_horizon_return(*prices_, series, t, horizon);
}

double ReturnPanel::daily(std::size_t series, Step end) const {
  check_visible(end, "daily return");
  if (!prices_->has(series, end) || !prices_->has(series, end - 1)) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return prices_->raw(series, end) / prices_->raw(series, end - 1) - 1.0;
}

void ReturnPanel::check_visible(Step last_step, std::string_view what) const {
  if (visible_until_ && last_step > *visible_until_) {
    throw LookAheadError(std::string(what) + " needs the price at step " + std::to_string(last_step) +
                         " but only steps <= " + std::to_string(*visible_until_) + " are visible");
  }
}

double FactorEstimate::reconstruct(double index_return) const {
  const double rho = kind == EstimateKind::historical ? 0.0 : residual;
  return beta * index_return + alpha + rho;
}

double median(std::vector<double> values) {
  if (values.empty()) throw EmptyInputError("median of an empty list");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

LineFit theil_sen(std::span<const RegressionPoint> sample) {
  if (sample.size() < 2) throw DegenerateError("Theil-Sen needs at least two points");
  std::vector<double> slopes;
  slopes.reserve(sample.size() * (sample.size() - 1) / 2);
  for (std::size_t j = 0; j < sample.size(); ++j) {
    for (std::size_t k = j + 1; k < sample.size(); ++k) {
      const double dx = sample[k].x - sample[j].x;
      if (dx == 0.0) continue;
      slopes.push_back((sample[k].y - sample[j].y) / dx);
    }
  }
  if (slopes.empty()) throw DegenerateError("Theil-Sen regressor has no distinct values");
  const double beta = median(std::move(slopes));
  std::vector<double> intercepts;
  intercepts.reserve(sample.size());
  for (const auto& p : sample) intercepts.push_back(p.y - beta * p.x);
  return {median(std::move(intercepts)), beta};
}

LineFit ols(std::span<const RegressionPoint> sample) {
  if (sample.size() < 2) throw DegenerateError("OLS needs at least two points");
  double mx = 0.0, my = 0.0;
  for (const auto& p : sample) {
    mx += p.x;
    my += p.y;
  }
  const double n = static_cast<double>(sample.size());
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : sample) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
  }
  if (sxx == 0.0) throw DegenerateError("OLS regressor has no spread");
  const double beta = sxy / sxx;
  return {my - beta * mx, beta};
}

FactorEstimate make_target(const ReturnPanel& returns, std::size_t series, Step t, Step horizon,
                           Step half_window) {
  const std::size_t m = returns.index_series();
  std::vector<RegressionPoint> pts;
  pts.reserve(static_cast<std::size_t>(2 * half_window + 1));
  double centre_x = 0.0, centre_y = 0.0;
  for (Step tau = t - half_window; tau <= t + half_window; ++tau) {
    auto ri = returns.at(series, tau, horizon);
    auto rm = returns.at(m, tau, horizon);
    if (!ri || !rm) {
      throw MissingDataError("target unavailable for '" + returns.prices().id(series) + "' at step " +
                             std::to_string(t) + ": missing horizon return at step " + std::to_string(tau));
    }
    pts.push_back({*rm, *ri});
    if (tau == t) {
      centre_x = *rm;
      centre_y = *ri;
    }
  }
  const LineFit fit = theil_sen(pts);
  return {fit.alpha, fit.beta, centre_y - fit.alpha - fit.beta * centre_x, EstimateKind::target};
}

FactorEstimate historical_estimate(const ReturnPanel& returns, std::size_t series, Step t, Step window,
                                   Step horizon, HistoricalOptions options) {
  const std::size_t m = returns.index_series();
  const Step last = t - 1;
  const Step first = t - 1 - window;
  std::vector<RegressionPoint> pts;
  const Step stride = options.overlapping ? 1 : horizon;
  for (Step end = last; end - horizon >= first && end - horizon >= 0; end -= stride) {
    auto ri = returns.at(series, end - horizon, horizon);
    auto rm = returns.at(m, end - horizon, horizon);
    if (ri && rm) pts.push_back({*rm, *ri});
  }
  if (pts.size() < 2) {
    throw MissingDataError("historical estimate unavailable for '" + returns.prices().id(series) +
                           "' at step " + std::to_string(t) + " with window " + std::to_string(window));
  }
  try {
    const LineFit fit = ols(pts);
    return {fit.alpha, fit.beta, 0.0, EstimateKind::historical};
  } catch (const DegenerateError&) {
    throw MissingDataError("historical estimate unavailable for '" + returns.prices().id(series) +
                           "': index returns have no spread");
  }
}

double prediction_error(std::span<const PeItem> batch) {
  if (batch.empty()) throw EmptyInputError("prediction error of an empty batch");
  double sum = 0.0;
  for (const auto& item : batch) {
    const double e = item.instrument_return - item.estimate.reconstruct(item.index_return);
    sum += e * e;
  }
  return sum / static_cast<double>(batch.size());
}

}  // namespace itrack
