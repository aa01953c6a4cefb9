#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "itrack/market_data.hpp"

namespace itrack {

// Read-only view of horizon returns over a price panel. An optional visibility
// horizon turns any access to a price dated after it into a LookAheadError,
// which is how episode artifacts prove they only touched data before t_n.
class ReturnPanel {
 public:
  explicit ReturnPanel(const PricePanel& prices, std::optional<Step> visible_until = std::nullopt)
      : prices_(&prices), visible_until_(visible_until) {}

  const PricePanel& prices() const noexcept { return *prices_; }
  std::size_t index_series() const noexcept { return prices_->index_series(); }
  std::optional<Step> visible_until() const noexcept { return visible_until_; }
  ReturnPanel restricted_to(Step last_visible) const { return ReturnPanel(*prices_, last_visible); }

  // r_{s,t:t+horizon}, or nullopt when either price is absent.
  std::optional<double> at(std::size_t series, Step t, Step horizon) const;
  double daily(std::size_t series, Step end) const;  // r_{s,end-1:end}; NaN if absent

  void check_visible(Step last_step, std::string_view what) const;

 private:
  const PricePanel* prices_;
  std::optional<Step> visible_until_;
};

enum class EstimateKind { target, predicted, historical };

struct FactorEstimate {
  double alpha = 0.0;
  double beta = 0.0;
  double residual = 0.0;
  EstimateKind kind = EstimateKind::target;

  // alpha + beta * r_m (+ residual unless the estimate is historical)
  double reconstruct(double index_return) const;
};

struct RegressionPoint {
  double x;  // index return
  double y;  // instrument return
};

struct LineFit {
  double alpha;
  double beta;
};

// Median with the even-length convention of averaging the central pair.
double median(std::vector<double> values);

// Median of pairwise slopes over pairs with distinct x, then median of point
// intercepts. Throws DegenerateError when every x is equal.
LineFit theil_sen(std::span<const RegressionPoint> sample);

// Ordinary least squares; throws DegenerateError when x has no spread.
LineFit ols(std::span<const RegressionPoint> sample);

// Theil-Sen target over the 2*half_window+1 horizon returns centred on t. The
// residual is the centre-point regression residual. Throws MissingDataError
// when any required return is absent.
FactorEstimate make_target(const ReturnPanel& returns, std::size_t series, Step t, Step horizon,
                           Step half_window);

// Last price step a target at t depends on.
inline Step target_last_step(Step t, Step horizon, Step half_window) { return t + half_window + horizon; }

struct HistoricalOptions {
  // false: non-overlapping horizon returns stepping back from t-1.
  // true: every overlapping horizon return ending inside the window.
  bool overlapping = false;
};

// OLS baseline over horizon returns ending at or before t-1 and starting no
// earlier than t-1-window. Residual is zero. Throws MissingDataError when fewer
// than two observations are available.
FactorEstimate historical_estimate(const ReturnPanel& returns, std::size_t series, Step t, Step window,
                                   Step horizon, HistoricalOptions options = {});

struct PeItem {
  double instrument_return;
  double index_return;
  FactorEstimate estimate;
};

// Mean of squared reconstruction errors. Throws EmptyInputError on an empty batch.
double prediction_error(std::span<const PeItem> batch);

}  // namespace itrack
