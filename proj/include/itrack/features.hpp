#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "itrack/aligned.hpp"
#include "itrack/factor_targets.hpp"
#include "itrack/market_data.hpp"

namespace itrack {

// Feature kinds in tensor order.
enum class FeatureKind : int { intercept = 0, slope, excess_mean, excess_stdev, index_mean, index_stdev };
inline constexpr std::size_t kFeatureKinds = 6;
std::string_view to_string(FeatureKind k);

struct FeatureGridSpec {
  // End-date offsets tau (rows) and estimation lengths I (columns), in steps.
  std::vector<Step> tau_offsets{1, 6, 11, 16, 21};
  std::vector<Step> window_lengths{21, 63, 126, 252};

  void validate() const;  // throws ConfigError
  std::size_t rows() const noexcept { return tau_offsets.size(); }
  std::size_t cols() const noexcept { return window_lengths.size(); }
  std::size_t size() const noexcept { return kFeatureKinds * rows() * cols(); }
  // Daily returns needed before and including t-1.
  Step depth() const { return tau_offsets.back() - 1 + window_lengths.back(); }

  friend bool operator==(const FeatureGridSpec&, const FeatureGridSpec&) = default;
};

// K x T_G x H values, flattened kind-major then row then column.
class FeatureTensor {
 public:
  FeatureTensor() = default;
  explicit FeatureTensor(const FeatureGridSpec& spec)
      : rows_(spec.rows()), cols_(spec.cols()), values_(spec.size(), 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  static std::size_t offset(std::size_t kind, std::size_t row, std::size_t col, std::size_t rows,
                            std::size_t cols) {
    return (kind * rows + row) * cols + col;
  }
  double at(FeatureKind k, std::size_t row, std::size_t col) const {
    return values_[offset(static_cast<std::size_t>(k), row, col, rows_, cols_)];
  }
  double& at(FeatureKind k, std::size_t row, std::size_t col) {
    return values_[offset(static_cast<std::size_t>(k), row, col, rows_, cols_)];
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Statistics of one estimation window of daily returns.
struct WindowStats {
  double intercept, slope, excess_mean, excess_stdev, index_mean, index_stdev;
};

// Window of `length` daily returns ending at step `end` (inclusive). Values are
// daily returns indexed by their end step. Slope is 0 and intercept is the
// mean instrument return when the index has no spread over the window.
WindowStats window_stats(std::span<const double> instrument_daily, std::span<const double> index_daily,
                         Step end, Step length);

// Tensor X_{i,t-1}. Uses prices at steps <= t_minus_1 only. Throws
// MissingDataError when the history is insufficient.
FeatureTensor build_tensor(const ReturnPanel& returns, std::size_t series, Step t_minus_1,
                           const FeatureGridSpec& spec);

// Batch tensor construction sharing window statistics across dates. Produces
// values bitwise equal to build_tensor.
class FeatureBuilder {
 public:
  FeatureBuilder(const ReturnPanel& returns, FeatureGridSpec spec);

  std::optional<FeatureTensor> try_build(std::size_t series, Step t_minus_1);
  const FeatureGridSpec& spec() const noexcept { return spec_; }

 private:
  struct SeriesCache {
    std::vector<double> daily;
    std::vector<WindowStats> stats;  // indexed by end * cols + col
    std::vector<char> ready;
  };
  SeriesCache& cache_for(std::size_t series);

  ReturnPanel returns_;
  FeatureGridSpec spec_;
  std::vector<double> index_daily_;
  std::unordered_map<std::size_t, SeriesCache> caches_;
  Step limit_;
};

// Piecewise-linear empirical CDF. Knots are the sorted distinct training
// values; the k-th of n knots (1-based) has ordinate k/(n+1). Evaluation
// clamps outside the knot range.
class EmpiricalCdf {
 public:
  EmpiricalCdf() = default;
  EmpiricalCdf(std::vector<double> knots, std::vector<double> ordinates);

  double operator()(double x) const { return evaluate(x); }
  double evaluate(double x) const;
  double inverse(double p) const;

  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& ordinates() const noexcept { return ordinates_; }
  double min_knot() const { return knots_.front(); }
  double max_knot() const { return knots_.back(); }

  friend bool operator==(const EmpiricalCdf&, const EmpiricalCdf&) = default;

 private:
  std::vector<double> knots_;
  std::vector<double> ordinates_;
};

// Throws DegenerateError with fewer than two distinct values.
EmpiricalCdf fit_cdf(std::span<const double> train_values);

// Supervised record R_{i,t}: input tensor from t-1, Theil-Sen target, and the
// realized horizon returns used for evaluation.
struct Record {
  std::size_t series = 0;
  Step t = 0;
  FeatureTensor x;
  FactorEstimate target;
  double instrument_return = 0.0;
  double index_return = 0.0;
};

enum class CdfGranularity { per_cell, per_kind };

// Fitted per-coordinate transforms for one episode.
struct CdfSet {
  CdfGranularity granularity = CdfGranularity::per_cell;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<EmpiricalCdf> inputs;   // one per cell, or one per kind
  std::array<EmpiricalCdf, 3> targets;  // alpha, beta, residual

  const EmpiricalCdf& input_cdf(std::size_t coord) const;
  void transform_input(std::span<const double> raw, std::span<double> out) const;
  std::array<double, 3> transform_target(const FactorEstimate& e) const;
  FactorEstimate inverse_target(const std::array<double, 3>& u) const;

  friend bool operator==(const CdfSet&, const CdfSet&) = default;
};

// Inclusive step range a record date must lie in.
using StepRange = std::pair<Step, Step>;

// Fit every input coordinate and each target coordinate on the training
// records. When `allowed` is given, any record dated outside it raises
// LookAheadError.
CdfSet fit_cdf_set(std::span<const Record> train, CdfGranularity granularity,
                   std::optional<StepRange> allowed = std::nullopt);

struct TransformedData {
  std::size_t n = 0;
  std::size_t dim = 0;
  AlignedVector inputs;   // column per record, dim values each
  AlignedVector targets;  // 3 values per record
};

TransformedData transform_records(const CdfSet& cdfs, std::span<const Record> records);

// Fit on the training block, then map both blocks through the training fit.
std::pair<CdfSet, std::pair<TransformedData, TransformedData>> transform_dataset(
    std::span<const Record> train, std::span<const Record> validation, CdfGranularity granularity,
    std::optional<StepRange> allowed = std::nullopt);

}  // namespace itrack
