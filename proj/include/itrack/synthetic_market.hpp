#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "itrack/market_data.hpp"

namespace itrack {

enum class IndexWeighting { cap, equal };

struct SynthConfig {
  std::size_t n_instruments = 200;
  std::size_t n_days = 2400;
  std::string start_date = "2010-01-04";
  std::string index_id = "INDEX";

  // beta_{t+1} = beta_t + kappa (mu - beta_t) + sigma_beta * shock
  double kappa = 0.03;
  double beta_mean_lo = 0.5;
  double beta_mean_hi = 1.5;
  double sigma_beta = 0.02;

  // Daily alpha, same recursion on a smaller scale.
  double kappa_alpha = 0.03;
  double alpha_mean_lo = -2e-4;
  double alpha_mean_hi = 2e-4;
  double sigma_alpha = 7e-4;

  double factor_vol = 0.01;  // daily stdev of the common factor
  double sigma_eps = 0.01;   // daily idiosyncratic stdev
  double share_dispersion = 0.75;  // lognormal sigma of share counts
  IndexWeighting weighting = IndexWeighting::cap;

  Step truth_horizon = 21;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

// Standard normal draw addressed by (seed, stream, a, b); any cell can be
// regenerated independently.
double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b);
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b);

// Daily coefficients relative to the generated index, so that
// r_i = alpha + beta * r_m + noise holds exactly for every instrument-day.
// Entry [i][t] refers to the return from step t-1 to t; row 0 is unused.
struct TruthPanel {
  std::vector<std::vector<double>> alpha, beta, noise;

  std::size_t n_instruments() const noexcept { return alpha.size(); }
  // Horizon coefficients over (t, t+T]: summed alpha, averaged beta.
  std::pair<double, double> horizon(std::size_t instrument, Step t, Step horizon) const;
};

struct SyntheticMarket {
  SynthConfig config;
  MarketPanels panels;
  TruthPanel truth;
  std::vector<std::string> instrument_ids;  // truth row order
};

SyntheticMarket generate(const SynthConfig& cfg);

// date,instrument,daily_alpha,daily_beta,daily_noise,horizon_alpha,horizon_beta
// with horizon fields empty where the horizon runs past the panel.
void write_truth_csv(const std::filesystem::path& path, const SyntheticMarket& market);

// Reads the daily columns back with rows in the price panel's series order.
// Series without truth rows (the index) keep zero rows. Throws ParseError or
// MissingDataError for dates or instruments the panels do not know.
TruthPanel read_truth_csv(const std::filesystem::path& path, const MarketPanels& panels);

}  // namespace itrack
