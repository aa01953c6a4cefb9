#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itrack/market_data.hpp"
#include "itrack/milp_portfolio.hpp"
#include "itrack/predictor.hpp"
#include "itrack/synthetic_market.hpp"

namespace itrack {

struct ScheduleParams {
  Step horizon = 21;        // T_A
  Step half_window = 2;     // T_C
  Step validation = 300;    // T_D
  Step estimation = 1260;   // T_E

  void validate() const;  // throws ScheduleError
  friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

struct EpisodeSchedule {
  Step t_n = 0;
  ScheduleParams params;

  StepRange train() const { return {t_n - params.estimation, t_n - params.validation - 1}; }
  StepRange validation() const { return {t_n - params.validation, t_n - params.horizon - params.half_window - 1}; }
  StepRange idle() const { return {t_n - params.horizon - params.half_window, t_n - 1}; }
  Step test() const { return t_n; }
  // Last price step a record dated t needs for its target.
  Step last_price_needed(Step t) const { return t + params.half_window + params.horizon; }
};

// Throws ScheduleError when the parameter ordering fails or the train block
// starts before step 0.
EpisodeSchedule make_schedule(Step t_n, const ScheduleParams& params);

// Mean squared difference of aligned series. Throws EmptyInputError.
double tracking_error(std::span<const double> portfolio, std::span<const double> index);

enum class PredictorSource { mlp, truth };

struct BacktestConfig {
  ScheduleParams schedule;
  Step t0 = 1540;
  std::size_t n_episodes = 24;
  std::vector<std::size_t> n_star_list{30, 50, 100, 150};
  std::vector<Step> historical_windows{504, 756, 1008, 1260};
  bool historical_overlapping = false;
  ModelSpec model;
  TrainConfig train;
  Step record_stride = 1;  // keep every k-th record date
  SolveOptions milp{600.0, 50, 1e-10, {}};
  PredictorSource predictor = PredictorSource::mlp;
  std::size_t threads = 1;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError / ScheduleError
};

// Everything decided for episode t_n. Built from prices at steps <= t_n - 1.
struct EpisodeArtifacts {
  EpisodeSchedule schedule;
  std::size_t train_records = 0;
  std::size_t validation_records = 0;
  std::optional<PredictorModel> model;
  TrainHistory history;
  std::vector<std::size_t> test_series;           // S_{t_n} in series order
  std::map<std::size_t, FactorEstimate> predictions;
  std::vector<std::size_t> excluded;              // S*
  std::map<std::string, std::map<std::size_t, FactorEstimate>> historical;  // by estimator name
  std::vector<MilpProblem> problems;              // one per N*
  std::vector<MilpSolution> solutions;
  std::vector<std::string> failures;              // per N*, empty when solved
  std::vector<std::string> warnings;
};

struct TrainedEpisode {
  EpisodeSchedule schedule;
  std::size_t train_records = 0;
  std::size_t validation_records = 0;
  PredictorModel model;
  TrainHistory history;
};

// Collects the train and validation records of episode t_n from prices at
// steps <= t_n - 1 and trains the episode model.
TrainedEpisode train_episode(const MarketPanels& panels, const BacktestConfig& cfg, Step t_n);

struct EpisodePredictions {
  std::map<std::size_t, FactorEstimate> predictions;  // by series
  std::vector<std::size_t> excluded;                  // S*: members without enough history
};

// Predicts every member of S_{t_n}. Throws LookAheadError when the model is
// bound to another episode.
EpisodePredictions predict_episode(const MarketPanels& panels, const PredictorModel& model, Step t_n);

// MILP inputs for t_n, with prior weights taken at t_n - 1. n_star is left 0.
BuildInputs milp_inputs(const MarketPanels& panels, Step t_n, const std::map<std::size_t, FactorEstimate>& predictions,
                        std::span<const std::size_t> excluded);

// Builds records, trains (or uses the truth oracle), predicts and solves the
// MILP for each N*. `truth` is required when cfg.predictor is truth.
EpisodeArtifacts build_episode(const MarketPanels& panels, const BacktestConfig& cfg, Step t_n,
                               const TruthPanel* truth = nullptr);

struct EstimatorPe {
  std::string name;
  double sse = 0.0;
  std::size_t n = 0;
};

struct PortfolioOutcome {
  std::size_t n_star = 0;
  bool ok = false;
  std::string status;
  std::string failure;
  double objective = 0.0;
  std::size_t support = 0;
  SolverStats stats;
  double portfolio_return = 0.0;
  std::vector<std::pair<std::string, double>> holdings;  // nonzero weights
};

struct StrategyReturn {
  bool ok = false;
  double portfolio_return = 0.0;
};

struct EpisodeResult {
  Step t_n = 0;
  std::string date;
  int year = 0;
  std::size_t train_records = 0;
  std::size_t validation_records = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
  std::vector<std::string> excluded;
  std::vector<EstimatorPe> pe;
  double index_return = 0.0;
  std::vector<PortfolioOutcome> portfolios;
  StrategyReturn full_replication;  // weights at t_n - 1
  StrategyReturn zero_lag;          // weights at t_n, diagnostic
  std::vector<std::string> warnings;
};

EpisodeResult evaluate_episode(const MarketPanels& panels, const BacktestConfig& cfg, const EpisodeArtifacts& art);

struct TeSummary {
  double te = 0.0;
  std::size_t episodes = 0;
};

struct BacktestReport {
  BacktestConfig config;
  std::vector<EpisodeResult> episodes;

  // Aggregates, recomputed from the episode records on every call.
  std::map<std::string, double> aggregate_pe() const;  // sum sse / sum n
  std::map<int, std::map<std::string, double>> pe_by_year() const;
  std::map<std::size_t, TeSummary> te_by_nstar() const;
  TeSummary full_replication_te() const;
  TeSummary zero_lag_te() const;
  std::string best_historical() const;  // lowest aggregate PE among historical windows
};

BacktestReport run_backtest(const MarketPanels& panels, const BacktestConfig& cfg, const TruthPanel* truth = nullptr);

std::string historical_name(Step window);
std::string predictor_name(const BacktestConfig& cfg);

void write_report_json(const BacktestReport& report, const std::filesystem::path& path);
void write_pe_by_year_csv(const BacktestReport& report, const std::filesystem::path& path);
void write_te_by_nstar_csv(const BacktestReport& report, const std::filesystem::path& path);

}  // namespace itrack
