#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "itrack/run_config.hpp"

namespace itrack {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

struct PredictionRow {
  std::string date;
  std::string instrument;
  FactorEstimate estimate;
};

// date,instrument,alpha,beta,rho
void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);

struct HoldingRow {
  std::string date;
  std::string instrument;
  double weight = 0.0;
};

// date,instrument,weight
void write_holdings_csv(const std::filesystem::path& path, const std::vector<HoldingRow>& rows);
std::vector<HoldingRow> read_holdings_csv(const std::filesystem::path& path);

// Subcommand bodies. Each throws on failure: ConfigError for a bad or
// unresolvable setting, other Error types for data and modeling failures.
// Human-readable summaries go to `out`.
void cmd_synth(const RunConfig& cfg, std::ostream& out);
void cmd_ingest(const RunConfig& cfg, std::ostream& out);

struct TrainOptions {
  std::string rebalance_date;
  std::string checkpoint;  // default <output_dir>/model_<date>.json
};
void cmd_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& out);

struct PredictOptions {
  std::string checkpoint;
  std::string rebalance_date;  // default: the checkpoint's episode date
  std::string output;          // default <output_dir>/predictions_<date>.csv
};
void cmd_predict(const RunConfig& cfg, const PredictOptions& opt, std::ostream& out);

struct ConstructOptions {
  std::string predictions;
  std::string rebalance_date;          // default: the single date in the predictions file
  std::optional<std::size_t> n_star;   // default: the config's single N*
  std::string output;                  // default <output_dir>/weights_<date>_n<N>.csv
};
void cmd_construct(const RunConfig& cfg, const ConstructOptions& opt, std::ostream& out);

void cmd_backtest(const RunConfig& cfg, std::ostream& out);

// Step of a trading date; ConfigError naming `field` when absent or malformed.
Step resolve_date(const MarketPanels& panels, const std::string& iso, const std::string& field);

// Loads the configured panels, checking that the paths exist first.
MarketPanels load_configured_panels(const RunConfig& cfg);

}  // namespace itrack
