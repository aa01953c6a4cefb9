#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "itrack/backtest.hpp"
#include "itrack/synthetic_market.hpp"

namespace itrack {

struct RunPaths {
  std::string prices;
  std::string weights;
  std::string output_dir = "out";
  std::string truth;  // synthetic truth CSV, only read by the truth predictor
};

// Everything a command-line run reads from its config file. Field names in
// the JSON form are documented in docs/config.md.
struct RunConfig {
  RunPaths paths;
  std::string index_id = "INDEX";
  BacktestConfig backtest;
  SynthConfig synth;

  // Throws ConfigError naming the first offending field.
  void validate() const;
};

// Unknown keys and type mismatches raise ConfigError with the dotted field
// path. Missing keys keep the values already in `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

// The part of the config that determines backtest results; echoed into
// report.json. Thread count and time limits are left out on purpose.
nlohmann::json backtest_config_json(const BacktestConfig& config);

}  // namespace itrack
