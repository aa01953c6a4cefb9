#include <gtest/gtest.h>

#include "itrack/errors.hpp"
#include "itrack/run_config.hpp"
#include "test_util.hpp"

namespace itrack {
namespace {

using json = nlohmann::json;

std::string field_of(const json& j) {
  try {
    run_config_from_json(j).validate();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

TEST(RunConfig, EmptyObjectKeepsDefaults) {
  const auto c = run_config_from_json(json::object());
  EXPECT_EQ(c.index_id, "INDEX");
  EXPECT_EQ(c.backtest.schedule.horizon, 21);
  EXPECT_EQ(c.backtest.n_star_list, (std::vector<std::size_t>{30, 50, 100, 150}));
  EXPECT_EQ(c.backtest.model.network.input_dim, c.backtest.model.grid.size());
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, ReadsNestedFields) {
  const auto c = run_config_from_json(json::parse(R"({
    "paths": {"prices": "p.csv", "weights": "w.csv", "output_dir": "o"},
    "index_id": "IDX", "seed": 9, "threads": 2, "predictor": "truth",
    "schedule": {"T_A": 10, "T_C": 1, "T_D": 100, "T_E": 400, "t0": 500, "n_episodes": 3},
    "n_star": [5, 7],
    "historical": {"windows": [40], "overlapping": true},
    "features": {"tau_offsets": [1, 2], "window_lengths": [5, 9], "cdf_granularity": "per_kind"},
    "network": {"extractor_width": 16, "dropout": 0.0},
    "train": {"initial_lr": 0.5, "record_stride": 4},
    "milp": {"node_limit": 7},
    "synth": {"n_instruments": 30, "weighting": "equal"}
  })"));
  EXPECT_EQ(c.paths.prices, "p.csv");
  EXPECT_EQ(c.index_id, "IDX");
  EXPECT_EQ(c.synth.index_id, "IDX");
  EXPECT_EQ(c.backtest.seed, 9u);
  EXPECT_EQ(c.synth.seed, 9u);
  EXPECT_EQ(c.backtest.threads, 2u);
  EXPECT_EQ(c.backtest.predictor, PredictorSource::truth);
  EXPECT_EQ(c.backtest.schedule, (ScheduleParams{10, 1, 100, 400}));
  EXPECT_EQ(c.backtest.t0, 500);
  EXPECT_EQ(c.backtest.n_star_list, (std::vector<std::size_t>{5, 7}));
  EXPECT_TRUE(c.backtest.historical_overlapping);
  EXPECT_EQ(c.backtest.model.granularity, CdfGranularity::per_kind);
  EXPECT_EQ(c.backtest.model.network.input_dim, c.backtest.model.grid.size());
  EXPECT_EQ(c.backtest.model.network.extractor_width, 16u);
  EXPECT_EQ(c.backtest.train.initial_lr, 0.5);
  EXPECT_EQ(c.backtest.record_stride, 4);
  EXPECT_EQ(c.backtest.milp.node_limit, 7u);
  EXPECT_EQ(c.synth.weighting, IndexWeighting::equal);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, ErrorsNameTheDottedField) {
  EXPECT_EQ(field_of(json::parse(R"({"schedule": {"T_A": "x"}})")), "schedule.T_A");
  EXPECT_EQ(field_of(json::parse(R"({"train": {"bogus": 1}})")), "train.bogus");
  EXPECT_EQ(field_of(json::parse(R"({"bogus": 1})")), "bogus");
  EXPECT_EQ(field_of(json::parse(R"({"n_star": [5, -1]})")), "n_star[1]");
  EXPECT_EQ(field_of(json::parse(R"({"n_star": []})")), "n_star");
  EXPECT_EQ(field_of(json::parse(R"({"predictor": "oracle"})")), "predictor");
  EXPECT_EQ(field_of(json::parse(R"({"features": {"cdf_granularity": "x"}})")), "features.cdf_granularity");
  EXPECT_EQ(field_of(json::parse(R"({"features": {"window_lengths": [1]}})")), "features.window_lengths");
  EXPECT_EQ(field_of(json::parse(R"({"network": {"dropout": 1.5}})")), "network.dropout");
  EXPECT_EQ(field_of(json::parse(R"({"historical": {"windows": [10]}})")), "historical.windows");
  EXPECT_EQ(field_of(json::parse(R"({"schedule": {"T_D": 10}})")), "schedule");
  EXPECT_EQ(field_of(json::parse(R"({"synth": {"kappa": 2.0}})")), "synth.kappa");
  EXPECT_EQ(field_of(json::parse(R"({"paths": []})")), "paths");
  EXPECT_EQ(field_of(json::parse(R"({"threads": 0})")), "threads");
  EXPECT_EQ(field_of(json::parse(R"({"index_id": ""})")), "index_id");
  EXPECT_EQ(field_of(json::parse(R"({"train": {"batch_size": 0}})")), "train.batch_size");
}

TEST(RunConfig, FileErrors) {
  testing::TempDir dir;
  try {
    load_run_config(dir / "missing.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "config");
  }
  testing::write_text(dir / "bad.json", "{ not json");
  EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
}

TEST(RunConfig, JsonRoundTrip) {
  auto c = run_config_from_json(json::parse(R"({"seed": 4, "n_star": [3], "synth": {"n_days": 900}})"));
  const auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(backtest_config_json(back.backtest), backtest_config_json(c.backtest));
}

}  // namespace
}  // namespace itrack
