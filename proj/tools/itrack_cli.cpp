#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "itrack/commands.hpp"
#include "itrack/errors.hpp"

namespace {

using namespace itrack;

// Flags shared by every subcommand; each overrides the config file.
struct CommonFlags {
  std::string config;
  std::string prices;
  std::string weights;
  std::string index_id;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run config");
  cmd->add_option("--prices", f.prices, "prices CSV (overrides paths.prices)");
  cmd->add_option("--weights", f.weights, "index weights CSV (overrides paths.weights)");
  cmd->add_option("--index-id", f.index_id, "id of the index pseudo-instrument");
  cmd->add_option("--output-dir", f.output_dir, "directory for written artifacts");
  cmd->add_option("--seed", f.seed, "seed for every random draw");
  cmd->add_option("--threads", f.threads, "worker threads for the backtest")->check(CLI::PositiveNumber);
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (!f.prices.empty()) cfg.paths.prices = f.prices;
  if (!f.weights.empty()) cfg.paths.weights = f.weights;
  if (!f.output_dir.empty()) cfg.paths.output_dir = f.output_dir;
  if (!f.index_id.empty()) {
    cfg.index_id = f.index_id;
    cfg.synth.index_id = f.index_id;
  }
  if (f.seed) {
    cfg.backtest.seed = *f.seed;
    cfg.synth.seed = *f.seed;
  }
  if (f.threads) cfg.backtest.threads = *f.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Index tracking with learned factor coefficients and a cardinality-constrained MILP"};
  app.require_subcommand(1);
  CommonFlags common;

  auto* synth = app.add_subcommand("synth", "generate a synthetic market (prices, weights, truth)");
  add_common(synth, common);
  std::size_t instruments = 0, days = 0;
  std::string weighting;
  auto* instruments_opt = synth->add_option("--instruments", instruments, "number of instruments");
  auto* days_opt = synth->add_option("--days", days, "number of trading days");
  synth->add_option("--weighting", weighting, "cap or equal")->check(CLI::IsMember({"cap", "equal"}));

  auto* ingest = app.add_subcommand("ingest", "validate and summarize the price and weight panels");
  add_common(ingest, common);

  auto* train = app.add_subcommand("train", "train and checkpoint the model of one rebalance date");
  add_common(train, common);
  TrainOptions train_opt;
  train->add_option("--rebalance-date", train_opt.rebalance_date, "rebalance date t_n (YYYY-MM-DD)")->required();
  train->add_option("--checkpoint", train_opt.checkpoint, "checkpoint path to write");

  auto* predict = app.add_subcommand("predict", "predict alpha, beta and rho for every constituent");
  add_common(predict, common);
  PredictOptions predict_opt;
  predict->add_option("--checkpoint", predict_opt.checkpoint, "trained model checkpoint")->required();
  predict->add_option("--rebalance-date", predict_opt.rebalance_date, "date to predict (default: the model's)");
  predict->add_option("--output", predict_opt.output, "predictions CSV to write");

  auto* construct = app.add_subcommand("construct", "solve the partial-replication MILP for one date");
  add_common(construct, common);
  ConstructOptions construct_opt;
  std::size_t construct_n_star = 0;
  construct->add_option("--predictions", construct_opt.predictions, "predictions CSV")->required();
  construct->add_option("--rebalance-date", construct_opt.rebalance_date, "rebalance date (default: from the CSV)");
  auto* construct_n_opt = construct->add_option("--n-star", construct_n_star, "cardinality cap N*");
  construct->add_option("--output", construct_opt.output, "weights CSV to write");

  auto* backtest = app.add_subcommand("backtest", "run the walk-forward protocol and write the report");
  add_common(backtest, common);
  std::vector<std::size_t> backtest_n_star;
  std::size_t n_episodes = 0;
  auto* backtest_n_opt = backtest->add_option("--n-star", backtest_n_star, "cardinality caps (repeatable)");
  auto* episodes_opt = backtest->add_option("--n-episodes", n_episodes, "number of rebalance dates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg = resolve(common);
    if (*synth) {
      if (instruments_opt->count() > 0) cfg.synth.n_instruments = instruments;
      if (days_opt->count() > 0) cfg.synth.n_days = days;
      if (!weighting.empty()) cfg.synth.weighting = weighting == "equal" ? IndexWeighting::equal : IndexWeighting::cap;
      cmd_synth(cfg, std::cout);
    } else if (*ingest) {
      cmd_ingest(cfg, std::cout);
    } else if (*train) {
      cmd_train(cfg, train_opt, std::cout);
    } else if (*predict) {
      cmd_predict(cfg, predict_opt, std::cout);
    } else if (*construct) {
      if (construct_n_opt->count() > 0) construct_opt.n_star = construct_n_star;
      cmd_construct(cfg, construct_opt, std::cout);
    } else if (*backtest) {
      if (backtest_n_opt->count() > 0) cfg.backtest.n_star_list = backtest_n_star;
      if (episodes_opt->count() > 0) cfg.backtest.n_episodes = n_episodes;
      cmd_backtest(cfg, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "itrack " << name << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "itrack " << name << ": " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
