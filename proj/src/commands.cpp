#include "itrack/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "itrack/csv.hpp"
#include "itrack/errors.hpp"

namespace itrack {

namespace {

using json = nlohmann::json;

std::filesystem::path output_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.paths.output_dir.empty() ? "." : cfg.paths.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("paths.output_dir", "cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

void require_file(const std::string& value, const std::string& field) {
  if (value.empty()) throw ConfigError(field, "is required");
  if (!std::filesystem::is_regular_file(value)) throw ConfigError(field, "no such file '" + value + "'");
}

void expect_header(CsvReader& in, const std::string& file, const std::vector<std::string>& want) {
  auto header = in.next();
  if (!header || *header != want) {
    std::string joined;
    for (const auto& w : want) joined += (joined.empty() ? "" : ",") + w;
    throw ParseError(file, 1, "expected header " + joined);
  }
}

double field_double(const std::vector<std::string>& row, std::size_t k, const std::string& file, std::size_t line) {
  try {
    return parse_double(row[k]);
  } catch (const std::invalid_argument& e) {
    throw ParseError(file, line, e.what());
  }
}

std::string check_date(const std::string& text, const std::string& file, std::size_t line) {
  try {
    return Date::parse(text).iso();
  } catch (const std::exception&) {
    throw ParseError(file, line, "bad date '" + text + "'");
  }
}

// Re-reads a CSV and checks that every row has the header's width.
void verify_csv(const std::filesystem::path& path, std::size_t rows_expected) {
  CsvReader in(path);
  auto header = in.next();
  if (!header) throw ValidationError("'" + path.string() + "' came back empty");
  std::size_t rows = 0;
  while (auto row = in.next()) {
    if (row->size() != header->size()) throw ParseError(path.string(), in.line(), "row width differs from header");
    ++rows;
  }
  if (rows != rows_expected) throw ValidationError("'" + path.string() + "' came back with a different row count");
}

}  // namespace

void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << "date,instrument,alpha,beta,rho\n";
  for (const auto& r : rows) {
    out << r.date << ',' << r.instrument << ',' << format_double(r.estimate.alpha) << ','
        << format_double(r.estimate.beta) << ',' << format_double(r.estimate.residual) << '\n';
  }
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
  const std::string file = path.string();
  CsvReader in(path);
  expect_header(in, file, {"date", "instrument", "alpha", "beta", "rho"});
  std::vector<PredictionRow> rows;
  std::set<std::pair<std::string, std::string>> seen;
  while (auto row = in.next()) {
    if (row->size() != 5) throw ParseError(file, in.line(), "expected 5 fields");
    PredictionRow r;
    r.date = check_date((*row)[0], file, in.line());
    r.instrument = (*row)[1];
    if (r.instrument.empty()) throw ParseError(file, in.line(), "empty instrument id");
    r.estimate = FactorEstimate{field_double(*row, 2, file, in.line()), field_double(*row, 3, file, in.line()),
                                field_double(*row, 4, file, in.line()), EstimateKind::predicted};
    if (!seen.insert({r.date, r.instrument}).second) {
      throw ParseError(file, in.line(), "duplicate prediction for '" + r.instrument + "' on " + r.date);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_holdings_csv(const std::filesystem::path& path, const std::vector<HoldingRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << "date,instrument,weight\n";
  for (const auto& r : rows) out << r.date << ',' << r.instrument << ',' << format_double(r.weight) << '\n';
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

std::vector<HoldingRow> read_holdings_csv(const std::filesystem::path& path) {
  const std::string file = path.string();
  CsvReader in(path);
  expect_header(in, file, {"date", "instrument", "weight"});
  std::vector<HoldingRow> rows;
  while (auto row = in.next()) {
    if (row->size() != 3) throw ParseError(file, in.line(), "expected 3 fields");
    rows.push_back({check_date((*row)[0], file, in.line()), (*row)[1], field_double(*row, 2, file, in.line())});
  }
  return rows;
}

Step resolve_date(const MarketPanels& panels, const std::string& iso, const std::string& field) {
  if (iso.empty()) throw ConfigError(field, "is required");
  Date d;
  try {
    d = Date::parse(iso);
  } catch (const std::exception&) {
    throw ConfigError(field, "expected YYYY-MM-DD, got '" + iso + "'");
  }
  const auto t = panels.calendar.find(d);
  if (!t) throw ConfigError(field, iso + " is not a trading date of the panels");
  return *t;
}

MarketPanels load_configured_panels(const RunConfig& cfg) {
  require_file(cfg.paths.prices, "paths.prices");
  require_file(cfg.paths.weights, "paths.weights");
  return load_panels(cfg.paths.prices, cfg.paths.weights, cfg.index_id);
}

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
  cfg.synth.validate();
  const auto dir = output_dir(cfg);
  const SyntheticMarket m = generate(cfg.synth);
  const auto prices = dir / "prices.csv";
  const auto weights = dir / "weights.csv";
  const auto truth = dir / "truth.csv";
  write_prices_csv(prices, m.panels.calendar, m.panels.prices);
  write_weights_csv(weights, m.panels.calendar, m.panels.prices, m.panels.weights);
  write_truth_csv(truth, m);

  const MarketPanels back = load_panels(prices, weights, cfg.index_id);
  if (back.calendar.size() != m.panels.calendar.size() || back.prices.n_series() != m.panels.prices.n_series()) {
    throw ValidationError("written panels do not reload to the generated shape");
  }
  (void)read_truth_csv(truth, back);
  out << json{{"prices", prices.string()},
              {"weights", weights.string()},
              {"truth", truth.string()},
              {"instruments", cfg.synth.n_instruments},
              {"days", cfg.synth.n_days}}
             .dump(2)
      << '\n';
}

void cmd_ingest(const RunConfig& cfg, std::ostream& out) {
  const MarketPanels p = load_configured_panels(cfg);
  std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0, missing = 0;
  for (Step t = 0; t < static_cast<Step>(p.calendar.size()); ++t) {
    lo = std::min(lo, p.universe.members(t).size());
    hi = std::max(hi, p.universe.members(t).size());
  }
  for (std::size_t s = 0; s < p.prices.n_series(); ++s) {
    for (Step t = 0; t < static_cast<Step>(p.calendar.size()); ++t) missing += p.prices.has(s, t) ? 0 : 1;
  }
  out << json{{"dates", p.calendar.size()},
              {"first_date", p.calendar.date(0).iso()},
              {"last_date", p.calendar.date(static_cast<Step>(p.calendar.size()) - 1).iso()},
              {"series", p.prices.n_series()},
              {"index_id", p.prices.index_id()},
              {"universe_min", lo},
              {"universe_max", hi},
              {"missing_prices", missing}}
             .dump(2)
      << '\n';
}

void cmd_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& out) {
  cfg.validate();
  const MarketPanels panels = load_configured_panels(cfg);
  const Step t_n = resolve_date(panels, opt.rebalance_date, "rebalance_date");
  try {
    (void)make_schedule(t_n, cfg.backtest.schedule);
  } catch (const ScheduleError& e) {
    throw ConfigError("rebalance_date", e.what());
  }
  const std::string date = panels.calendar.date(t_n).iso();
  const std::filesystem::path path =
      opt.checkpoint.empty() ? output_dir(cfg) / ("model_" + date + ".json") : std::filesystem::path(opt.checkpoint);
  TrainedEpisode te = train_episode(panels, cfg.backtest, t_n);
  save_checkpoint(te.model, path);
  const PredictorModel back = load_checkpoint(path);
  if (!std::equal(back.network().params().begin(), back.network().params().end(),
                  te.model.network().params().begin())) {
    throw ValidationError("checkpoint '" + path.string() + "' does not reload to the trained parameters");
  }
  out << json{{"checkpoint", path.string()},
              {"rebalance_date", date},
              {"train_records", te.train_records},
              {"validation_records", te.validation_records},
              {"epochs_run", te.history.epochs_run},
              {"best_epoch", te.history.best_epoch},
              {"best_validation_loss", te.history.validation_loss.at(te.history.best_epoch - 1)},
              {"early_stopped", te.history.early_stopped}}
             .dump(2)
      << '\n';
}

void cmd_predict(const RunConfig& cfg, const PredictOptions& opt, std::ostream& out) {
  require_file(opt.checkpoint, "checkpoint");
  const MarketPanels panels = load_configured_panels(cfg);
  const PredictorModel model = load_checkpoint(opt.checkpoint);
  if (!model.episode()) throw ConfigError("checkpoint", "model carries no episode binding");
  Step t_n = model.episode()->t_n;
  if (!opt.rebalance_date.empty()) t_n = resolve_date(panels, opt.rebalance_date, "rebalance_date");
  if (t_n < 0 || t_n >= static_cast<Step>(panels.calendar.size())) {
    throw ConfigError("checkpoint", "episode step " + std::to_string(t_n) + " lies outside the panels");
  }
  const std::string date = panels.calendar.date(t_n).iso();
  const EpisodePredictions ep = predict_episode(panels, model, t_n);
  std::vector<PredictionRow> rows;
  for (const auto& [s, e] : ep.predictions) rows.push_back({date, panels.prices.id(s), e});
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.instrument < b.instrument; });
  const std::filesystem::path path =
      opt.output.empty() ? output_dir(cfg) / ("predictions_" + date + ".csv") : std::filesystem::path(opt.output);
  write_predictions_csv(path, rows);
  if (read_predictions_csv(path).size() != rows.size()) throw ValidationError("predictions did not re-parse");
  std::vector<std::string> excluded;
  for (std::size_t s : ep.excluded) excluded.push_back(panels.prices.id(s));
  out << json{{"predictions", path.string()}, {"rebalance_date", date}, {"predicted", rows.size()}, {"excluded", excluded}}
             .dump(2)
      << '\n';
}

void cmd_construct(const RunConfig& cfg, const ConstructOptions& opt, std::ostream& out) {
  require_file(opt.predictions, "predictions");
  const MarketPanels panels = load_configured_panels(cfg);
  const auto rows = read_predictions_csv(opt.predictions);

  std::string date = opt.rebalance_date;
  if (date.empty()) {
    std::set<std::string> dates;
    for (const auto& r : rows) dates.insert(r.date);
    if (dates.size() != 1) throw ConfigError("rebalance_date", "predictions span several dates; pass --rebalance-date");
    date = *dates.begin();
  }
  const Step t_n = resolve_date(panels, date, "rebalance_date");
  if (t_n < 1) throw ConfigError("rebalance_date", "needs a previous trading date for the prior weights");
  date = panels.calendar.date(t_n).iso();

  std::size_t n_star = 0;
  if (opt.n_star) {
    n_star = *opt.n_star;
  } else if (cfg.backtest.n_star_list.size() == 1) {
    n_star = cfg.backtest.n_star_list.front();
  } else {
    throw ConfigError("n_star", "construct needs a single value; pass --n-star");
  }
  if (n_star == 0) throw ConfigError("n_star", "must be positive");

  std::map<std::size_t, FactorEstimate> predictions;
  for (const auto& r : rows) {
    if (r.date != date) continue;
    const auto s = panels.prices.find(r.instrument);
    if (!s) throw ValidationError("prediction for unknown instrument '" + r.instrument + "'");
    predictions[*s] = r.estimate;
  }
  std::vector<std::size_t> excluded;
  for (std::size_t s : panels.universe.members(t_n)) {
    if (!predictions.contains(s)) excluded.push_back(s);
  }
  BuildInputs in = milp_inputs(panels, t_n, predictions, excluded);
  in.n_star = n_star;
  const MilpProblem problem = build_problem(in);
  const MilpSolution sol = solve(problem, cfg.backtest.milp);

  const auto dir = output_dir(cfg);
  const std::string stem = date + "_n" + std::to_string(n_star);
  save_problem_json(problem, dir / ("problem_" + stem + ".json"));
  save_solution_json(sol, dir / ("solution_" + stem + ".json"));
  if (sol.status == SolveStatus::infeasible) throw ModelingError("MILP is infeasible: " + sol.infeasibility);

  std::vector<HoldingRow> holdings;
  for (std::size_t i = 0; i < sol.ids.size(); ++i) {
    if (sol.weights[i] > kInclusionThreshold) holdings.push_back({date, sol.ids[i], sol.weights[i]});
  }
  const std::filesystem::path path =
      opt.output.empty() ? dir / ("weights_" + stem + ".csv") : std::filesystem::path(opt.output);
  write_holdings_csv(path, holdings);
  if (read_holdings_csv(path).size() != holdings.size()) throw ValidationError("weights did not re-parse");
  const SolutionCheck check = check_solution(problem, sol);
  out << json{{"weights", path.string()},
              {"rebalance_date", date},
              {"n_star", n_star},
              {"status", to_string(sol.status)},
              {"objective", sol.objective},
              {"support", check.support},
              {"excluded", problem.excluded_count()},
              {"nodes", sol.stats.nodes}}
             .dump(2)
      << '\n';
}

void cmd_backtest(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const MarketPanels panels = load_configured_panels(cfg);
  std::optional<TruthPanel> truth;
  if (cfg.backtest.predictor == PredictorSource::truth) {
    require_file(cfg.paths.truth, "paths.truth");
    truth = read_truth_csv(cfg.paths.truth, panels);
  }
  const BacktestReport report = run_backtest(panels, cfg.backtest, truth ? &*truth : nullptr);
  const auto dir = output_dir(cfg);
  const auto report_path = dir / "report.json";
  const auto pe_path = dir / "pe_by_year.csv";
  const auto te_path = dir / "te_by_nstar.csv";
  write_report_json(report, report_path);
  write_pe_by_year_csv(report, pe_path);
  write_te_by_nstar_csv(report, te_path);

  std::ifstream check(report_path);
  if (json::parse(check).at("episodes").size() != report.episodes.size()) {
    throw ValidationError("report.json did not re-parse to the episode count");
  }
  verify_csv(pe_path, report.pe_by_year().size() + 1);
  verify_csv(te_path, cfg.backtest.n_star_list.size());

  json pe = json::object();
  for (const auto& [name, v] : report.aggregate_pe()) pe[name] = v;
  json te = json::object();
  for (const auto& [cap, s] : report.te_by_nstar()) te[std::to_string(cap)] = std::isfinite(s.te) ? json(s.te) : json(nullptr);
  json summary = json::object();
  summary["files"] = {report_path.string(), pe_path.string(), te_path.string()};
  summary["aggregate_pe"] = std::move(pe);
  summary["best_historical"] = report.best_historical();
  summary["te_by_nstar"] = std::move(te);
  summary["full_replication_te"] = report.full_replication_te().te;
  out << summary.dump(2) << '\n';
}

}  // namespace itrack
