#include "itrack/backtest.hpp"
#include "itrack/run_config.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <fstream>
#include <set>
#include <thread>

#include "itrack/errors.hpp"
#include "json.hpp"

namespace itrack {

namespace {

using json = nlohmann::json;

std::uint64_t episode_seed(std::uint64_t seed, Step t_n) {
  std::uint64_t x = seed ^ (static_cast<std::uint64_t>(t_n) * 0x9e3779b97f4a7c15ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void collect_records(FeatureBuilder& fb, const ReturnPanel& visible, const UniverseCalendar& universe,
                     StepRange block, const ScheduleParams& sp, Step stride, std::vector<Record>& out) {
  const std::size_t m = visible.index_series();
  for (Step t = block.first; t <= block.second; t += stride) {
    if (t < 1) continue;
    for (std::size_t s : universe.members(t)) {
      auto x = fb.try_build(s, t - 1);
      if (!x) continue;
      FactorEstimate target;
      try {
        target = make_target(visible, s, t, sp.horizon, sp.half_window);
      } catch (const MissingDataError&) {
        continue;
      }
      Record r;
      r.series = s;
      r.t = t;
      r.x = std::move(*x);
      r.target = target;
      r.instrument_return = *visible.at(s, t, sp.horizon);
      r.index_return = *visible.at(m, t, sp.horizon);
      out.push_back(std::move(r));
    }
  }
}

std::map<std::string, double> weights_by_id(const MarketPanels& panels, Step t) {
  std::map<std::string, double> out;
  for (const auto& [s, w] : panels.weights.at(t)) out[panels.prices.id(s)] = w;
  return out;
}

StrategyReturn realize(const MarketPanels& panels, const std::vector<std::pair<std::size_t, double>>& weights,
                       Step t_n, Step horizon, std::vector<std::string>& warnings, const std::string& label) {
  StrategyReturn r;
  double total = 0.0;
  for (const auto& [s, w] : weights) {
    if (!(w > kInclusionThreshold)) continue;
    const auto ri = try_horizon_return(panels.prices, s, t_n, horizon);
    if (!ri) {
      warnings.push_back(label + ": held instrument '" + panels.prices.id(s) +
                         "' has no price at the end of the holding period; episode excluded");
      return r;
    }
    total += w * *ri;
  }
  r.ok = true;
  r.portfolio_return = total;
  return r;
}

}  // namespace

void ScheduleParams::validate() const {
  if (horizon < 1 || half_window < 0) throw ScheduleError("T_A must be positive and T_C non-negative");
  if (!(horizon + half_window >= 1)) throw ScheduleError("T_A + T_C must be at least 1");
  if (!(validation > horizon + half_window)) {
    throw ScheduleError("T_D (" + std::to_string(validation) + ") must exceed T_A + T_C (" +
                        std::to_string(horizon + half_window) + ")");
  }
  if (!(estimation > validation)) {
    throw ScheduleError("T_E (" + std::to_string(estimation) + ") must exceed T_D (" + std::to_string(validation) +
                        ")");
  }
}

EpisodeSchedule make_schedule(Step t_n, const ScheduleParams& params) {
  params.validate();
  if (t_n - params.estimation < 0) {
    throw ScheduleError("rebalance step " + std::to_string(t_n) + " leaves no room for a train block of " +
                        std::to_string(params.estimation) + " steps");
  }
  return EpisodeSchedule{t_n, params};
}

double tracking_error(std::span<const double> portfolio, std::span<const double> index) {
  if (portfolio.size() != index.size()) throw ShapeError("tracking error series differ in length");
  if (portfolio.empty()) throw EmptyInputError("tracking error of an empty series");
  double s = 0.0;
  for (std::size_t k = 0; k < portfolio.size(); ++k) {
    const double d = portfolio[k] - index[k];
    s += d * d;
  }
  return s / static_cast<double>(portfolio.size());
}

void BacktestConfig::validate() const {
  schedule.validate();
  model.grid.validate();
  model.network.validate();
  train.validate();
  if (n_episodes == 0) throw ConfigError("schedule.n_episodes", "must be positive");
  if (n_star_list.empty()) throw ConfigError("n_star", "must list at least one cap");
  for (auto k : n_star_list) {
    if (k == 0) throw ConfigError("n_star", "caps must be positive");
  }
  for (auto w : historical_windows) {
    if (w < 2 * schedule.horizon) throw ConfigError("historical.windows", "each window must span two horizons");
  }
  if (record_stride < 1) throw ConfigError("train.record_stride", "must be positive");
  if (threads < 1) throw ConfigError("threads", "must be positive");
  if (t0 - schedule.estimation < 0) throw ConfigError("schedule.t0", "leaves no room for the first train block");
}

std::string historical_name(Step window) { return "hist_" + std::to_string(window); }

std::string predictor_name(const BacktestConfig& cfg) {
  return cfg.predictor == PredictorSource::truth ? "truth" : cfg.model.network.extractor;
}

TrainedEpisode train_episode(const MarketPanels& panels, const BacktestConfig& cfg, Step t_n) {
  const EpisodeSchedule schedule = make_schedule(t_n, cfg.schedule);
  if (t_n >= static_cast<Step>(panels.calendar.size())) {
    throw ScheduleError("rebalance step " + std::to_string(t_n) + " lies beyond the panel");
  }
  const ReturnPanel visible(panels.prices, t_n - 1);
  FeatureBuilder fb(visible, cfg.model.grid);
  std::vector<Record> train_set, validation_set;
  collect_records(fb, visible, panels.universe, schedule.train(), cfg.schedule, cfg.record_stride, train_set);
  collect_records(fb, visible, panels.universe, schedule.validation(), cfg.schedule, cfg.record_stride,
                  validation_set);
  TrainConfig tc = cfg.train;
  tc.seed = episode_seed(cfg.seed, t_n);
  const EpisodeTag tag{t_n, schedule.train(), schedule.validation()};
  TrainHistory history;
  PredictorModel model = train(train_set, validation_set, tc, cfg.model, tag, &history);
  return TrainedEpisode{schedule, train_set.size(), validation_set.size(), std::move(model), std::move(history)};
}

EpisodePredictions predict_episode(const MarketPanels& panels, const PredictorModel& model, Step t_n) {
  model.require_episode(t_n);
  const ReturnPanel visible(panels.prices, t_n - 1);
  FeatureBuilder fb(visible, model.grid());
  EpisodePredictions out;
  std::vector<FeatureTensor> xs;
  std::vector<std::size_t> predicted;
  for (std::size_t s : panels.universe.members(t_n)) {
    if (auto x = fb.try_build(s, t_n - 1)) {
      xs.push_back(std::move(*x));
      predicted.push_back(s);
    } else {
      out.excluded.push_back(s);
    }
  }
  std::vector<const FeatureTensor*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  if (!ptrs.empty()) {
    const auto est = model.forward_batch(ptrs);
    for (std::size_t k = 0; k < predicted.size(); ++k) out.predictions[predicted[k]] = est[k];
  }
  return out;
}

BuildInputs milp_inputs(const MarketPanels& panels, Step t_n, const std::map<std::size_t, FactorEstimate>& predictions,
                        std::span<const std::size_t> excluded) {
  if (t_n < 1 || t_n >= static_cast<Step>(panels.calendar.size())) {
    throw ScheduleError("rebalance step " + std::to_string(t_n) + " lies outside the panel");
  }
  BuildInputs in;
  in.date = panels.calendar.date(t_n).iso();
  in.prior_weights = weights_by_id(panels, t_n - 1);
  for (std::size_t s : panels.universe.members(t_n)) in.universe.insert(panels.prices.id(s));
  for (std::size_t s : excluded) in.exclusions.insert(panels.prices.id(s));
  for (const auto& [s, e] : predictions) in.predictions[panels.prices.id(s)] = e;
  return in;
}

EpisodeArtifacts build_episode(const MarketPanels& panels, const BacktestConfig& cfg, Step t_n,
                               const TruthPanel* truth) {
  EpisodeArtifacts art;
  art.schedule = make_schedule(t_n, cfg.schedule);
  if (t_n >= static_cast<Step>(panels.calendar.size())) {
    throw ScheduleError("rebalance step " + std::to_string(t_n) + " lies beyond the panel");
  }
  const ScheduleParams& sp = cfg.schedule;
  const ReturnPanel visible(panels.prices, t_n - 1);
  const auto members = panels.universe.members(t_n);
  art.test_series.assign(members.begin(), members.end());

  if (cfg.predictor == PredictorSource::mlp) {
    TrainedEpisode te = train_episode(panels, cfg, t_n);
    art.train_records = te.train_records;
    art.validation_records = te.validation_records;
    art.history = std::move(te.history);
    art.model = std::move(te.model);
    EpisodePredictions ep = predict_episode(panels, *art.model, t_n);
    art.predictions = std::move(ep.predictions);
    art.excluded = std::move(ep.excluded);
  } else {
    if (truth == nullptr) throw ConfigError("predictor", "the truth predictor needs a synthetic truth panel");
    for (std::size_t s : art.test_series) {
      if (s >= truth->n_instruments() || truth->alpha[s].size() != panels.calendar.size()) {
        throw ShapeError("truth panel has no row for '" + panels.prices.id(s) + "'");
      }
    }
    for (std::size_t s : art.test_series) {
      const auto [a, b] = truth->horizon(s, t_n, sp.horizon);
      art.predictions[s] = FactorEstimate{a, b, 0.0, EstimateKind::predicted};
    }
  }

  const HistoricalOptions hopt{cfg.historical_overlapping};
  for (Step w : cfg.historical_windows) {
    auto& dst = art.historical[historical_name(w)];
    for (std::size_t s : art.test_series) {
      try {
        dst[s] = historical_estimate(visible, s, t_n, w, sp.horizon, hopt);
      } catch (const MissingDataError&) {
      }
    }
  }

  BuildInputs in = milp_inputs(panels, t_n, art.predictions, art.excluded);
  for (std::size_t cap : cfg.n_star_list) {
    in.n_star = cap;
    try {
      MilpProblem p = build_problem(in);
      MilpSolution sol = solve(p, cfg.milp);
      art.failures.push_back(sol.status == SolveStatus::infeasible ? "infeasible: " + sol.infeasibility : "");
      art.problems.push_back(std::move(p));
      art.solutions.push_back(std::move(sol));
    } catch (const ModelingError& e) {
      art.failures.emplace_back(e.what());
      art.problems.emplace_back();
      art.solutions.emplace_back();
    }
  }
  return art;
}

EpisodeResult evaluate_episode(const MarketPanels& panels, const BacktestConfig& cfg, const EpisodeArtifacts& art) {
  EpisodeResult res;
  const Step t_n = art.schedule.t_n;
  const Step h = cfg.schedule.horizon;
  const std::size_t m = panels.prices.index_series();
  res.t_n = t_n;
  res.date = panels.calendar.date(t_n).iso();
  res.year = panels.calendar.date(t_n).year();
  res.train_records = art.train_records;
  res.validation_records = art.validation_records;
  res.epochs_run = art.history.epochs_run;
  res.best_epoch = art.history.best_epoch;
  if (res.best_epoch > 0) res.best_validation_loss = art.history.validation_loss[res.best_epoch - 1];
  for (std::size_t s : art.excluded) res.excluded.push_back(panels.prices.id(s));
  res.warnings = art.warnings;
  res.index_return = horizon_return(panels.prices, m, t_n, h);

  // Prediction errors over a common sample: predicted instruments with a
  // realized return and every historical estimate.
  const std::string pname = predictor_name(cfg);
  res.pe.push_back({pname, 0.0, 0});
  for (Step w : cfg.historical_windows) res.pe.push_back({historical_name(w), 0.0, 0});
  for (const auto& [s, pred] : art.predictions) {
    const auto ri = try_horizon_return(panels.prices, s, t_n, h);
    if (!ri) {
      res.warnings.push_back("instrument '" + panels.prices.id(s) +
                             "' has no realized return for the episode; left out of prediction error");
      continue;
    }
    std::vector<const FactorEstimate*> ests{&pred};
    for (Step w : cfg.historical_windows) {
      const auto& hist = art.historical.at(historical_name(w));
      const auto it = hist.find(s);
      if (it == hist.end()) break;
      ests.push_back(&it->second);
    }
    if (ests.size() != res.pe.size()) continue;
    for (std::size_t k = 0; k < ests.size(); ++k) {
      const double e = *ri - ests[k]->reconstruct(res.index_return);
      res.pe[k].sse += e * e;
      res.pe[k].n += 1;
    }
  }

  for (std::size_t k = 0; k < cfg.n_star_list.size(); ++k) {
    PortfolioOutcome out;
    out.n_star = cfg.n_star_list[k];
    if (!art.failures[k].empty()) {
      out.status = art.solutions[k].status == SolveStatus::infeasible ? "infeasible" : "failed";
      out.failure = art.failures[k];
      res.warnings.push_back("N*=" + std::to_string(out.n_star) + ": " + out.failure);
      res.portfolios.push_back(std::move(out));
      continue;
    }
    const MilpSolution& sol = art.solutions[k];
    out.status = to_string(sol.status);
    out.objective = sol.objective;
    out.support = sol.support();
    out.stats = sol.stats;
    std::vector<std::pair<std::size_t, double>> held;
    for (std::size_t i = 0; i < sol.ids.size(); ++i) {
      if (sol.weights[i] > kInclusionThreshold) {
        held.emplace_back(panels.prices.series_of(sol.ids[i]), sol.weights[i]);
        out.holdings.emplace_back(sol.ids[i], sol.weights[i]);
      }
    }
    const StrategyReturn r = realize(panels, held, t_n, h, res.warnings, "N*=" + std::to_string(out.n_star));
    out.ok = r.ok;
    out.portfolio_return = r.portfolio_return;
    if (!r.ok) out.failure = "held instrument delisted";
    res.portfolios.push_back(std::move(out));
  }

  const auto lagged = panels.weights.at(t_n - 1);
  res.full_replication =
      realize(panels, {lagged.begin(), lagged.end()}, t_n, h, res.warnings, "full replication");
  const auto current = panels.weights.at(t_n);
  res.zero_lag = realize(panels, {current.begin(), current.end()}, t_n, h, res.warnings, "zero-lag replication");
  return res;
}

std::map<std::string, double> BacktestReport::aggregate_pe() const {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.pe) {
      acc[e.name].first += e.sse;
      acc[e.name].second += e.n;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [name, v] : acc) {
    if (v.second > 0) out[name] = v.first / static_cast<double>(v.second);
  }
  return out;
}

std::map<int, std::map<std::string, double>> BacktestReport::pe_by_year() const {
  std::map<int, std::map<std::string, std::pair<double, std::size_t>>> acc;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.pe) {
      acc[ep.year][e.name].first += e.sse;
      acc[ep.year][e.name].second += e.n;
    }
  }
  std::map<int, std::map<std::string, double>> out;
  for (const auto& [year, m] : acc) {
    for (const auto& [name, v] : m) {
      if (v.second > 0) out[year][name] = v.first / static_cast<double>(v.second);
    }
  }
  return out;
}

namespace {
TeSummary mean_te(const std::vector<EpisodeResult>& eps, const std::function<const StrategyReturn*(const EpisodeResult&)>& pick) {
  std::vector<double> port, idx;
  for (const auto& ep : eps) {
    const StrategyReturn* r = pick(ep);
    if (r == nullptr || !r->ok) continue;
    port.push_back(r->portfolio_return);
    idx.push_back(ep.index_return);
  }
  if (port.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0};
  return {tracking_error(port, idx), port.size()};
}
}  // namespace

std::map<std::size_t, TeSummary> BacktestReport::te_by_nstar() const {
  std::map<std::size_t, TeSummary> out;
  for (std::size_t k = 0; k < config.n_star_list.size(); ++k) {
    std::vector<double> port, idx;
    for (const auto& ep : episodes) {
      const auto& o = ep.portfolios.at(k);
      if (!o.ok) continue;
      port.push_back(o.portfolio_return);
      idx.push_back(ep.index_return);
    }
    out[config.n_star_list[k]] =
        port.empty() ? TeSummary{std::numeric_limits<double>::quiet_NaN(), 0} : TeSummary{tracking_error(port, idx), port.size()};
  }
  return out;
}

TeSummary BacktestReport::full_replication_te() const {
  return mean_te(episodes, [](const EpisodeResult& e) { return &e.full_replication; });
}

TeSummary BacktestReport::zero_lag_te() const {
  return mean_te(episodes, [](const EpisodeResult& e) { return &e.zero_lag; });
}

std::string BacktestReport::best_historical() const {
  const auto pe = aggregate_pe();
  std::string best;
  double v = std::numeric_limits<double>::infinity();
  for (Step w : config.historical_windows) {
    const auto it = pe.find(historical_name(w));
    if (it != pe.end() && it->second < v) {
      v = it->second;
      best = it->first;
    }
  }
  return best;
}

BacktestReport run_backtest(const MarketPanels& panels, const BacktestConfig& cfg, const TruthPanel* truth) {
  cfg.validate();
  const Step last = cfg.t0 + static_cast<Step>(cfg.n_episodes - 1) * cfg.schedule.horizon;
  if (last + cfg.schedule.horizon >= static_cast<Step>(panels.calendar.size())) {
    throw ScheduleError("the last episode at step " + std::to_string(last) + " needs prices through step " +
                        std::to_string(last + cfg.schedule.horizon) + " but the panel ends at step " +
                        std::to_string(panels.calendar.size() - 1));
  }
  BacktestReport report;
  report.config = cfg;
  report.episodes.resize(cfg.n_episodes);
  std::vector<std::exception_ptr> errors(cfg.n_episodes);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < cfg.n_episodes; k = next++) {
      try {
        const Step t_n = cfg.t0 + static_cast<Step>(k) * cfg.schedule.horizon;
        const EpisodeArtifacts art = build_episode(panels, cfg, t_n, truth);
        report.episodes[k] = evaluate_episode(panels, cfg, art);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.threads, cfg.n_episodes);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

void write_report_json(const BacktestReport& report, const std::filesystem::path& path) {
  json eps = json::array();
  for (const auto& ep : report.episodes) {
    json pe = json::object();
    for (const auto& e : ep.pe) pe[e.name] = {{"sse", e.sse}, {"n", e.n}};
    json ports = json::array();
    for (const auto& p : ep.portfolios) {
      json holdings = json::object();
      for (const auto& [id, w] : p.holdings) holdings[id] = w;
      json o{{"n_star", p.n_star}, {"ok", p.ok}, {"status", p.status}};
      if (!p.failure.empty()) o["failure"] = p.failure;
      if (p.ok || !p.holdings.empty()) {
        o["objective"] = p.objective;
        o["support"] = p.support;
        o["portfolio_return"] = p.portfolio_return;
        o["squared_tracking_difference"] = (p.portfolio_return - ep.index_return) * (p.portfolio_return - ep.index_return);
        o["solver"] = {{"nodes", p.stats.nodes},
                       {"lp_iterations", p.stats.lp_iterations},
                       {"root_bound", p.stats.root_bound},
                       {"best_bound", p.stats.best_bound},
                       {"gap", p.stats.gap}};
        o["holdings"] = std::move(holdings);
      }
      ports.push_back(std::move(o));
    }
    auto strategy = [](const StrategyReturn& r) {
      return r.ok ? json{{"ok", true}, {"portfolio_return", r.portfolio_return}} : json{{"ok", false}};
    };
    eps.push_back({{"t_n", ep.t_n},
                   {"date", ep.date},
                   {"year", ep.year},
                   {"train_records", ep.train_records},
                   {"validation_records", ep.validation_records},
                   {"training",
                    {{"epochs_run", ep.epochs_run},
                     {"best_epoch", ep.best_epoch},
                     {"best_validation_loss", ep.best_validation_loss}}},
                   {"excluded", ep.excluded},
                   {"index_return", ep.index_return},
                   {"prediction_error", std::move(pe)},
                   {"portfolios", std::move(ports)},
                   {"full_replication", strategy(ep.full_replication)},
                   {"zero_lag_replication", strategy(ep.zero_lag)},
                   {"warnings", ep.warnings}});
  }

  json agg_pe = json::object();
  for (const auto& [name, v] : report.aggregate_pe()) agg_pe[name] = v;
  json by_year = json::object();
  for (const auto& [year, m] : report.pe_by_year()) {
    json row = json::object();
    for (const auto& [name, v] : m) row[name] = v;
    by_year[std::to_string(year)] = std::move(row);
  }
  json te = json::object();
  for (const auto& [cap, s] : report.te_by_nstar()) {
    te[std::to_string(cap)] = {{"te", std::isfinite(s.te) ? json(s.te) : json(nullptr)}, {"episodes", s.episodes}};
  }
  const auto full = report.full_replication_te();
  const auto zero = report.zero_lag_te();
  json j{{"config", backtest_config_json(report.config)},
         {"aggregate",
          {{"prediction_error", std::move(agg_pe)},
           {"best_historical", report.best_historical()},
           {"prediction_error_by_year", std::move(by_year)},
           {"tracking_error", std::move(te)},
           {"full_replication_te", {{"te", full.te}, {"episodes", full.episodes}}},
           {"zero_lag_te", {{"te", zero.te}, {"episodes", zero.episodes}}}}},
         {"episodes", std::move(eps)}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

void write_pe_by_year_csv(const BacktestReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  const std::string pname = predictor_name(report.config);
  std::vector<std::string> hist;
  for (Step w : report.config.historical_windows) hist.push_back(historical_name(w));
  out << "year";
  for (const auto& h : hist) out << ',' << h;
  out << ",best_historical," << pname << '\n';
  auto row = [&](const std::string& label, const std::map<std::string, double>& m) {
    out << label;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& h : hist) {
      out << ',';
      if (const auto it = m.find(h); it != m.end()) {
        out << format_double(it->second);
        best = std::min(best, it->second);
      }
    }
    out << ',' << (std::isfinite(best) ? format_double(best) : "");
    out << ',';
    if (const auto it = m.find(pname); it != m.end()) out << format_double(it->second);
    out << '\n';
  };
  for (const auto& [year, m] : report.pe_by_year()) row(std::to_string(year), m);
  row("all", report.aggregate_pe());
}

void write_te_by_nstar_csv(const BacktestReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  const auto full = report.full_replication_te();
  out << "n_star," << predictor_name(report.config) << ",full,episodes\n";
  for (const auto& [cap, s] : report.te_by_nstar()) {
    out << cap << ',' << (std::isfinite(s.te) ? format_double(s.te) : "") << ','
        << (std::isfinite(full.te) ? format_double(full.te) : "") << ',' << s.episodes << '\n';
  }
}

}  // namespace itrack
