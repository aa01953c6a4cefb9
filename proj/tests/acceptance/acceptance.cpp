// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "itrack/backtest.hpp"
#include "itrack/features.hpp"
#include "itrack/milp_portfolio.hpp"
#include "itrack/predictor.hpp"
#include "itrack/synthetic_market.hpp"
#include "milp_oracle.hpp"
#include "oracles.hpp"

namespace {

using namespace itrack;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. Theil-Sen against brute-force enumeration.
Outcome theil_sen_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g(0.0, 0.02);
  std::size_t slope_mismatch = 0;
  double worst_intercept = 0.0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<RegressionPoint> pts(5);
    for (auto& p : pts) {
      p.x = g(rng);
      p.y = 0.001 + 1.1 * p.x + g(rng);
    }
    const auto fit = theil_sen(pts);
    const auto ref = oracle::theil_sen(pts);
    if (fit.beta != ref.beta) ++slope_mismatch;
    worst_intercept = std::max(worst_intercept, std::abs(fit.alpha - ref.alpha));
  }
  const double secs = seconds_since(start);
  return {slope_mismatch == 0 && worst_intercept <= 1e-12 && secs < 1.0,
          "slope mismatches " + std::to_string(slope_mismatch) + ", max intercept error " +
              fmt("%.3g", worst_intercept) + ", " + fmt("%.3f", secs) + " s"};
}

// 2. CDF roundtrip and uniformity of the transformed training sample.
Outcome cdf_roundtrip() {
  const auto start = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> size(10, 5000);
  std::uniform_real_distribution<double> loc(-1.0, 1.0), log_scale(std::log(0.01), std::log(2.0));
  double worst_roundtrip = 0.0, worst_excess = -1.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = size(rng);
    // Feature-like draws. The roundtrip error is about the knot gap times
    // (n+1) times the rounding of F near 1, so very heavy tails would exceed
    // an absolute 1e-12 on any double implementation.
    std::normal_distribution<double> d(loc(rng), std::exp(log_scale(rng)));
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    const auto f = fit_cdf(v);
    std::vector<double> u;
    u.reserve(n);
    for (double x : v) {
      worst_roundtrip = std::max(worst_roundtrip, std::abs(f.inverse(f(x)) - x));
      u.push_back(f(x));
    }
    std::uniform_real_distribution<double> in_range(f.min_knot(), f.max_knot());
    for (int j = 0; j < 200; ++j) {
      const double x = in_range(rng);
      worst_roundtrip = std::max(worst_roundtrip, std::abs(f.inverse(f(x)) - x));
    }
    std::sort(u.begin(), u.end());
    double dev = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dev = std::max({dev, std::abs(static_cast<double>(j + 1) / static_cast<double>(n) - u[j]),
                      std::abs(static_cast<double>(j) / static_cast<double>(n) - u[j])});
    }
    worst_excess = std::max(worst_excess, dev - 2.0 / static_cast<double>(n + 1));
  }
  const double secs = seconds_since(start);
  return {worst_roundtrip <= 1e-12 && worst_excess <= 0.0 && secs < 1.0,
          "max roundtrip error " + fmt("%.3g", worst_roundtrip) + ", max uniformity excess over 2/(n+1) " +
              fmt("%.3g", worst_excess) + ", " + fmt("%.3f", secs) + " s"};
}

// 3. Analytic against central-difference gradients on a tiny model.
Outcome gradient_check_tiny() {
  const auto start = Clock::now();
  FeatureGridSpec grid;
  grid.tau_offsets = {1, 6, 11, 16, 21};
  grid.window_lengths = {21, 63, 126, 252};
  std::mt19937_64 rng(303);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Record> recs;
  for (int k = 0; k < 50; ++k) {
    Record r;
    r.t = k;
    r.x = FeatureTensor(grid);
    for (double& v : r.x.values()) v = g(rng);
    r.target = {0.01 * g(rng), 1.0 + 0.3 * g(rng), 0.05 * g(rng), EstimateKind::target};
    recs.push_back(std::move(r));
  }
  NetworkSpec spec;
  spec.input_dim = grid.size();
  spec.extractor_width = 8;
  spec.head_width = 8;
  Network net(spec);
  net.init(17);
  TrainConfig tc;
  const PredictorModel model(grid, fit_cdf_set(recs, CdfGranularity::per_cell), net, tc, std::nullopt);
  const std::vector<Record> batch(recs.begin(), recs.begin() + 4);
  const auto res = gradient_check(model, batch);
  const double secs = seconds_since(start);
  return {res.max_relative_error <= 1e-4 && res.checked > 0 && secs < 5.0,
          "max relative error " + fmt("%.3g", res.max_relative_error) + " over " + std::to_string(res.checked) +
              " parameters (" + std::to_string(res.skipped) + " at kinks skipped), " + fmt("%.3f", secs) + " s"};
}

// 4. Branch-and-bound against support enumeration.
Outcome milp_exactness() {
  const auto start = Clock::now();
  std::size_t mismatches = 0, violations = 0;
  double worst_gap = 0.0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    const std::size_t n_star = 3 + k % 3;
    const auto p = oracle::random_problem(10, n_star, 1000 + k);
    const auto ref = oracle::enumerate(p);
    const auto sol = solve(p);
    if (!ref.feasible || sol.status != SolveStatus::optimal) {
      if (ref.feasible != (sol.status != SolveStatus::infeasible)) ++mismatches;
      continue;
    }
    const double gap = std::abs(sol.objective - ref.objective);
    worst_gap = std::max(worst_gap, gap);
    if (gap > 1e-8) ++mismatches;
    const auto c = check_solution(p, sol);
    if (c.budget > 1e-9 || c.beta > 1e-8 || c.alpha > 1e-8 || c.support > n_star || c.binding > 1e-9 ||
        c.negative > 1e-12) {
      ++violations;
    }
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && violations == 0 && secs < 30.0,
          "objective mismatches " + std::to_string(mismatches) + " (max gap " + fmt("%.3g", worst_gap) +
              "), constraint violations " + std::to_string(violations) + ", " + fmt("%.2f", secs) + " s"};
}

BacktestConfig acceptance_config() {
  BacktestConfig c;
  c.train.initial_lr = 1.0;
  c.train.max_epochs = 40;
  c.record_stride = 3;
  c.threads = 1;
  return c;
}

bool same_estimates(const std::map<std::size_t, FactorEstimate>& a, const std::map<std::size_t, FactorEstimate>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [s, e] : a) {
    const auto it = b.find(s);
    if (it == b.end() || e.alpha != it->second.alpha || e.beta != it->second.beta ||
        e.residual != it->second.residual) {
      return false;
    }
  }
  return true;
}

bool same_problem(const MilpProblem& a, const MilpProblem& b) {
  auto same_vec = [](const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (std::memcmp(&x[k], &y[k], sizeof(double)) != 0) return false;
    }
    return true;
  };
  return a.ids == b.ids && same_vec(a.prior, b.prior) && a.current == b.current && a.excluded == b.excluded &&
         same_vec(a.alpha, b.alpha) && same_vec(a.beta, b.beta) && a.n_star == b.n_star &&
         a.alpha_target == b.alpha_target && a.beta_target == b.beta_target;
}

// Lists every artifact of the episode that differs between the two builds.
std::vector<std::string> artifact_differences(const EpisodeArtifacts& a, const EpisodeArtifacts& b) {
  std::vector<std::string> diff;
  if (a.train_records != b.train_records || a.validation_records != b.validation_records) diff.push_back("records");
  if (!(a.model->cdfs() == b.model->cdfs())) diff.push_back("CDFs");
  if (!std::ranges::equal(a.model->network().params(), b.model->network().params())) {
    diff.push_back("model parameters");
  }
  if (a.history.validation_loss != b.history.validation_loss) diff.push_back("training history");
  if (!same_estimates(a.predictions, b.predictions) || a.excluded != b.excluded) diff.push_back("predictions");
  for (const auto& [name, est] : a.historical) {
    if (!same_estimates(est, b.historical.at(name))) diff.push_back(name);
  }
  for (std::size_t k = 0; k < a.problems.size(); ++k) {
    if (!same_problem(a.problems[k], b.problems[k])) diff.push_back("MILP inputs " + std::to_string(k));
    if (a.solutions[k].weights != b.solutions[k].weights) diff.push_back("weights " + std::to_string(k));
  }
  return diff;
}

// 5. Prices dated t_n or later cannot influence episode t_n.
Outcome poisoning() {
  const auto start = Clock::now();
  SynthConfig sc;
  sc.n_instruments = 40;
  sc.n_days = 1400;
  sc.seed = 5;
  const auto m = generate(sc);
  const BacktestConfig cfg = acceptance_config();
  const Step t_n = 1300;
  const auto clean = build_episode(m.panels, cfg, t_n);

  std::vector<std::string> problems;
  for (double sentinel : {1e9, std::nan("")}) {
    MarketPanels poisoned = m.panels;
    for (std::size_t s = 0; s < poisoned.prices.n_series(); ++s) {
      for (Step t = t_n; t < static_cast<Step>(poisoned.prices.n_steps()); ++t) poisoned.prices.set(s, t, sentinel);
    }
    const auto dirty = build_episode(poisoned, cfg, t_n);
    for (const auto& d : artifact_differences(clean, dirty)) {
      problems.push_back(d + (std::isnan(sentinel) ? " (missing)" : " (1e9)"));
    }
  }
  const double secs = seconds_since(start);
  std::string detail = problems.empty() ? "no artifact changed" : "changed:";
  for (const auto& p : problems) detail += " " + p;
  return {problems.empty() && secs < 120.0, detail + ", " + fmt("%.1f", secs) + " s"};
}

std::string report_bytes(const BacktestReport& rep, const std::filesystem::path& path) {
  write_report_json(rep, path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct FullRun {
  BacktestReport report;
  double seconds = 0.0;
};

FullRun full_run(const SyntheticMarket& m) {
  const auto start = Clock::now();
  FullRun r{run_backtest(m.panels, acceptance_config()), 0.0};
  r.seconds = seconds_since(start);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int k = 1; k < argc; ++k) wanted.insert(std::atoi(argv[k]));
  auto want = [&](int c) { return wanted.empty() || wanted.contains(c); };

  bool all_pass = true;
  auto report = [&](const std::string& label, const Outcome& o) {
    all_pass = all_pass && o.pass;
    std::printf("criterion %s: %s (%s)\n", label.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  };

  if (want(1)) report("1 theil-sen oracle", theil_sen_oracle());
  if (want(2)) report("2 cdf roundtrip and uniformity", cdf_roundtrip());
  if (want(3)) report("3 gradient check", gradient_check_tiny());
  if (want(4)) report("4 milp exactness", milp_exactness());
  if (want(5)) report("5 anti-look-ahead poisoning", poisoning());

  if (want(6) || want(7) || want(8) || want(9)) {
    const SyntheticMarket market = generate(SynthConfig{});
    const FullRun first = full_run(market);
    const BacktestReport& rep = first.report;

    if (want(6)) {
      const auto pe = rep.aggregate_pe();
      const std::string best = rep.best_historical();
      const double mlp = pe.at(predictor_name(rep.config));
      const double hist = pe.at(best);
      const double ratio = mlp / hist;
      report("6 prediction gap",
             {ratio <= 0.9 && first.seconds < 1200.0,
              "mlp PE " + fmt("%.6g", mlp) + ", best historical " + best + " PE " + fmt("%.6g", hist) + ", ratio " +
                  fmt("%.4f", ratio) + " (bar 0.9), " + std::to_string(rep.episodes.size()) + " episodes, " +
                  fmt("%.0f", first.seconds) + " s"});
    }
    if (want(7)) {
      const auto te = rep.te_by_nstar();
      const auto full = rep.full_replication_te();
      const double te100 = te.at(100).te, te30 = te.at(30).te;
      const bool near_full = te100 <= 1.5 * full.te;
      const bool shape = te30 > te100;
      report("7 tracking error",
             {near_full && shape, "TE(100) " + fmt("%.4g", te100) + " vs 1.5 x full " + fmt("%.4g", 1.5 * full.te) +
                                      (near_full ? " ok" : " exceeded") + "; TE(30) " + fmt("%.4g", te30) +
                                      (shape ? " > " : " <= ") + "TE(100)"});
    }
    if (want(8)) {
      const auto dir = std::filesystem::temp_directory_path() / "itrack_acceptance";
      std::filesystem::create_directories(dir);
      const std::string a = report_bytes(rep, dir / "report_a.json");
      const FullRun second = full_run(market);
      const std::string b = report_bytes(second.report, dir / "report_b.json");
      std::filesystem::remove_all(dir);
      report("8 determinism", {!a.empty() && a == b,
                               std::string(a == b ? "report.json byte-identical" : "report.json differs") + " (" +
                                   std::to_string(a.size()) + " bytes), second run " + fmt("%.0f", second.seconds) +
                                   " s"});
    }
    if (want(9)) {
      const auto zero = rep.zero_lag_te();
      report("9 zero-lag identity", {zero.episodes > 0 && zero.te <= 1e-14,
                                     "zero-lag TE " + fmt("%.3g", zero.te) + " over " + std::to_string(zero.episodes) +
                                         " episodes"});
    }
  }
  return all_pass ? 0 : 1;
}
