#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <map>
#include <set>

#include "json.hpp"

#include "itrack/backtest.hpp"
#include "itrack/commands.hpp"
#include "itrack/errors.hpp"
#include "itrack/factor_targets.hpp"
#include "itrack/features.hpp"
#include "itrack/milp_portfolio.hpp"
#include "itrack/run_config.hpp"
#include "itrack/synthetic_market.hpp"

namespace py = pybind11;
using namespace itrack;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<RegressionPoint> points(const Array& x, const Array& y) {
  if (x.ndim() != 1 || y.ndim() != 1 || x.size() != y.size()) throw ShapeError("x and y must be 1-d and equal length");
  std::vector<RegressionPoint> pts(static_cast<std::size_t>(x.size()));
  for (py::ssize_t k = 0; k < x.size(); ++k) pts[static_cast<std::size_t>(k)] = {x.at(k), y.at(k)};
  return pts;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

// Panels as numpy arrays: prices (series x steps, NaN where absent) and
// index weights (series x steps, 0 outside the universe).
py::dict panels_dict(const MarketPanels& p) {
  const auto n = static_cast<py::ssize_t>(p.prices.n_series());
  const auto t = static_cast<py::ssize_t>(p.calendar.size());
  Array prices({n, t}), weights({n, t});
  auto pr = prices.mutable_unchecked<2>();
  auto wr = weights.mutable_unchecked<2>();
  for (py::ssize_t s = 0; s < n; ++s) {
    for (py::ssize_t d = 0; d < t; ++d) {
      pr(s, d) = p.prices.raw(static_cast<std::size_t>(s), d);
      wr(s, d) = 0.0;
    }
  }
  for (py::ssize_t d = 0; d < t; ++d) {
    for (const auto& [s, w] : p.weights.at(d)) wr(static_cast<py::ssize_t>(s), d) = w;
  }
  std::vector<std::string> dates;
  for (const auto& d : p.calendar.dates()) dates.push_back(d.iso());
  py::dict out;
  out["ids"] = p.prices.ids();
  out["index_id"] = p.prices.index_id();
  out["dates"] = dates;
  out["prices"] = prices;
  out["weights"] = weights;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Index tracking with learned factor coefficients and a cardinality-constrained MILP";

  static auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<MissingDataError>(m, "MissingDataError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<EmptyInputError>(m, "EmptyInputError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ModelingError>(m, "ModelingError", base.ptr());
  py::register_exception<ScheduleError>(m, "ScheduleError", base.ptr());
  py::register_exception<LookAheadError>(m, "LookAheadError", base.ptr());

  m.def(
      "theil_sen",
      [](const Array& x, const Array& y) {
        const auto f = theil_sen(points(x, y));
        return py::make_tuple(f.alpha, f.beta);
      },
      py::arg("x"), py::arg("y"), "Robust line fit; returns (alpha, beta).");
  m.def(
      "ols",
      [](const Array& x, const Array& y) {
        const auto f = ols(points(x, y));
        return py::make_tuple(f.alpha, f.beta);
      },
      py::arg("x"), py::arg("y"), "Least-squares line fit; returns (alpha, beta).");

  py::class_<EmpiricalCdf>(m, "EmpiricalCdf")
      .def("__call__", &EmpiricalCdf::evaluate, py::arg("x"))
      .def("evaluate", &EmpiricalCdf::evaluate, py::arg("x"))
      .def("inverse", &EmpiricalCdf::inverse, py::arg("p"))
      .def_property_readonly("knots", &EmpiricalCdf::knots)
      .def_property_readonly("ordinates", &EmpiricalCdf::ordinates);
  m.def(
      "fit_cdf", [](const Array& v) { return fit_cdf(to_vector(v)); }, py::arg("values"),
      "Piecewise-linear empirical CDF over the distinct training values.");

  m.def(
      "tracking_error", [](const Array& p, const Array& i) { return tracking_error(to_vector(p), to_vector(i)); },
      py::arg("portfolio"), py::arg("index"), "Mean squared difference of aligned return series.");

  m.def(
      "generate_market",
      [](std::size_t n_instruments, std::size_t n_days, std::uint64_t seed, const std::string& weighting) {
        SynthConfig c;
        c.n_instruments = n_instruments;
        c.n_days = n_days;
        c.seed = seed;
        if (weighting == "equal") {
          c.weighting = IndexWeighting::equal;
        } else if (weighting != "cap") {
          throw ConfigError("synth.weighting", "expected \"cap\" or \"equal\"");
        }
        const auto mk = generate(c);
        py::dict out = panels_dict(mk.panels);
        const auto n = static_cast<py::ssize_t>(mk.truth.n_instruments());
        Array alpha({n, static_cast<py::ssize_t>(n_days)}), beta({n, static_cast<py::ssize_t>(n_days)});
        auto ar = alpha.mutable_unchecked<2>();
        auto br = beta.mutable_unchecked<2>();
        for (py::ssize_t i = 0; i < n; ++i) {
          for (py::ssize_t d = 0; d < static_cast<py::ssize_t>(n_days); ++d) {
            ar(i, d) = mk.truth.alpha[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
            br(i, d) = mk.truth.beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
          }
        }
        out["truth_alpha"] = alpha;
        out["truth_beta"] = beta;
        return out;
      },
      py::arg("n_instruments") = 200, py::arg("n_days") = 2400, py::arg("seed") = 1, py::arg("weighting") = "cap",
      "Synthetic market as numpy arrays, with the daily index-relative truth.");

  m.def(
      "load_panels",
      [](const std::string& prices, const std::string& weights, const std::string& index_id) {
        return panels_dict(load_panels(prices, weights, index_id));
      },
      py::arg("prices"), py::arg("weights"), py::arg("index_id") = "INDEX",
      "Load and validate the price and index-weight CSVs.");

  m.def(
      "solve_portfolio",
      [](const std::vector<std::string>& ids, const Array& prior, const Array& alpha, const Array& beta,
         std::size_t n_star, std::optional<std::vector<std::string>> excluded, double time_limit) {
        if (prior.size() != static_cast<py::ssize_t>(ids.size()) || alpha.size() != prior.size() ||
            beta.size() != prior.size()) {
          throw ShapeError("ids, prior, alpha and beta must have equal length");
        }
        BuildInputs in;
        in.n_star = n_star;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const auto j = static_cast<py::ssize_t>(k);
          in.universe.insert(ids[k]);
          in.prior_weights[ids[k]] = prior.at(j);
          if (std::isfinite(alpha.at(j)) && std::isfinite(beta.at(j))) {
            in.predictions[ids[k]] = {alpha.at(j), beta.at(j), 0.0, EstimateKind::predicted};
          }
        }
        if (excluded) in.exclusions.insert(excluded->begin(), excluded->end());
        const auto problem = build_problem(in);
        SolveOptions opt;
        opt.time_limit_seconds = time_limit;
        const auto sol = solve(problem, opt);
        py::dict out;
        out["status"] = to_string(sol.status);
        out["ids"] = sol.ids;
        out["weights"] = sol.weights;
        out["objective"] = sol.objective;
        out["support"] = sol.support();
        out["alpha_target"] = problem.alpha_target;
        out["beta_target"] = problem.beta_target;
        out["nodes"] = sol.stats.nodes;
        if (!sol.infeasibility.empty()) out["infeasibility"] = sol.infeasibility;
        return out;
      },
      py::arg("ids"), py::arg("prior"), py::arg("alpha"), py::arg("beta"), py::arg("n_star"),
      py::arg("excluded") = py::none(), py::arg("time_limit") = 60.0,
      "Partial-replication weights holding at most n_star instruments. Instruments with NaN coefficients must be "
      "listed in `excluded`; they keep their prior weight.");

  m.def(
      "run_backtest",
      [](const std::string& config_json) {
        RunConfig cfg = run_config_from_json(nlohmann::json::parse(config_json));
        cfg.validate();
        const MarketPanels panels = load_configured_panels(cfg);
        std::optional<TruthPanel> truth;
        if (cfg.backtest.predictor == PredictorSource::truth) truth = read_truth_csv(cfg.paths.truth, panels);
        BacktestReport rep;
        {
          py::gil_scoped_release release;
          rep = run_backtest(panels, cfg.backtest, truth ? &*truth : nullptr);
        }
        py::dict pe, te;
        for (const auto& [name, v] : rep.aggregate_pe()) pe[py::str(name)] = v;
        for (const auto& [cap, s] : rep.te_by_nstar()) te[py::int_(cap)] = s.te;
        py::dict out;
        out["prediction_error"] = pe;
        out["best_historical"] = rep.best_historical();
        out["tracking_error"] = te;
        out["full_replication_te"] = rep.full_replication_te().te;
        out["zero_lag_te"] = rep.zero_lag_te().te;
        out["episodes"] = rep.episodes.size();
        return out;
      },
      py::arg("config_json"),
      "Run the walk-forward backtest described by a JSON config string (same schema as the command line).");
}
