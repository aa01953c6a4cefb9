#include "itrack/run_config.hpp"

#include <fstream>
#include <set>

#include "itrack/errors.hpp"

namespace itrack {

namespace {

using json = nlohmann::json;

// Strict reader over one JSON object: every key must be consumed, and every
// value must have the expected type.
class Fields {
 public:
  Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "expected an object");
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Fields child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Fields(j_.contains(key) ? j_.at(key) : empty, path(key));
  }

  void read(const std::string& key, std::string& dst) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(path(key), "expected a string");
    dst = v.get<std::string>();
  }

  void read(const std::string& key, bool& dst) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(path(key), "expected true or false");
    dst = v.get<bool>();
  }

  void read(const std::string& key, double& dst) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    dst = v.get<double>();
  }

  void read(const std::string& key, std::int64_t& dst) {
    if (!has(key)) return;
    dst = integer(j_.at(key), path(key));
  }

  void read(const std::string& key, std::size_t& dst) {
    if (!has(key)) return;
    dst = natural(j_.at(key), path(key));
  }

  template <class T>
  void read(const std::string& key, std::vector<T>& dst) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(path(key), "expected an array");
    std::vector<T> out;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const std::string p = path(key) + "[" + std::to_string(k) + "]";
      if constexpr (std::is_same_v<T, std::size_t>) {
        out.push_back(natural(v[k], p));
      } else {
        out.push_back(integer(v[k], p));
      }
    }
    dst = std::move(out);
  }

  // Rejects keys that no reader asked for.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(path(key), "unknown field");
    }
  }

 private:
  static std::int64_t integer(const json& v, const std::string& p) {
    if (!v.is_number_integer()) throw ConfigError(p, "expected an integer");
    return v.get<std::int64_t>();
  }

  static std::uint64_t natural(const json& v, const std::string& p) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(p, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

std::string granularity_name(CdfGranularity g) { return g == CdfGranularity::per_cell ? "per_cell" : "per_kind"; }

}  // namespace

void RunConfig::validate() const {
  if (index_id.empty()) throw ConfigError("index_id", "must not be empty");
  try {
    backtest.schedule.validate();
  } catch (const ScheduleError& e) {
    throw ConfigError("schedule", e.what());
  }
  backtest.validate();
  backtest.train.validate();
  backtest.model.grid.validate();
  backtest.model.network.validate();
  synth.validate();
}

RunConfig run_config_from_json(const json& j, RunConfig base) {
  RunConfig c = std::move(base);
  BacktestConfig& b = c.backtest;
  Fields root(j, "");

  {
    Fields f = root.child("paths");
    f.read("prices", c.paths.prices);
    f.read("weights", c.paths.weights);
    f.read("output_dir", c.paths.output_dir);
    f.read("truth", c.paths.truth);
    f.finish();
  }
  root.read("index_id", c.index_id);
  root.read("seed", b.seed);
  root.read("threads", b.threads);
  if (root.has("predictor")) {
    std::string p;
    root.read("predictor", p);
    if (p == "mlp") {
      b.predictor = PredictorSource::mlp;
    } else if (p == "truth") {
      b.predictor = PredictorSource::truth;
    } else {
      throw ConfigError("predictor", "expected \"mlp\" or \"truth\", got \"" + p + "\"");
    }
  }
  {
    Fields f = root.child("schedule");
    f.read("T_A", b.schedule.horizon);
    f.read("T_C", b.schedule.half_window);
    f.read("T_D", b.schedule.validation);
    f.read("T_E", b.schedule.estimation);
    f.read("t0", b.t0);
    f.read("n_episodes", b.n_episodes);
    f.finish();
  }
  root.read("n_star", b.n_star_list);
  {
    Fields f = root.child("historical");
    f.read("windows", b.historical_windows);
    f.read("overlapping", b.historical_overlapping);
    f.finish();
  }
  {
    Fields f = root.child("features");
    f.read("tau_offsets", b.model.grid.tau_offsets);
    f.read("window_lengths", b.model.grid.window_lengths);
    if (f.has("cdf_granularity")) {
      std::string g;
      f.read("cdf_granularity", g);
      if (g == "per_cell") {
        b.model.granularity = CdfGranularity::per_cell;
      } else if (g == "per_kind") {
        b.model.granularity = CdfGranularity::per_kind;
      } else {
        throw ConfigError("features.cdf_granularity", "expected \"per_cell\" or \"per_kind\"");
      }
    }
    f.finish();
  }
  {
    NetworkSpec& n = b.model.network;
    Fields f = root.child("network");
    f.read("extractor", n.extractor);
    f.read("extractor_width", n.extractor_width);
    f.read("extractor_layers", n.extractor_layers);
    f.read("head_width", n.head_width);
    f.read("dropout", n.dropout);
    f.read("leaky_slope", n.leaky_slope);
    f.finish();
  }
  {
    TrainConfig& t = b.train;
    Fields f = root.child("train");
    f.read("batch_size", t.batch_size);
    f.read("momentum", t.momentum);
    f.read("l2", t.l2);
    f.read("initial_lr", t.initial_lr);
    f.read("max_epochs", t.max_epochs);
    f.read("patience", t.patience);
    f.read("record_stride", b.record_stride);
    f.finish();
  }
  {
    Fields f = root.child("milp");
    f.read("time_limit_seconds", b.milp.time_limit_seconds);
    f.read("node_limit", b.milp.node_limit);
    f.read("gap_tolerance", b.milp.gap_tolerance);
    f.finish();
  }
  {
    SynthConfig& s = c.synth;
    Fields f = root.child("synth");
    f.read("n_instruments", s.n_instruments);
    f.read("n_days", s.n_days);
    f.read("start_date", s.start_date);
    f.read("kappa", s.kappa);
    f.read("beta_mean_lo", s.beta_mean_lo);
    f.read("beta_mean_hi", s.beta_mean_hi);
    f.read("sigma_beta", s.sigma_beta);
    f.read("kappa_alpha", s.kappa_alpha);
    f.read("alpha_mean_lo", s.alpha_mean_lo);
    f.read("alpha_mean_hi", s.alpha_mean_hi);
    f.read("sigma_alpha", s.sigma_alpha);
    f.read("factor_vol", s.factor_vol);
    f.read("sigma_eps", s.sigma_eps);
    f.read("share_dispersion", s.share_dispersion);
    f.read("truth_horizon", s.truth_horizon);
    if (f.has("weighting")) {
      std::string w;
      f.read("weighting", w);
      if (w == "cap") {
        s.weighting = IndexWeighting::cap;
      } else if (w == "equal") {
        s.weighting = IndexWeighting::equal;
      } else {
        throw ConfigError("synth.weighting", "expected \"cap\" or \"equal\"");
      }
    }
    f.finish();
  }
  root.finish();

  b.model.network.input_dim = b.model.grid.size();
  c.synth.seed = b.seed;
  c.synth.index_id = c.index_id;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

json backtest_config_json(const BacktestConfig& c) {
  const auto& g = c.model.grid;
  const auto& n = c.model.network;
  return {{"seed", c.seed},
          {"predictor", c.predictor == PredictorSource::truth ? "truth" : "mlp"},
          {"schedule",
           {{"T_A", c.schedule.horizon},
            {"T_C", c.schedule.half_window},
            {"T_D", c.schedule.validation},
            {"T_E", c.schedule.estimation},
            {"t0", c.t0},
            {"n_episodes", c.n_episodes}}},
          {"n_star", c.n_star_list},
          {"historical", {{"windows", c.historical_windows}, {"overlapping", c.historical_overlapping}}},
          {"features",
           {{"tau_offsets", g.tau_offsets},
            {"window_lengths", g.window_lengths},
            {"cdf_granularity", granularity_name(c.model.granularity)}}},
          {"network",
           {{"extractor", n.extractor},
            {"extractor_width", n.extractor_width},
            {"extractor_layers", n.extractor_layers},
            {"head_width", n.head_width},
            {"dropout", n.dropout},
            {"leaky_slope", n.leaky_slope}}},
          {"train",
           {{"batch_size", c.train.batch_size},
            {"momentum", c.train.momentum},
            {"l2", c.train.l2},
            {"initial_lr", c.train.initial_lr},
            {"max_epochs", c.train.max_epochs},
            {"patience", c.train.patience},
            {"record_stride", c.record_stride}}},
          {"milp", {{"node_limit", c.milp.node_limit}, {"gap_tolerance", c.milp.gap_tolerance}}}};
}

json to_json(const RunConfig& c) {
  json j = backtest_config_json(c.backtest);
  j["milp"]["time_limit_seconds"] = c.backtest.milp.time_limit_seconds;
  j["threads"] = c.backtest.threads;
  j["index_id"] = c.index_id;
  j["paths"] = {{"prices", c.paths.prices},
                {"weights", c.paths.weights},
                {"output_dir", c.paths.output_dir},
                {"truth", c.paths.truth}};
  const SynthConfig& s = c.synth;
  j["synth"] = {{"n_instruments", s.n_instruments},
                {"n_days", s.n_days},
                {"start_date", s.start_date},
                {"kappa", s.kappa},
                {"beta_mean_lo", s.beta_mean_lo},
                {"beta_mean_hi", s.beta_mean_hi},
                {"sigma_beta", s.sigma_beta},
                {"kappa_alpha", s.kappa_alpha},
                {"alpha_mean_lo", s.alpha_mean_lo},
                {"alpha_mean_hi", s.alpha_mean_hi},
                {"sigma_alpha", s.sigma_alpha},
                {"factor_vol", s.factor_vol},
                {"sigma_eps", s.sigma_eps},
                {"share_dispersion", s.share_dispersion},
                {"weighting", s.weighting == IndexWeighting::cap ? "cap" : "equal"},
                {"truth_horizon", s.truth_horizon}};
  return j;
}

}  // namespace itrack
