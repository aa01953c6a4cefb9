#include "itrack/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "itrack/errors.hpp"
#include "json.hpp"

namespace itrack {

namespace {

using json = nlohmann::json;
using ConstMap = Eigen::Map<const Matrix>;

void check_shape(const FeatureGridSpec& grid, const FeatureTensor& x) {
  if (x.rows() != grid.rows() || x.cols() != grid.cols() || x.size() != grid.size()) {
    throw ShapeError("feature tensor is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                     " but the model grid is " + std::to_string(grid.rows()) + "x" +
                     std::to_string(grid.cols()));
  }
}

void check_block(std::span<const Record> records, StepRange block, const char* name) {
  for (const auto& r : records) {
    if (r.t < block.first || r.t > block.second) {
      throw LookAheadError(std::string(name) + " record at step " + std::to_string(r.t) +
                           " lies outside the " + name + " block [" + std::to_string(block.first) + ", " +
                           std::to_string(block.second) + "]");
    }
  }
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Column block [start, start + count) of transformed data.
void gather(const TransformedData& data, std::span<const std::size_t> idx, Matrix& x, Matrix& y) {
  x.resize(static_cast<Eigen::Index>(data.dim), static_cast<Eigen::Index>(idx.size()));
  y.resize(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const double* src = data.inputs.data() + idx[j] * data.dim;
    std::copy(src, src + data.dim, x.col(static_cast<Eigen::Index>(j)).data());
    for (int k = 0; k < 3; ++k) y(k, static_cast<Eigen::Index>(j)) = data.targets[idx[j] * 3 + k];
  }
}

json cdf_to_json(const EmpiricalCdf& c) { return json{{"knots", c.knots()}, {"ordinates", c.ordinates()}}; }

EmpiricalCdf cdf_from_json(const json& j) {
  return EmpiricalCdf(j.at("knots").get<std::vector<double>>(), j.at("ordinates").get<std::vector<double>>());
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum", "must lie in [0, 1)");
  if (!(l2 >= 0.0)) throw ConfigError("train.l2", "must be non-negative");
  if (!(initial_lr > 0.0)) throw ConfigError("train.initial_lr", "must be positive");
  if (max_epochs == 0) throw ConfigError("train.max_epochs", "must be positive");
  if (patience == 0) throw ConfigError("train.patience", "must be at least 1");
}

PredictorModel::PredictorModel(FeatureGridSpec grid, CdfSet cdfs, Network network, TrainConfig config,
                               std::optional<EpisodeTag> episode)
    : grid_(std::move(grid)),
      cdfs_(std::move(cdfs)),
      network_(std::move(network)),
      config_(config),
      episode_(episode) {
  if (cdfs_.rows != grid_.rows() || cdfs_.cols != grid_.cols() || network_.spec().input_dim != grid_.size()) {
    throw ShapeError("model components disagree on the feature grid");
  }
}

Matrix PredictorModel::transformed_inputs(std::span<const FeatureTensor* const> xs) const {
  Matrix x(static_cast<Eigen::Index>(grid_.size()), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) {
    check_shape(grid_, *xs[j]);
    cdfs_.transform_input(xs[j]->values(), std::span<double>(x.col(static_cast<Eigen::Index>(j)).data(),
                                                             grid_.size()));
  }
  return x;
}

Matrix PredictorModel::raw_outputs(std::span<const FeatureTensor* const> xs) const {
  return network_.forward(transformed_inputs(xs));
}

std::vector<FactorEstimate> PredictorModel::forward_batch(std::span<const FeatureTensor* const> xs) const {
  const Matrix out = raw_outputs(xs);
  std::vector<FactorEstimate> res;
  res.reserve(xs.size());
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    FactorEstimate e = cdfs_.inverse_target({out(0, j), out(1, j), out(2, j)});
    e.kind = EstimateKind::predicted;
    res.push_back(e);
  }
  return res;
}

FactorEstimate PredictorModel::forward(const FeatureTensor& x) const {
  const FeatureTensor* p = &x;
  return forward_batch(std::span<const FeatureTensor* const>(&p, 1)).front();
}

void PredictorModel::require_episode(Step t_n) const {
  if (!episode_ || episode_->t_n != t_n) {
    throw LookAheadError("model is bound to episode " + (episode_ ? std::to_string(episode_->t_n) : "<none>") +
                         ", not to episode " + std::to_string(t_n));
  }
}

double evaluate_loss(const Network& net, const TransformedData& data) {
  if (data.n == 0) throw EmptyInputError("loss of an empty block");
  constexpr std::size_t chunk = 4096;
  Tape workspace;
  double sse = 0.0;
  for (std::size_t start = 0; start < data.n; start += chunk) {
    const std::size_t m = std::min(chunk, data.n - start);
    ConstMap x(data.inputs.data() + start * data.dim, static_cast<Eigen::Index>(data.dim),
               static_cast<Eigen::Index>(m));
    ConstMap y(data.targets.data() + start * 3, 3, static_cast<Eigen::Index>(m));
    net.forward(x, nullptr, &workspace);
    sse += (workspace.head_out - y).squaredNorm();
  }
  return sse / static_cast<double>(3 * data.n);
}

TrainHistory fit_network(Network& net, const TransformedData& train, const TransformedData& validation,
                         const TrainConfig& cfg, const TrainHooks* hooks) {
  cfg.validate();
  if (train.n == 0) throw EmptyInputError("training block has no records");
  if (validation.n == 0) throw EmptyInputError("validation block has no records");
  if (train.dim != net.spec().input_dim || validation.dim != net.spec().input_dim) {
    throw ShapeError("transformed data width does not match the network input");
  }

  TrainHistory hist;
  hist.initial_train_loss = evaluate_loss(net, train);
  hist.initial_validation_loss = evaluate_loss(net, validation);

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5bd1e995ULL);
  DropoutSource dropout(cfg.seed + 1);
  std::vector<std::size_t> order(train.n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  AlignedVector velocity(net.param_count(), 0.0);
  AlignedVector grad;
  AlignedVector best(net.params().begin(), net.params().end());
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  Matrix xb, yb;
  Tape workspace;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = 0.5 * cfg.initial_lr *
                      (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch - 1) /
                                      static_cast<double>(cfg.max_epochs)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train.n; start += cfg.batch_size) {
      const std::size_t m = std::min(cfg.batch_size, train.n - start);
      gather(train, std::span<const std::size_t>(order).subspan(start, m), xb, yb);
      loss_sum += net.data_gradient(xb, yb, &dropout, grad, &workspace);
      ++batches;
      auto theta = net.params();
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double g = grad[k] + 2.0 * cfg.l2 * theta[k];
        velocity[k] = cfg.momentum * velocity[k] + g;
        theta[k] -= lr * velocity[k];
      }
    }
    hist.train_loss.push_back(loss_sum / static_cast<double>(batches));
    double val = evaluate_loss(net, validation);
    if (hooks != nullptr && hooks->validation_loss) val = hooks->validation_loss(epoch, val);
    hist.validation_loss.push_back(val);
    hist.epochs_run = epoch;

    if (val < best_loss) {
      best_loss = val;
      hist.best_epoch = epoch;
      since_best = 0;
      std::copy(net.params().begin(), net.params().end(), best.begin());
    } else if (++since_best >= cfg.patience) {
      hist.early_stopped = true;
      break;
    }
  }
  net.set_params(best);
  return hist;
}

PredictorModel train(std::span<const Record> train_records, std::span<const Record> validation_records,
                     const TrainConfig& cfg, const ModelSpec& spec, std::optional<EpisodeTag> episode,
                     TrainHistory* history, const TrainHooks* hooks) {
  cfg.validate();
  spec.grid.validate();
  if (train_records.empty()) throw EmptyInputError("training block has no records");
  if (validation_records.empty()) throw EmptyInputError("validation block has no records");
  for (const auto* block : {&train_records, &validation_records}) {
    for (const auto& r : *block) check_shape(spec.grid, r.x);
  }
  std::optional<StepRange> allowed;
  if (episode) {
    allowed = episode->train_block;
    check_block(validation_records, episode->validation_block, "validation");
  }
  auto [cdfs, data] = transform_dataset(train_records, validation_records, spec.granularity, allowed);

  NetworkSpec ns = spec.network;
  ns.input_dim = spec.grid.size();
  Network net(ns);
  net.init(cfg.seed);
  TrainHistory hist = fit_network(net, data.first, data.second, cfg, hooks);
  if (history != nullptr) *history = std::move(hist);
  return PredictorModel(spec.grid, std::move(cdfs), std::move(net), cfg, episode);
}

double objective_gradient(const Network& net, const Matrix& x, const Matrix& y, double l2,
                          AlignedVector& grad) {
  const double data = net.data_gradient(x, y, nullptr, grad);
  const auto theta = net.params();
  for (std::size_t k = 0; k < theta.size(); ++k) grad[k] += 2.0 * l2 * theta[k];
  return data + l2 * squared_norm(theta);
}

GradientCheckResult gradient_check(const Network& net, const Matrix& x, const Matrix& y, double l2, double step) {
  AlignedVector analytic;
  objective_gradient(net, x, y, l2, analytic);
  const auto base_pattern = net.activation_pattern(x);

  Network probe(net);
  auto theta = probe.params();
  auto objective = [&]() { return Network::mse(probe.forward(x), y) + l2 * squared_norm(probe.params()); };

  GradientCheckResult res;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double orig = theta[k];
    theta[k] = orig + step;
    const bool kink_up = probe.activation_pattern(x) != base_pattern;
    const double up = objective();
    theta[k] = orig - step;
    const bool kink_down = probe.activation_pattern(x) != base_pattern;
    const double down = objective();
    theta[k] = orig;
    if (kink_up || kink_down) {
      ++res.skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-6});
    res.max_relative_error = std::max(res.max_relative_error, std::abs(numeric - analytic[k]) / denom);
    ++res.checked;
  }
  return res;
}

GradientCheckResult gradient_check(const PredictorModel& model, std::span<const Record> batch, double step) {
  for (const auto& r : batch) check_shape(model.grid(), r.x);
  const TransformedData d = transform_records(model.cdfs(), batch);
  const Matrix x = ConstMap(d.inputs.data(), static_cast<Eigen::Index>(d.dim), static_cast<Eigen::Index>(d.n));
  const Matrix y = ConstMap(d.targets.data(), 3, static_cast<Eigen::Index>(d.n));
  return gradient_check(model.network(), x, y, model.config().l2, step);
}

void save_checkpoint(const PredictorModel& model, const std::filesystem::path& path) {
  const auto& g = model.grid();
  const auto& ns = model.network().spec();
  const auto& c = model.config();
  json j;
  j["format"] = "itrack-predictor";
  j["version"] = 1;
  j["grid"] = {{"tau_offsets", g.tau_offsets}, {"window_lengths", g.window_lengths}};
  j["network"] = {{"extractor", ns.extractor},         {"input_dim", ns.input_dim},
                  {"extractor_width", ns.extractor_width}, {"extractor_layers", ns.extractor_layers},
                  {"head_width", ns.head_width},       {"dropout", ns.dropout},
                  {"leaky_slope", ns.leaky_slope}};
  j["train_config"] = {{"batch_size", c.batch_size}, {"momentum", c.momentum},     {"l2", c.l2},
                       {"initial_lr", c.initial_lr}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
                       {"seed", c.seed}};
  if (const auto& e = model.episode()) {
    j["episode"] = {{"t_n", e->t_n},
                    {"train_block", {e->train_block.first, e->train_block.second}},
                    {"validation_block", {e->validation_block.first, e->validation_block.second}}};
  } else {
    j["episode"] = nullptr;
  }
  const auto& cdfs = model.cdfs();
  json inputs = json::array();
  for (const auto& cdf : cdfs.inputs) inputs.push_back(cdf_to_json(cdf));
  json targets = json::array();
  for (const auto& cdf : cdfs.targets) targets.push_back(cdf_to_json(cdf));
  j["cdfs"] = {{"granularity", cdfs.granularity == CdfGranularity::per_cell ? "per_cell" : "per_kind"},
               {"inputs", std::move(inputs)},
               {"targets", std::move(targets)}};
  j["parameters"] = std::vector<double>(model.network().params().begin(), model.network().params().end());

  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint '" + path.string() + "'");
  out << j.dump();
  if (!out) throw ValidationError("failed writing checkpoint '" + path.string() + "'");
}

PredictorModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
    if (j.at("format") != "itrack-predictor") throw ValidationError("not a predictor checkpoint");

    FeatureGridSpec grid;
    grid.tau_offsets = j.at("grid").at("tau_offsets").get<std::vector<Step>>();
    grid.window_lengths = j.at("grid").at("window_lengths").get<std::vector<Step>>();
    grid.validate();

    const auto& jn = j.at("network");
    NetworkSpec ns;
    ns.extractor = jn.at("extractor").get<std::string>();
    ns.input_dim = jn.at("input_dim").get<std::size_t>();
    ns.extractor_width = jn.at("extractor_width").get<std::size_t>();
    ns.extractor_layers = jn.at("extractor_layers").get<std::size_t>();
    ns.head_width = jn.at("head_width").get<std::size_t>();
    ns.dropout = jn.at("dropout").get<double>();
    ns.leaky_slope = jn.at("leaky_slope").get<double>();

    const auto& jc = j.at("train_config");
    TrainConfig cfg;
    cfg.batch_size = jc.at("batch_size").get<std::size_t>();
    cfg.momentum = jc.at("momentum").get<double>();
    cfg.l2 = jc.at("l2").get<double>();
    cfg.initial_lr = jc.at("initial_lr").get<double>();
    cfg.max_epochs = jc.at("max_epochs").get<std::size_t>();
    cfg.patience = jc.at("patience").get<std::size_t>();
    cfg.seed = jc.at("seed").get<std::uint64_t>();

    std::optional<EpisodeTag> episode;
    if (!j.at("episode").is_null()) {
      const auto& je = j.at("episode");
      EpisodeTag e;
      e.t_n = je.at("t_n").get<Step>();
      e.train_block = {je.at("train_block").at(0).get<Step>(), je.at("train_block").at(1).get<Step>()};
      e.validation_block = {je.at("validation_block").at(0).get<Step>(),
                            je.at("validation_block").at(1).get<Step>()};
      episode = e;
    }

    const auto& jcdf = j.at("cdfs");
    CdfSet cdfs;
    const auto gran = jcdf.at("granularity").get<std::string>();
    if (gran == "per_cell") {
      cdfs.granularity = CdfGranularity::per_cell;
    } else if (gran == "per_kind") {
      cdfs.granularity = CdfGranularity::per_kind;
    } else {
      throw ValidationError("unknown CDF granularity '" + gran + "'");
    }
    cdfs.rows = grid.rows();
    cdfs.cols = grid.cols();
    for (const auto& c : jcdf.at("inputs")) cdfs.inputs.push_back(cdf_from_json(c));
    const std::size_t expect =
        cdfs.granularity == CdfGranularity::per_cell ? grid.size() : kFeatureKinds;
    if (cdfs.inputs.size() != expect) throw ValidationError("checkpoint has the wrong number of input CDFs");
    const auto& jt = jcdf.at("targets");
    if (jt.size() != 3) throw ValidationError("checkpoint must hold three target CDFs");
    for (std::size_t k = 0; k < 3; ++k) cdfs.targets[k] = cdf_from_json(jt.at(k));

    Network net(ns);
    net.set_params(j.at("parameters").get<std::vector<double>>());
    return PredictorModel(std::move(grid), std::move(cdfs), std::move(net), cfg, episode);
  } catch (const json::exception& e) {
    throw ValidationError("malformed checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace itrack
