#include "itrack/network.hpp"

#include <cmath>

#include "itrack/errors.hpp"

namespace itrack {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using MutMap = Eigen::Map<Matrix>;
using MutVecMap = Eigen::Map<Eigen::VectorXd>;

auto leaky_grad(const Matrix& z, double slope) { return slope + (1.0 - slope) * (z.array() > 0.0).cast<double>(); }

void uniform_fill(std::span<double> out, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : out) v = dist(rng);
}

// Dense layer with Leaky ReLU and optional dropout, over a params slice laid
// out as [W (out x in, column-major), b].
struct DenseLeaky {
  std::size_t in;
  std::size_t out;
  std::size_t size() const { return out * in + out; }

  void forward(const double* p, const ConstRef& x, LayerTape& tape, double slope, DropoutSource* dropout,
               double rate) const {
    ConstMap w(p, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    ConstVecMap b(p + out * in, static_cast<Eigen::Index>(out));
    tape.pre.noalias() = w * x;
    tape.pre.colwise() += b;
    // max(z, slope z) equals Leaky ReLU for slopes in [0, 1] and vectorizes.
    tape.act = tape.pre.cwiseMax(slope * tape.pre);
    if (dropout != nullptr && rate > 0.0) {
      dropout->fill(tape.mask, tape.act.rows(), tape.act.cols(), rate);
      tape.act.array() *= tape.mask.array();
    } else {
      tape.mask.resize(0, 0);
    }
  }

  // Expects d(loss)/d(act) in tape.delta. Accumulates parameter gradients and,
  // when `dx` is set, writes (or adds) d(loss)/d(x) into it.
  void backward(const double* p, double* g, const ConstRef& x, LayerTape& tape, double slope, Matrix* dx,
                bool accumulate) const {
    ConstMap w(p, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    if (tape.mask.size() > 0) tape.delta.array() *= tape.mask.array();
    tape.delta.array() *= leaky_grad(tape.pre, slope);
    MutMap gw(g, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    MutVecMap gb(g + out * in, static_cast<Eigen::Index>(out));
    gw.noalias() += tape.delta * x.transpose();
    gb += tape.delta.rowwise().sum();
    if (dx == nullptr) return;
    if (accumulate) {
      dx->noalias() += w.transpose() * tape.delta;
    } else {
      dx->noalias() = w.transpose() * tape.delta;
    }
  }
};

class MlpExtractor final : public FeatureExtractor {
 public:
  explicit MlpExtractor(const NetworkSpec& spec) : slope_(spec.leaky_slope), rate_(spec.dropout) {
    std::size_t in = spec.input_dim;
    for (std::size_t l = 0; l < spec.extractor_layers; ++l) {
      layers_.push_back({in, spec.extractor_width});
      in = spec.extractor_width;
    }
    out_ = in;
  }

  std::string kind() const override { return "mlp"; }
  std::size_t output_dim() const override { return out_; }
  std::size_t param_count() const override {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.size();
    return n;
  }

  void init(std::span<double> params, std::mt19937_64& rng) const override {
    std::size_t off = 0;
    for (const auto& l : layers_) {
      uniform_fill(params.subspan(off, l.size()), 1.0 / std::sqrt(static_cast<double>(l.in)), rng);
      off += l.size();
    }
  }

  const Matrix& forward(std::span<const double> params, const ConstRef& x, std::vector<LayerTape>& tape,
                        DropoutSource* dropout) const override {
    tape.resize(layers_.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (l == 0) {
        layers_[l].forward(params.data() + off, x, tape[l], slope_, dropout, rate_);
      } else {
        layers_[l].forward(params.data() + off, tape[l - 1].act, tape[l], slope_, dropout, rate_);
      }
      off += layers_[l].size();
    }
    return tape.back().act;
  }

  void backward(std::span<const double> params, const ConstRef& x, std::vector<LayerTape>& tape,
                const Matrix& grad_out, std::span<double> grad) const override {
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& l : layers_) {
      offsets.push_back(off);
      off += l.size();
    }
    tape.back().delta = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const double* p = params.data() + offsets[l];
      double* g = grad.data() + offsets[l];
      if (l == 0) {
        layers_[l].backward(p, g, x, tape[l], slope_, nullptr, false);
      } else {
        layers_[l].backward(p, g, tape[l - 1].act, tape[l], slope_, &tape[l - 1].delta, false);
      }
    }
  }

 private:
  std::vector<DenseLeaky> layers_;
  std::size_t out_ = 0;
  double slope_;
  double rate_;
};

}  // namespace

void DropoutSource::fill(Matrix& out, Eigen::Index rows, Eigen::Index cols, double rate) {
  const double keep_scale = 1.0 / (1.0 - rate);
  const auto threshold = static_cast<std::uint64_t>(rate * 0x1.0p64);
  out.resize(rows, cols);
  double* dst = out.data();
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    // splitmix64 stream
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    dst[k] = z < threshold ? 0.0 : keep_scale;
  }
}

std::unique_ptr<FeatureExtractor> make_extractor(const NetworkSpec& spec) {
  if (spec.extractor == "mlp") return std::make_unique<MlpExtractor>(spec);
  throw ConfigError("network.extractor", "unsupported extractor kind '" + spec.extractor + "'");
}

void NetworkSpec::validate() const {
  if (extractor != "mlp") throw ConfigError("network.extractor", "unsupported extractor kind '" + extractor + "'");
  if (input_dim == 0 || head_width == 0 || extractor_width == 0 || extractor_layers == 0) {
    throw ConfigError("network", "layer widths must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("network.dropout", "must lie in [0, 1)");
  if (leaky_slope < 0.0 || leaky_slope >= 1.0) throw ConfigError("network.leaky_slope", "must lie in [0, 1)");
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)), extractor_(make_extractor(spec_)) {
  spec_.validate();
  head_offset_ = extractor_->param_count();
  const std::size_t rep = extractor_->output_dim();
  head_size_ = spec_.head_width * rep + spec_.head_width + spec_.head_width + 1;
  params_.assign(head_offset_ + 3 * head_size_, 0.0);
}

Network::Network(const Network& other)
    : spec_(other.spec_),
      extractor_(make_extractor(other.spec_)),
      params_(other.params_),
      head_offset_(other.head_offset_),
      head_size_(other.head_size_) {}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::set_params(std::span<const double> p) {
  if (p.size() != params_.size()) {
    throw ShapeError("parameter vector has " + std::to_string(p.size()) + " entries, network needs " +
                     std::to_string(params_.size()));
  }
  std::copy(p.begin(), p.end(), params_.begin());
}

void Network::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::span<double> all(params_);
  extractor_->init(all.first(head_offset_), rng);
  const std::size_t rep = extractor_->output_dim();
  const std::size_t h = spec_.head_width;
  for (std::size_t k = 0; k < 3; ++k) {
    auto head = all.subspan(head_offset_ + k * head_size_, head_size_);
    uniform_fill(head.first(h * rep + h), 1.0 / std::sqrt(static_cast<double>(rep)), rng);
    uniform_fill(head.subspan(h * rep + h), 1.0 / std::sqrt(static_cast<double>(h)), rng);
  }
}

Matrix Network::forward(const ConstRef& x, DropoutSource* dropout, Tape* tape) const {
  if (static_cast<std::size_t>(x.rows()) != spec_.input_dim) {
    throw ShapeError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(spec_.input_dim));
  }
  Tape local;
  Tape& tp = tape != nullptr ? *tape : local;
  std::span<const double> all(params_);
  const Matrix& rep = extractor_->forward(all.first(head_offset_), x, tp.extractor, dropout);

  const std::size_t h = spec_.head_width;
  DenseLeaky hidden{extractor_->output_dim(), h};
  tp.head_hidden.resize(3);
  tp.head_out.resize(3, x.cols());
  for (std::size_t k = 0; k < 3; ++k) {
    const double* p = params_.data() + head_offset_ + k * head_size_;
    hidden.forward(p, rep, tp.head_hidden[k], spec_.leaky_slope, dropout, spec_.dropout);
    ConstMap w2(p + hidden.size(), 1, static_cast<Eigen::Index>(h));
    const double b2 = p[hidden.size() + h];
    auto row = tp.head_out.row(static_cast<Eigen::Index>(k));
    row.noalias() = w2 * tp.head_hidden[k].act;
    row = (1.0 + (-(row.array() + b2)).exp()).inverse().matrix();
  }
  return tp.head_out;
}

double Network::mse(const ConstRef& out, const ConstRef& target) {
  return (out - target).squaredNorm() / static_cast<double>(out.size());
}

double Network::data_gradient(const ConstRef& x, const ConstRef& target, DropoutSource* dropout,
                              AlignedVector& grad, Tape* workspace) const {
  Tape local;
  Tape& tape = workspace != nullptr ? *workspace : local;
  forward(x, dropout, &tape);
  if (target.rows() != 3 || target.cols() != x.cols()) throw ShapeError("target must be 3 x batch");
  grad.assign(params_.size(), 0.0);
  const Matrix& out = tape.head_out;
  const double scale = 2.0 / static_cast<double>(out.size());

  const std::size_t h = spec_.head_width;
  DenseLeaky hidden{extractor_->output_dim(), h};
  const Matrix& rep = tape.extractor.back().act;
  tape.rep_delta.setZero(rep.rows(), rep.cols());
  for (std::size_t k = 0; k < 3; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double* p = params_.data() + head_offset_ + k * head_size_;
    double* g = grad.data() + head_offset_ + k * head_size_;
    const auto s = out.row(kk).array();
    tape.head_delta = (scale * (s - target.row(kk).array()) * s * (1.0 - s)).matrix();  // 1 x batch

    LayerTape& lt = tape.head_hidden[k];
    MutMap gw2(g + hidden.size(), 1, static_cast<Eigen::Index>(h));
    gw2.noalias() += tape.head_delta * lt.act.transpose();
    g[hidden.size() + h] += tape.head_delta.sum();
    ConstMap w2(p + hidden.size(), 1, static_cast<Eigen::Index>(h));
    lt.delta.noalias() = w2.transpose() * tape.head_delta;
    hidden.backward(p, g, rep, lt, spec_.leaky_slope, &tape.rep_delta, true);
  }
  std::span<const double> all(params_);
  extractor_->backward(all.first(head_offset_), x, tape.extractor, tape.rep_delta,
                       std::span<double>(grad).first(head_offset_));
  return mse(out, target);
}

std::vector<char> Network::activation_pattern(const ConstRef& x) const {
  Tape tape;
  forward(x, nullptr, &tape);
  std::vector<char> signs;
  auto append = [&](const Matrix& z) {
    for (Eigen::Index k = 0; k < z.size(); ++k) signs.push_back(z.data()[k] > 0.0 ? 1 : 0);
  };
  for (const auto& lt : tape.extractor) append(lt.pre);
  for (const auto& lt : tape.head_hidden) append(lt.pre);
  return signs;
}

}  // namespace itrack
