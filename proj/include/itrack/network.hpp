#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "itrack/aligned.hpp"

namespace itrack {

using Matrix = Eigen::MatrixXd;

struct NetworkSpec {
  std::size_t input_dim = 120;
  std::string extractor = "mlp";
  std::size_t extractor_width = 64;
  std::size_t extractor_layers = 2;
  std::size_t head_width = 32;
  double dropout = 0.1;
  double leaky_slope = 0.01;

  void validate() const;  // throws ConfigError

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

using ConstRef = Eigen::Ref<const Matrix>;

// Per-layer buffers kept from the forward pass for backpropagation. Reusing a
// tape across equal-sized batches avoids reallocating them.
struct LayerTape {
  Matrix pre;    // pre-activation
  Matrix act;    // activation after dropout
  Matrix mask;   // dropout scale per unit (empty when dropout is off)
  Matrix delta;  // backward scratch: d(loss)/d(act), then d(loss)/d(pre)
};

struct Tape {
  std::vector<LayerTape> extractor;
  std::vector<LayerTape> head_hidden;  // one per head
  Matrix head_out;                     // sigmoid outputs, 3 x batch
  Matrix head_delta;                   // 1 x batch scratch
  Matrix rep_delta;                    // d(loss)/d(representation)
};

// Source of dropout masks; nullptr in a forward call means inference mode.
class DropoutSource {
 public:
  explicit DropoutSource(std::uint64_t seed) : state_(seed) {}
  // Fills `out` with 0 (dropped) or 1 / (1 - rate) (kept).
  void fill(Matrix& out, Eigen::Index rows, Eigen::Index cols, double rate);

 private:
  std::uint64_t state_;
};

// Tensor in (flattened, CDF-transformed), representation out. Parameters live
// in a slice of the owning network's flat parameter vector.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual std::size_t param_count() const = 0;
  virtual void init(std::span<double> params, std::mt19937_64& rng) const = 0;
  // Returns the representation, which lives in `tape`.
  virtual const Matrix& forward(std::span<const double> params, const ConstRef& x, std::vector<LayerTape>& tape,
                                DropoutSource* dropout) const = 0;
  // Accumulates parameter gradients into `grad`.
  virtual void backward(std::span<const double> params, const ConstRef& x, std::vector<LayerTape>& tape,
                        const Matrix& grad_out, std::span<double> grad) const = 0;
};

std::unique_ptr<FeatureExtractor> make_extractor(const NetworkSpec& spec);

// Extractor followed by three heads (alpha, beta, residual), each one hidden
// Leaky-ReLU layer and a sigmoid output unit.
//
// Flat parameter layout: extractor parameters first, then per head
// [W1 (head_width x rep, column-major), b1, W2 (1 x head_width), b2].
// Dense layers in the MLP extractor use the same [W column-major, b] layout.
class Network {
 public:
  explicit Network(NetworkSpec spec);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::size_t param_count() const noexcept { return params_.size(); }
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }
  void set_params(std::span<const double> p);

  void init(std::uint64_t seed);

  // Sigmoid outputs, 3 x batch. `dropout == nullptr` is inference mode.
  Matrix forward(const ConstRef& x, DropoutSource* dropout = nullptr, Tape* tape = nullptr) const;

  // Mean squared error over all 3 x batch outputs.
  static double mse(const ConstRef& out, const ConstRef& target);

  // Data loss; writes d(data loss)/d(theta) into grad (resized to param_count).
  // `workspace` may be reused across calls.
  double data_gradient(const ConstRef& x, const ConstRef& target, DropoutSource* dropout, AlignedVector& grad,
                       Tape* workspace = nullptr) const;

  // Pre-activation signs of every Leaky-ReLU unit, used to detect kinks.
  std::vector<char> activation_pattern(const ConstRef& x) const;

 private:
  NetworkSpec spec_;
  std::unique_ptr<FeatureExtractor> extractor_;
  AlignedVector params_;
  std::size_t head_offset_ = 0;
  std::size_t head_size_ = 0;
};

}  // namespace itrack
