#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itrack/features.hpp"
#include "itrack/network.hpp"

namespace itrack {

struct TrainConfig {
  std::size_t batch_size = 512;
  double momentum = 0.1;
  double l2 = 1e-4;
  double initial_lr = 1e-2;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;  // epochs without validation improvement
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct ModelSpec {
  FeatureGridSpec grid;
  NetworkSpec network;  // input_dim is overwritten from the grid
  CdfGranularity granularity = CdfGranularity::per_cell;
};

// Ties a model to the episode whose train block fitted it.
struct EpisodeTag {
  Step t_n = 0;
  StepRange train_block{0, 0};
  StepRange validation_block{0, 0};

  friend bool operator==(const EpisodeTag&, const EpisodeTag&) = default;
};

struct TrainHistory {
  double initial_train_loss = 0.0;  // inference mode, before the first update
  double initial_validation_loss = 0.0;
  std::vector<double> train_loss;  // mean batch loss per epoch (data term, dropout on)
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;  // 1-based
  std::size_t epochs_run = 0;
  bool early_stopped = false;
};

struct TrainHooks {
  // Replaces the computed validation loss of an epoch (1-based).
  std::function<double(std::size_t epoch, double computed)> validation_loss;
};

class PredictorModel {
 public:
  PredictorModel(FeatureGridSpec grid, CdfSet cdfs, Network network, TrainConfig config,
                 std::optional<EpisodeTag> episode);

  const FeatureGridSpec& grid() const noexcept { return grid_; }
  const CdfSet& cdfs() const noexcept { return cdfs_; }
  const Network& network() const noexcept { return network_; }
  Network& network() noexcept { return network_; }
  const TrainConfig& config() const noexcept { return config_; }
  const std::optional<EpisodeTag>& episode() const noexcept { return episode_; }
  std::string extractor_kind() const { return network_.spec().extractor; }

  // Predicted (alpha, beta, residual). Throws ShapeError on a grid mismatch.
  FactorEstimate forward(const FeatureTensor& x) const;
  std::vector<FactorEstimate> forward_batch(std::span<const FeatureTensor* const> xs) const;

  // Sigmoid outputs before the inverse target transform, 3 x n.
  Matrix raw_outputs(std::span<const FeatureTensor* const> xs) const;

  // Throws LookAheadError unless the model was trained for episode t_n.
  void require_episode(Step t_n) const;

 private:
  Matrix transformed_inputs(std::span<const FeatureTensor* const> xs) const;

  FeatureGridSpec grid_;
  CdfSet cdfs_;
  Network network_;
  TrainConfig config_;
  std::optional<EpisodeTag> episode_;
};

// Fits CDFs on the training block, then trains the network by mini-batch SGD
// with momentum, L2 penalty and a per-epoch cosine-annealed learning rate,
// keeping the parameters with the best validation loss. Throws EmptyInputError
// on an empty block. When an episode tag is given, training records outside
// its train block or validation records outside its validation block raise
// LookAheadError.
PredictorModel train(std::span<const Record> train_records, std::span<const Record> validation_records,
                     const TrainConfig& cfg, const ModelSpec& spec, std::optional<EpisodeTag> episode = {},
                     TrainHistory* history = nullptr, const TrainHooks* hooks = nullptr);

// Lower-level loop over already transformed data; `net` is updated in place.
TrainHistory fit_network(Network& net, const TransformedData& train, const TransformedData& validation,
                         const TrainConfig& cfg, const TrainHooks* hooks = nullptr);

// MSE in transformed space, inference mode.
double evaluate_loss(const Network& net, const TransformedData& data);

// Full objective MSE + l2 * |theta|^2 and its gradient (inference mode).
double objective_gradient(const Network& net, const Matrix& x, const Matrix& y, double l2,
                          AlignedVector& grad);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // parameters whose step crosses a Leaky-ReLU kink
};

// Compares analytic gradients of the objective with central differences.
GradientCheckResult gradient_check(const Network& net, const Matrix& x, const Matrix& y, double l2,
                                   double step = 1e-5);
GradientCheckResult gradient_check(const PredictorModel& model, std::span<const Record> batch, double step = 1e-5);

void save_checkpoint(const PredictorModel& model, const std::filesystem::path& path);
PredictorModel load_checkpoint(const std::filesystem::path& path);

}  // namespace itrack
