#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcast/data.hpp"
#include "gridcast/evaluation.hpp"
#include "gridcast/forecaster.hpp"

namespace gridcast {

enum class FreezeBranch { none, cnn, rnn };

const char* to_string(FreezeBranch f) noexcept;
std::optional<FreezeBranch> parse_freeze_branch(std::string_view name) noexcept;

struct Hyperparams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  bool shuffle_each_epoch = true;
  /// Parameters of a frozen branch receive zero gradient.
  FreezeBranch freeze = FreezeBranch::none;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  static AdamState zeros(std::size_t size) { return AdamState{std::vector<double>(size, 0.0), std::vector<double>(size, 0.0), 0}; }
};

/// Mean of squared differences.
double mse_loss(std::span<const double> pred, std::span<const double> target);
/// 2 (pred - target) / len
Vector mse_gradient(std::span<const double> pred, std::span<const double> target);

/// One bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const Hyperparams& hp);

/// MSE over the magnitude half plus MSE over the angle half of a 2n output.
double joint_loss(std::span<const double> pred, std::span<const double> target);
Vector joint_loss_gradient(std::span<const double> pred, std::span<const double> target);

/// Mean joint loss over already-normalized samples; adds the matching
/// gradient (also averaged) into `grads`.
double batch_loss_and_gradient(const ModelConfig& config, const ModelParameters& params,
                               std::span<const Sample* const> batch, ModelParameters& grads);

/// Windows and targets mapped through the model's normalizer.
std::vector<Sample> normalize_samples(const Normalizer& normalizer, std::span<const Sample> raw);

struct TrainReport {
  std::vector<double> epoch_loss;  // mean joint loss per epoch, normalized units
  std::optional<double> final_test_nrmse;
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
  Hyperparams hyperparams;
  std::size_t train_samples = 0;
};

struct TrainResult {
  ForecastModel model;
  TrainReport report;
};

/// Minibatch Adam over raw samples, normalized with `model.normalizer`.
/// Throws DivergenceError on a non-finite batch loss.
TrainResult train(ForecastModel model, std::span<const Sample> raw_train, const Hyperparams& hp);

struct PreparedData {
  StateSeries train;
  StateSeries test;
  std::vector<Sample> train_windows;
  std::vector<Sample> test_windows;
};

/// Chronological split, then windows built inside each partition.
PreparedData prepare_data(const StateSeries& series, double train_fraction, std::size_t lag);

/// init_model(config, hp.seed) + fit normalizer on the train partition + train.
/// When `test` is non-empty the report carries the final test nRMSE.
TrainResult fit_forecaster(const ModelConfig& config, const PreparedData& data, const Hyperparams& hp,
                           bool normalize = true);

struct RunResult {
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string error;
  MetricsReport metrics;
};

struct MultiRunReport {
  std::vector<RunResult> runs;  // in seed order
  AggregateStats nrmse;
  MetricsReport mean_metrics;   // over included runs
};

/// Trains n_runs models with seeds hp.seed + i and scores each on the test
/// windows. Diverged runs are reported and excluded from the statistics.
/// Up to `threads` runs execute concurrently; results do not depend on it.
MultiRunReport multi_run(const ModelConfig& config, const PreparedData& data, const Hyperparams& hp,
                         std::size_t n_runs, std::size_t threads = 1);

}  // namespace gridcast
