#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridcast/data.hpp"
#include "gridcast/layers.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

enum class Architecture {
  hybrid,    // convolutional branch for magnitudes, stacked recurrent branch for angles
  rnn_only,  // stacked recurrent network with one 2n-wide head for both halves
};

const char* to_string(Architecture a) noexcept;
std::optional<Architecture> parse_architecture(std::string_view name) noexcept;

struct ModelConfig {
  std::size_t n_buses = 118;
  std::size_t lag = 10;
  std::size_t conv_filters = 118;
  std::size_t kernel = 2;
  std::size_t pool = 2;
  std::size_t dense1_width = 236;
  std::size_t rnn_layers = 3;
  std::size_t rnn_hidden = 236;
  bool dense1_bias = true;
  Architecture architecture = Architecture::hybrid;

  /// Filters = n, dense1 and hidden widths = 2n, three recurrent layers.
  static ModelConfig for_buses(std::size_t n_buses, std::size_t lag = 10,
                               Architecture architecture = Architecture::hybrid);

  void validate() const;

  std::size_t features() const noexcept { return 2 * n_buses; }
  std::size_t conv_positions() const;
  std::size_t pooled_positions() const;
  std::size_t flat_width() const;
  /// Width of the recurrent head: n for hybrid, 2n for rnn_only.
  std::size_t head_width() const noexcept;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct CnnBranch {
  layers::ConvParams conv;
  layers::DenseParams dense1;  // relu
  layers::DenseParams dense2;  // linear, n outputs

  friend bool operator==(const CnnBranch&, const CnnBranch&) = default;
};

struct RnnBranch {
  std::vector<layers::RnnLayerParams> layers;
  layers::DenseParams head;  // linear

  friend bool operator==(const RnnBranch&, const RnnBranch&) = default;
};

/// Learnable parameters. Also used as the gradient container.
struct ModelParameters {
  CnnBranch cnn;  // empty for rnn_only
  RnnBranch rnn;

  friend bool operator==(const ModelParameters&, const ModelParameters&) = default;
};

struct ForecastModel {
  ModelConfig config;
  ModelParameters params;
  Normalizer normalizer;

  friend bool operator==(const ForecastModel&, const ForecastModel&) = default;
};

/// Parameter blocks in their fixed order:
///   conv.weight conv.bias dense1.weight [dense1.bias] dense2.weight dense2.bias
///   rnn.<l>.input_weight rnn.<l>.recurrent_weight rnn.<l>.bias ... head.weight head.bias
/// The conv and dense blocks are absent for rnn_only models.
struct BlockRef {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::span<double> values;
};
struct ConstBlockRef {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::span<const double> values;
};

std::vector<BlockRef> parameter_blocks(ModelParameters& params);
std::vector<ConstBlockRef> parameter_blocks(const ModelParameters& params);

/// Flat copy of every parameter in block order.
std::vector<double> flatten_parameters(const ModelParameters& params);
void assign_parameters(ModelParameters& params, std::span<const double> flat);

ModelParameters zeros_like(const ModelParameters& params);

/// Closed-form count of scalar learnable parameters.
std::size_t param_count(const ModelConfig& config);

/// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
double init_bound(std::size_t fan_in, std::size_t fan_out) noexcept;

/// Weights ~ U[-bound, bound] per matrix, biases zero, identity normalizer.
/// Conv filters use fan_in = 2n * kernel and fan_out = K * kernel.
ForecastModel init_model(const ModelConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forward / backward on normalized windows

struct ForwardPass {
  layers::ConvForward conv;
  layers::PoolForward pool;
  Vector flat;
  layers::DenseForward dense1;
  layers::DenseForward dense2;
  layers::RnnForward rnn;
  layers::DenseForward head;
  Vector output;  // 2n, normalized units, magnitudes then angles
};

ForwardPass forward(const ModelConfig& config, const ModelParameters& params, const Matrix& window);

/// Adds d(output . output_grad)/d(params) into `grads`.
void backward(const ModelConfig& config, const ModelParameters& params, const Matrix& window, const ForwardPass& pass,
              std::span<const double> output_grad, ModelParameters& grads);

/// Magnitude head of a hybrid model on a normalized window.
Vector cnn_branch_forward(const ForecastModel& model, const Matrix& window);
/// Recurrent head output on a normalized window (n wide for hybrid, 2n for rnn_only).
Vector rnn_branch_forward(const ForecastModel& model, const Matrix& window);

/// Next state in physical units from a raw 2n x r window.
StateVector forecast_next(const ForecastModel& model, const Matrix& raw_window);

// ---------------------------------------------------------------------------
// Persistence
//
//   gridcast-model
//   format_version 1
//   config <key> <value> ...           one line per field
//   normalizer mean <2n hex floats>
//   normalizer stddev <2n hex floats>
//   normalizer constant <count> <indices>
//   param <name> <rows> <cols> <rows*cols hex floats>   one per block, in block order
//   end

inline constexpr int kModelFormatVersion = 1;

std::string format_model(const ForecastModel& model);
ForecastModel parse_model(std::string_view text);
void save_model(const ForecastModel& model, const std::filesystem::path& path);
ForecastModel load_model(const std::filesystem::path& path);

}  // namespace gridcast
