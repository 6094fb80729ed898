#pragma once

// Forward and backward kernels for the layers of the hybrid forecaster:
// 1D convolution over adjacent state columns, max pooling, flatten, dense,
// and a stacked ReLU recurrent network. All functions are pure; whatever a
// backward pass needs is returned from the matching forward call.

#include <cstddef>
#include <span>
#include <vector>

#include "gridcast/tensor.hpp"

namespace gridcast::layers {

enum class Activation { relu, linear };

/// K filters. Row k of `weight` holds filter k flattened channel-major:
/// element (c, j) of the channels x kernel filter is at column c * kernel + j.
struct ConvParams {
  Matrix weight;  // K x (channels * kernel)
  Vector bias;    // K
  std::size_t kernel = 2;

  std::size_t filters() const noexcept { return weight.rows(); }
  std::size_t channels() const noexcept { return kernel == 0 ? 0 : weight.cols() / kernel; }

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

/// An empty bias disables the bias term.
struct DenseParams {
  Matrix weight;  // out x in
  Vector bias;    // out, or empty
  Activation activation = Activation::linear;

  bool has_bias() const noexcept { return !bias.empty(); }

  friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

struct RnnLayerParams {
  Matrix input_weight;      // H x D
  Matrix recurrent_weight;  // H x H
  Vector bias;              // H

  std::size_t hidden() const noexcept { return recurrent_weight.rows(); }
  std::size_t input() const noexcept { return input_weight.cols(); }

  friend bool operator==(const RnnLayerParams&, const RnnLayerParams&) = default;
};

Vector relu(std::span<const double> x);

// ---------------------------------------------------------------------------
// Convolution

struct ConvForward {
  Matrix preactivation;  // K x (r - kernel + 1)
  Matrix output;         // relu(preactivation)
};

/// Column p of the output sees input columns p .. p + kernel - 1, so output
/// positions run in the same chronological order as the input columns.
ConvForward conv1d_forward(const Matrix& input, const ConvParams& params);

struct ConvGrads {
  ConvParams params;  // same shapes as the forward params
  Matrix input;
};

ConvGrads conv1d_backward(const ConvParams& params, const Matrix& input, const ConvForward& cache,
                          const Matrix& upstream);

// ---------------------------------------------------------------------------
// Max pooling (non-overlapping, stride == pool, trailing remainder dropped)

struct PoolForward {
  Matrix output;                    // K x floor(m / pool)
  std::vector<std::size_t> argmax;  // input column of each output element, row-major
  std::size_t input_cols = 0;
};

PoolForward maxpool_forward(const Matrix& feature_maps, std::size_t pool);

Matrix maxpool_backward(const PoolForward& cache, const Matrix& upstream);

// ---------------------------------------------------------------------------
// Flatten, map-major: element (k, j) lands at k * cols + j.

Vector flatten(const Matrix& pooled);
Matrix unflatten(std::span<const double> flat, std::size_t rows, std::size_t cols);

// ---------------------------------------------------------------------------
// Dense

struct DenseForward {
  Vector preactivation;
  Vector output;
};

DenseForward dense_forward(const DenseParams& params, std::span<const double> x);

struct DenseGrads {
  DenseParams params;
  Vector input;
};

DenseGrads dense_backward(const DenseParams& params, std::span<const double> x, const DenseForward& cache,
                          std::span<const double> upstream);

// ---------------------------------------------------------------------------
// Recurrent

/// relu(R_v below + R_h prev_hidden + r)
Vector rnn_cell_step(const RnnLayerParams& params, std::span<const double> below, std::span<const double> prev_hidden);

struct RnnForward {
  // [layer][step]; hidden state entering step 0 is zero for every layer.
  std::vector<std::vector<Vector>> preactivation;
  std::vector<std::vector<Vector>> hidden;
  Vector output;  // top layer, final step
};

/// Consumes `sequence` column by column, earliest first.
RnnForward stacked_rnn_forward(std::span<const RnnLayerParams> layers, const Matrix& sequence);

struct RnnGrads {
  std::vector<RnnLayerParams> layers;
  Matrix input;  // same shape as the sequence
};

/// Backpropagation through time over every step and layer; `upstream` is the
/// gradient with respect to RnnForward::output.
RnnGrads stacked_rnn_backward(std::span<const RnnLayerParams> layers, const Matrix& sequence, const RnnForward& cache,
                              std::span<const double> upstream);

// ---------------------------------------------------------------------------
// Shape helpers

std::size_t conv_output_cols(std::size_t input_cols, std::size_t kernel);
std::size_t pool_output_cols(std::size_t input_cols, std::size_t pool);

}  // namespace gridcast::layers
