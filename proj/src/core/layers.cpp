#include "gridcast/layers.hpp"

#include <algorithm>

#include "gridcast/error.hpp"

namespace gridcast::layers {

namespace {

double relu_scalar(double x) noexcept { return x > 0.0 ? x : 0.0; }

// Subgradient at exactly zero is zero.
double relu_grad(double pre) noexcept { return pre > 0.0 ? 1.0 : 0.0; }

std::string dims(std::size_t a, std::size_t b) { return std::to_string(a) + "x" + std::to_string(b); }

}  // namespace

Vector relu(std::span<const double> x) {
  Vector out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), relu_scalar);
  return out;
}

std::size_t conv_output_cols(std::size_t input_cols, std::size_t kernel) {
  if (kernel == 0 || input_cols < kernel) {
    throw ShapeError("convolution needs at least " + std::to_string(kernel) + " columns, got " +
                     std::to_string(input_cols));
  }
  return input_cols - kernel + 1;
}

std::size_t pool_output_cols(std::size_t input_cols, std::size_t pool) {
  if (pool == 0 || input_cols < pool) {
    throw ShapeError("max pool of width " + std::to_string(pool) + " over " + std::to_string(input_cols) + " columns");
  }
  return input_cols / pool;
}

// ---------------------------------------------------------------------------

ConvForward conv1d_forward(const Matrix& input, const ConvParams& params) {
  const std::size_t kernel = params.kernel;
  if (params.filters() == 0 || kernel == 0 || params.weight.cols() != input.rows() * kernel) {
    throw ShapeError("conv filters " + dims(input.rows(), kernel) + " expected, have weight " +
                     params.weight.shape_string() + " (kernel " + std::to_string(kernel) + ")");
  }
  if (params.bias.size() != params.filters()) throw ShapeError("conv bias length does not match filter count");
  const std::size_t positions = conv_output_cols(input.cols(), kernel);

  ConvForward out{Matrix(params.filters(), positions), Matrix(params.filters(), positions)};
  for (std::size_t k = 0; k < params.filters(); ++k) {
    const auto w = params.weight.row(k);
    for (std::size_t p = 0; p < positions; ++p) {
      double acc = params.bias[k];
      for (std::size_t c = 0; c < input.rows(); ++c) {
        const auto in_row = input.row(c);
        for (std::size_t j = 0; j < kernel; ++j) acc += w[c * kernel + j] * in_row[p + j];
      }
      out.preactivation(k, p) = acc;
      out.output(k, p) = relu_scalar(acc);
    }
  }
  return out;
}

ConvGrads conv1d_backward(const ConvParams& params, const Matrix& input, const ConvForward& cache,
                          const Matrix& upstream) {
  const std::size_t kernel = params.kernel;
  if (cache.preactivation.empty()) throw MissingCache("conv backward called without a forward cache");
  if (params.weight.cols() != input.rows() * kernel || params.filters() == 0) {
    throw ShapeError("conv params do not match input " + input.shape_string());
  }
  const std::size_t positions = conv_output_cols(input.cols(), kernel);
  if (cache.preactivation.rows() != params.filters() || cache.preactivation.cols() != positions) {
    throw MissingCache("conv cache " + cache.preactivation.shape_string() + " does not belong to this input");
  }
  if (upstream.rows() != params.filters() || upstream.cols() != positions) {
    throw ShapeError("conv upstream gradient " + upstream.shape_string() + ", expected " +
                     dims(params.filters(), positions));
  }

  ConvGrads g{ConvParams{Matrix(params.weight.rows(), params.weight.cols()), Vector(params.filters(), 0.0), kernel},
              Matrix(input.rows(), input.cols())};
  for (std::size_t k = 0; k < params.filters(); ++k) {
    const auto w = params.weight.row(k);
    auto dw = g.params.weight.row(k);
    for (std::size_t p = 0; p < positions; ++p) {
      const double d = upstream(k, p) * relu_grad(cache.preactivation(k, p));
      if (d == 0.0) continue;
      g.params.bias[k] += d;
      for (std::size_t c = 0; c < input.rows(); ++c) {
        const auto in_row = input.row(c);
        auto din_row = g.input.row(c);
        for (std::size_t j = 0; j < kernel; ++j) {
          dw[c * kernel + j] += d * in_row[p + j];
          din_row[p + j] += d * w[c * kernel + j];
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

PoolForward maxpool_forward(const Matrix& feature_maps, std::size_t pool) {
  const std::size_t out_cols = pool_output_cols(feature_maps.cols(), pool);
  PoolForward out{Matrix(feature_maps.rows(), out_cols), {}, feature_maps.cols()};
  out.argmax.resize(feature_maps.rows() * out_cols);
  for (std::size_t k = 0; k < feature_maps.rows(); ++k) {
    const auto row = feature_maps.row(k);
    for (std::size_t q = 0; q < out_cols; ++q) {
      std::size_t best = q * pool;
      // Ties resolve to the earliest position.
      for (std::size_t j = best + 1; j < (q + 1) * pool; ++j) {
        if (row[j] > row[best]) best = j;
      }
      out.output(k, q) = row[best];
      out.argmax[k * out_cols + q] = best;
    }
  }
  return out;
}

Matrix maxpool_backward(const PoolForward& cache, const Matrix& upstream) {
  if (cache.argmax.empty() || cache.argmax.size() != cache.output.size()) {
    throw MissingCache("max pool backward called without a forward cache");
  }
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
    throw ShapeError("max pool upstream gradient " + upstream.shape_string() + ", expected " +
                     cache.output.shape_string());
  }
  Matrix grad(cache.output.rows(), cache.input_cols);
  for (std::size_t k = 0; k < upstream.rows(); ++k) {
    for (std::size_t q = 0; q < upstream.cols(); ++q) {
      grad(k, cache.argmax[k * upstream.cols() + q]) += upstream(k, q);
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------

Vector flatten(const Matrix& pooled) { return Vector(pooled.values().begin(), pooled.values().end()); }

Matrix unflatten(std::span<const double> flat, std::size_t rows, std::size_t cols) {
  if (flat.size() != rows * cols) {
    throw ShapeError("cannot unflatten " + std::to_string(flat.size()) + " values into " + dims(rows, cols));
  }
  return Matrix(rows, cols, Vector(flat.begin(), flat.end()));
}

// ---------------------------------------------------------------------------

DenseForward dense_forward(const DenseParams& params, std::span<const double> x) {
  if (x.size() != params.weight.cols()) {
    throw ShapeError("dense layer " + params.weight.shape_string() + " given input of length " +
                     std::to_string(x.size()));
  }
  if (params.has_bias() && params.bias.size() != params.weight.rows()) {
    throw ShapeError("dense bias length does not match weight rows");
  }
  DenseForward out;
  out.preactivation = params.has_bias() ? params.bias : Vector(params.weight.rows(), 0.0);
  matvec_accumulate(params.weight, x, out.preactivation);
  out.output = params.activation == Activation::relu ? relu(out.preactivation) : out.preactivation;
  return out;
}

DenseGrads dense_backward(const DenseParams& params, std::span<const double> x, const DenseForward& cache,
                          std::span<const double> upstream) {
  if (cache.preactivation.size() != params.weight.rows() || cache.preactivation.empty()) {
    throw MissingCache("dense backward called without a matching forward cache");
  }
  if (x.size() != params.weight.cols()) throw ShapeError("dense backward input length mismatch");
  if (upstream.size() != params.weight.rows()) throw ShapeError("dense upstream gradient length mismatch");

  Vector delta(upstream.begin(), upstream.end());
  if (params.activation == Activation::relu) {
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= relu_grad(cache.preactivation[i]);
  }
  DenseGrads g{DenseParams{Matrix(params.weight.rows(), params.weight.cols()),
                           params.has_bias() ? delta : Vector{}, params.activation},
               Vector(x.size(), 0.0)};
  outer_accumulate(g.params.weight, delta, x);
  matvec_transpose_accumulate(params.weight, delta, g.input);
  return g;
}

// ---------------------------------------------------------------------------

namespace {

void check_rnn_layer(const RnnLayerParams& p, std::size_t input_dim, std::size_t index) {
  const std::size_t h = p.hidden();
  if (h == 0 || p.recurrent_weight.cols() != h || p.input_weight.rows() != h || p.bias.size() != h) {
    throw ShapeError("recurrent layer " + std::to_string(index) + " has inconsistent shapes (input " +
                     p.input_weight.shape_string() + ", recurrent " + p.recurrent_weight.shape_string() + ", bias " +
                     std::to_string(p.bias.size()) + ")");
  }
  if (p.input() != input_dim) {
    throw ShapeError("recurrent layer " + std::to_string(index) + " expects input width " +
                     std::to_string(p.input()) + ", got " + std::to_string(input_dim));
  }
}

}  // namespace

Vector rnn_cell_step(const RnnLayerParams& params, std::span<const double> below, std::span<const double> prev_hidden) {
  check_rnn_layer(params, below.size(), 0);
  if (prev_hidden.size() != params.hidden()) throw ShapeError("previous hidden state has the wrong width");
  Vector pre = params.bias;
  matvec_accumulate(params.input_weight, below, pre);
  matvec_accumulate(params.recurrent_weight, prev_hidden, pre);
  return relu(pre);
}

RnnForward stacked_rnn_forward(std::span<const RnnLayerParams> layers, const Matrix& sequence) {
  if (layers.empty()) throw ShapeError("stacked recurrent network needs at least one layer");
  if (sequence.cols() == 0) throw ShapeError("empty input sequence");
  std::size_t width = sequence.rows();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    check_rnn_layer(layers[l], width, l);
    width = layers[l].hidden();
  }

  const std::size_t steps = sequence.cols();
  RnnForward out;
  out.preactivation.resize(layers.size());
  out.hidden.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    out.preactivation[l].reserve(steps);
    out.hidden[l].reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      Vector below = l == 0 ? sequence.column(t) : out.hidden[l - 1][t];
      Vector pre = p.bias;
      matvec_accumulate(p.input_weight, below, pre);
      if (t > 0) matvec_accumulate(p.recurrent_weight, out.hidden[l][t - 1], pre);
      out.hidden[l].push_back(relu(pre));
      out.preactivation[l].push_back(std::move(pre));
    }
  }
  out.output = out.hidden.back().back();
  return out;
}

RnnGrads stacked_rnn_backward(std::span<const RnnLayerParams> layers, const Matrix& sequence, const RnnForward& cache,
                              std::span<const double> upstream) {
  const std::size_t steps = sequence.cols();
  if (cache.hidden.size() != layers.size() || cache.preactivation.size() != layers.size() || layers.empty()) {
    throw MissingCache("stacked recurrent backward called without a matching forward cache");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (cache.hidden[l].size() != steps || cache.preactivation[l].size() != steps) {
      throw MissingCache("recurrent cache for layer " + std::to_string(l) + " does not cover the sequence");
    }
  }
  if (upstream.size() != layers.back().hidden()) throw ShapeError("recurrent upstream gradient has the wrong width");

  RnnGrads g;
  g.layers.reserve(layers.size());
  for (const auto& p : layers) {
    g.layers.push_back(RnnLayerParams{Matrix(p.input_weight.rows(), p.input_weight.cols()),
                                      Matrix(p.recurrent_weight.rows(), p.recurrent_weight.cols()),
                                      Vector(p.bias.size(), 0.0)});
  }

  // from_above[t]: gradient reaching layer l's hidden state at step t from the layer above.
  std::vector<Vector> from_above(steps, Vector(layers.back().hidden(), 0.0));
  from_above[steps - 1].assign(upstream.begin(), upstream.end());

  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& p = layers[li];
    auto& gp = g.layers[li];
    const std::size_t in_dim = p.input();
    std::vector<Vector> to_below(steps, Vector(in_dim, 0.0));
    Vector carry(p.hidden(), 0.0);

    for (std::size_t t = steps; t-- > 0;) {
      Vector delta(p.hidden());
      const auto& pre = cache.preactivation[li][t];
      for (std::size_t i = 0; i < delta.size(); ++i) {
        delta[i] = (from_above[t][i] + carry[i]) * relu_grad(pre[i]);
      }
      const Vector below = li == 0 ? sequence.column(t) : cache.hidden[li - 1][t];
      outer_accumulate(gp.input_weight, delta, below);
      for (std::size_t i = 0; i < delta.size(); ++i) gp.bias[i] += delta[i];
      matvec_transpose_accumulate(p.input_weight, delta, to_below[t]);

      std::fill(carry.begin(), carry.end(), 0.0);
      if (t > 0) {
        outer_accumulate(gp.recurrent_weight, delta, cache.hidden[li][t - 1]);
        matvec_transpose_accumulate(p.recurrent_weight, delta, carry);
      }
    }
    from_above = std::move(to_below);
  }

  g.input = Matrix(sequence.rows(), steps);
  for (std::size_t t = 0; t < steps; ++t) g.input.set_column(t, from_above[t]);
  return g;
}

}  // namespace gridcast::layers
