#include <doctest.h>

#include <algorithm>

#include "gridcast/error.hpp"
#include "gridcast/layers.hpp"
#include "support/oracles.hpp"

using namespace gridcast;
using namespace gridcast::layers;
using gridcast::testing::dot;
using gridcast::testing::kGradTolerance;
using gridcast::testing::numeric_gradient;
using gridcast::testing::random_matrix;
using gridcast::testing::random_vector;
using gridcast::testing::relative_error;

namespace {

ConvParams random_conv(Rng& rng, std::size_t filters, std::size_t channels, std::size_t kernel = 2) {
  return ConvParams{random_matrix(rng, filters, channels * kernel), random_vector(rng, filters, 0.3), kernel};
}

std::vector<RnnLayerParams> random_stack(Rng& rng, std::size_t input, std::size_t hidden, std::size_t layers) {
  std::vector<RnnLayerParams> out;
  for (std::size_t l = 0; l < layers; ++l) {
    out.push_back(RnnLayerParams{random_matrix(rng, hidden, l == 0 ? input : hidden, 0.6),
                                 random_matrix(rng, hidden, hidden, 0.5), random_vector(rng, hidden, 0.3)});
  }
  return out;
}

}  // namespace

TEST_CASE("relu clamps negatives and keeps positives") {
  CHECK(relu(Vector{-1.0, 0.0, 2.5}) == Vector{0.0, 0.0, 2.5});
  CHECK(relu(Vector(5, 0.0)) == Vector(5, 0.0));
  CHECK(relu(Vector{3.0}) == Vector{3.0});
}

TEST_CASE("conv1d_forward") {
  SUBCASE("hand example: sliding sum over adjacent column pairs") {
    const Matrix input{{1, 2, 3}, {4, 5, 6}};
    const ConvParams params{Matrix(1, 4, 1.0), Vector{0.0}, 2};
    const auto out = conv1d_forward(input, params);
    CHECK(out.output == Matrix{{12, 16}});
  }
  SUBCASE("zero weights and bias give zero maps") {
    Rng rng(3);
    const auto input = random_matrix(rng, 6, 5);
    const ConvParams params{Matrix(4, 12), Vector(4, 0.0), 2};
    const auto out = conv1d_forward(input, params);
    CHECK(out.output == Matrix(4, 4));
  }
  SUBCASE("118-bus shape") {
    const Matrix input(236, 10, 0.1);
    const ConvParams params{Matrix(118, 472, 0.01), Vector(118, 0.0), 2};
    const auto out = conv1d_forward(input, params);
    CHECK(out.output.rows() == 118);
    CHECK(out.output.cols() == 9);
  }
  SUBCASE("filter height must match the input") {
    const ConvParams params{Matrix(2, 6), Vector(2, 0.0), 2};
    CHECK_THROWS_AS(conv1d_forward(Matrix(4, 5), params), ShapeError);
    CHECK_THROWS_AS(conv1d_forward(Matrix(3, 1), params), ShapeError);
  }
  SUBCASE("single filter equals a hand loop of dot products") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng(seed);
      const std::size_t channels = 1 + rng.below(4);
      const std::size_t cols = 2 + rng.below(24 / channels - 1);
      const auto input = random_matrix(rng, channels, cols);
      const auto params = random_conv(rng, 1, channels);
      const auto out = conv1d_forward(input, params);
      for (std::size_t p = 0; p + 1 < cols; ++p) {
        double acc = params.bias[0];
        for (std::size_t c = 0; c < channels; ++c) {
          acc += params.weight(0, 2 * c) * input(c, p) + params.weight(0, 2 * c + 1) * input(c, p + 1);
        }
        CHECK(out.output(0, p) == doctest::Approx(std::max(acc, 0.0)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("maxpool_forward") {
  SUBCASE("pairs with the trailing element dropped") {
    const Matrix maps{{1, 3, 2, 5, 4, 0, 7, 1, 6}};
    const auto out = maxpool_forward(maps, 2);
    CHECK(out.output == Matrix{{3, 5, 4, 7}});
    CHECK(out.argmax == std::vector<std::size_t>{1, 3, 4, 6});
  }
  SUBCASE("constant map") {
    const auto out = maxpool_forward(Matrix(1, 4, 2.5), 2);
    CHECK(out.output == Matrix(1, 2, 2.5));
  }
  SUBCASE("nine positions pool to four") { CHECK(maxpool_forward(Matrix(118, 9), 2).output.cols() == 4); }
  SUBCASE("too few columns") { CHECK_THROWS_AS(maxpool_forward(Matrix(2, 1), 2), ShapeError); }
  SUBCASE("adding a constant shifts every pooled value by that constant") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const auto maps = random_matrix(rng, 3, 2 + rng.below(9));
      const double shift = rng.uniform(0.0, 5.0);
      Matrix shifted = maps;
      for (double& v : shifted.values()) v += shift;
      const auto a = maxpool_forward(maps, 2).output;
      const auto b = maxpool_forward(shifted, 2).output;
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(b.values()[i] == doctest::Approx(a.values()[i] + shift));
    }
  }
}

TEST_CASE("flatten is map-major and invertible") {
  CHECK(flatten(Matrix{{1, 2}, {3, 4}}) == Vector{1, 2, 3, 4});
  CHECK(flatten(Matrix{{7}}) == Vector{7});
  CHECK(flatten(Matrix(118, 4)).size() == 472);
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t r = 1 + rng.below(6);
    const std::size_t c = 1 + rng.below(6);
    const auto m = random_matrix(rng, r, c);
    CHECK(unflatten(flatten(m), r, c) == m);
  }
  CHECK_THROWS_AS(unflatten(Vector(5), 2, 2), ShapeError);
}

TEST_CASE("dense_forward") {
  SUBCASE("identity weight is a no-op") {
    const DenseParams p{Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, Vector(3, 0.0), Activation::linear};
    CHECK(dense_forward(p, Vector{1.5, -2.0, 0.25}).output == Vector{1.5, -2.0, 0.25});
  }
  SUBCASE("zero weight leaves relu(bias)") {
    const DenseParams p{Matrix(2, 3), Vector{-1.0, 2.0}, Activation::relu};
    CHECK(dense_forward(p, Vector{4, 5, 6}).output == Vector{0.0, 2.0});
  }
  SUBCASE("hand matrix-vector product") {
    const DenseParams p{Matrix{{1, 2}, {3, 4}}, Vector{0, 1}, Activation::linear};
    CHECK(dense_forward(p, Vector{1, 1}).output == Vector{3, 8});
  }
  SUBCASE("disabled bias") {
    const DenseParams p{Matrix{{1, 2}}, Vector{}, Activation::linear};
    CHECK(dense_forward(p, Vector{1, 1}).output == Vector{3});
  }
  SUBCASE("length mismatch") {
    const DenseParams p{Matrix(2, 3), Vector(2, 0.0), Activation::linear};
    CHECK_THROWS_AS(dense_forward(p, Vector(2)), ShapeError);
  }
}

TEST_CASE("rnn_cell_step") {
  const RnnLayerParams p{Matrix{{1}}, Matrix{{-1}}, Vector{0}};
  CHECK(rnn_cell_step(p, Vector{2}, Vector{3}) == Vector{0});
  CHECK(rnn_cell_step(p, Vector{3}, Vector{1}) == Vector{2});

  const RnnLayerParams zero{Matrix(2, 3), Matrix(2, 2), Vector{0.5, -0.5}};
  CHECK(rnn_cell_step(zero, Vector{1, 2, 3}, Vector{4, 5}) == Vector{0.5, 0.0});
  const RnnLayerParams all_zero{Matrix(2, 3), Matrix(2, 2), Vector(2, 0.0)};
  CHECK(rnn_cell_step(all_zero, Vector(3, 0.0), Vector(2, 0.0)) == Vector(2, 0.0));
  CHECK_THROWS_AS(rnn_cell_step(zero, Vector(2), Vector(2)), ShapeError);
}

TEST_CASE("stacked_rnn_forward") {
  SUBCASE("118-bus output width") {
    Rng rng(1);
    const auto stack = random_stack(rng, 236, 236, 3);
    CHECK(stacked_rnn_forward(stack, Matrix(236, 10, 0.01)).output.size() == 236);
  }
  SUBCASE("all-zero parameters give zero output") {
    std::vector<RnnLayerParams> stack(3, RnnLayerParams{Matrix(4, 4), Matrix(4, 4), Vector(4, 0.0)});
    Rng rng(2);
    CHECK(stacked_rnn_forward(stack, random_matrix(rng, 4, 5)).output == Vector(4, 0.0));
  }
  SUBCASE("one layer equals r unrolled cell steps, earliest column first") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const auto stack = random_stack(rng, 3, 4, 1);
      const auto seq = random_matrix(rng, 3, 6);
      Vector h(4, 0.0);
      for (std::size_t t = 0; t < seq.cols(); ++t) h = rnn_cell_step(stack[0], seq.column(t), h);
      CHECK(stacked_rnn_forward(stack, seq).output == h);
    }
  }
  SUBCASE("deep stack equals nested unrolled steps") {
    Rng rng(9);
    const auto stack = random_stack(rng, 3, 4, 3);
    const auto seq = random_matrix(rng, 3, 5);
    std::vector<Vector> h(3, Vector(4, 0.0));
    for (std::size_t t = 0; t < seq.cols(); ++t) {
      Vector below = seq.column(t);
      for (std::size_t l = 0; l < 3; ++l) {
        h[l] = rnn_cell_step(stack[l], below, h[l]);
        below = h[l];
      }
    }
    CHECK(stacked_rnn_forward(stack, seq).output == h[2]);
  }
  SUBCASE("layer widths must chain") {
    Rng rng(4);
    auto stack = random_stack(rng, 3, 4, 2);
    stack[1].input_weight = Matrix(4, 5);
    CHECK_THROWS_AS(stacked_rnn_forward(stack, Matrix(3, 4)), ShapeError);
    CHECK_THROWS_AS(stacked_rnn_forward(std::vector<RnnLayerParams>{}, Matrix(3, 4)), ShapeError);
  }
}

TEST_CASE("determinism: identical inputs give bit-identical outputs") {
  Rng rng(77);
  const auto input = random_matrix(rng, 6, 7);
  const auto conv = random_conv(rng, 5, 6);
  const auto stack = random_stack(rng, 6, 5, 3);
  CHECK(conv1d_forward(input, conv).output == conv1d_forward(input, conv).output);
  CHECK(stacked_rnn_forward(stack, input).output == stacked_rnn_forward(stack, input).output);
}

// ---------------------------------------------------------------------------
// Backward passes against central finite differences

TEST_CASE("conv1d_backward matches finite differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t channels = 1 + rng.below(4);
    const std::size_t cols = 2 + rng.below(5);
    auto input = random_matrix(rng, channels, cols);
    auto params = random_conv(rng, 1 + rng.below(3), channels);
    const auto upstream = random_matrix(rng, params.filters(), cols - 1);
    auto loss = [&] { return dot(conv1d_forward(input, params).output.values(), upstream.values()); };

    const auto cache = conv1d_forward(input, params);
    const auto g = conv1d_backward(params, input, cache, upstream);
    CHECK(relative_error(g.params.weight.values(), numeric_gradient(params.weight.values(), loss)) <= kGradTolerance);
    CHECK(relative_error(g.params.bias, numeric_gradient(params.bias, loss)) <= kGradTolerance);
    CHECK(relative_error(g.input.values(), numeric_gradient(input.values(), loss)) <= kGradTolerance);
  }
}

TEST_CASE("maxpool_backward matches finite differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto maps = random_matrix(rng, 1 + rng.below(3), 2 + rng.below(8));
    const auto cache = maxpool_forward(maps, 2);
    const auto upstream = random_matrix(rng, cache.output.rows(), cache.output.cols());
    auto loss = [&] { return dot(maxpool_forward(maps, 2).output.values(), upstream.values()); };
    const auto g = maxpool_backward(cache, upstream);
    CHECK(relative_error(g.values(), numeric_gradient(maps.values(), loss)) <= kGradTolerance);
  }
}

TEST_CASE("dense_backward matches finite differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t in = 1 + rng.below(6);
    const std::size_t out = 1 + rng.below(6);
    const auto act = seed % 2 == 0 ? Activation::relu : Activation::linear;
    DenseParams params{random_matrix(rng, out, in), random_vector(rng, out, 0.3), act};
    Vector x = random_vector(rng, in);
    const auto upstream = random_vector(rng, out);
    auto loss = [&] { return dot(dense_forward(params, x).output, upstream); };
    const auto g = dense_backward(params, x, dense_forward(params, x), upstream);
    CHECK(relative_error(g.params.weight.values(), numeric_gradient(params.weight.values(), loss)) <= kGradTolerance);
    CHECK(relative_error(g.params.bias, numeric_gradient(params.bias, loss)) <= kGradTolerance);
    CHECK(relative_error(g.input, numeric_gradient(x, loss)) <= kGradTolerance);
  }
}

TEST_CASE("stacked_rnn_backward matches finite differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t input = 1 + rng.below(4);
    const std::size_t hidden = 1 + rng.below(5);
    auto stack = random_stack(rng, input, hidden, 1 + rng.below(3));
    auto seq = random_matrix(rng, input, 2 + rng.below(4));
    const auto upstream = random_vector(rng, hidden);
    auto loss = [&] { return dot(stacked_rnn_forward(stack, seq).output, upstream); };
    const auto g = stacked_rnn_backward(stack, seq, stacked_rnn_forward(stack, seq), upstream);
    for (std::size_t l = 0; l < stack.size(); ++l) {
      CHECK(relative_error(g.layers[l].input_weight.values(), numeric_gradient(stack[l].input_weight.values(), loss)) <=
            kGradTolerance);
      CHECK(relative_error(g.layers[l].recurrent_weight.values(),
                           numeric_gradient(stack[l].recurrent_weight.values(), loss)) <= kGradTolerance);
      CHECK(relative_error(g.layers[l].bias, numeric_gradient(stack[l].bias, loss)) <= kGradTolerance);
    }
    CHECK(relative_error(g.input.values(), numeric_gradient(seq.values(), loss)) <= kGradTolerance);
  }
}

TEST_CASE("backward edge cases") {
  Rng rng(21);
  const auto input = random_matrix(rng, 3, 5);
  const auto conv = random_conv(rng, 2, 3);
  const auto cache = conv1d_forward(input, conv);

  SUBCASE("zero upstream gives zero gradients") {
    const auto g = conv1d_backward(conv, input, cache, Matrix(2, 4));
    CHECK(std::all_of(g.params.weight.values().begin(), g.params.weight.values().end(), [](double v) { return v == 0.0; }));
    CHECK(g.input == Matrix(3, 5));
    const auto stack = random_stack(rng, 3, 4, 2);
    const auto rg = stacked_rnn_backward(stack, input, stacked_rnn_forward(stack, input), Vector(4, 0.0));
    CHECK(rg.input == Matrix(3, 5));
    CHECK(rg.layers[0].bias == Vector(4, 0.0));
  }
  SUBCASE("all-negative relu pre-activations block the input gradient") {
    const DenseParams p{Matrix(3, 2), Vector(3, -1.0), Activation::relu};
    const Vector x{0.5, 0.5};
    const auto g = dense_backward(p, x, dense_forward(p, x), Vector{1.0, 2.0, 3.0});
    CHECK(g.input == Vector(2, 0.0));
  }
  SUBCASE("missing caches are rejected") {
    CHECK_THROWS_AS(conv1d_backward(conv, input, ConvForward{}, Matrix(2, 4)), MissingCache);
    CHECK_THROWS_AS(maxpool_backward(PoolForward{}, Matrix(1, 1)), MissingCache);
    const DenseParams p{Matrix(2, 2), Vector(2, 0.0), Activation::relu};
    CHECK_THROWS_AS(dense_backward(p, Vector(2), DenseForward{}, Vector(2)), MissingCache);
    const auto stack = random_stack(rng, 3, 4, 2);
    CHECK_THROWS_AS(stacked_rnn_backward(stack, input, RnnForward{}, Vector(4)), MissingCache);
  }
  SUBCASE("cache from a different input length is rejected") {
    const auto other = conv1d_forward(random_matrix(rng, 3, 6), conv);
    CHECK_THROWS_AS(conv1d_backward(conv, input, other, Matrix(2, 4)), MissingCache);
  }
}
