#pragma once

// Test-only oracles. Nothing here calls the backward passes under test.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gridcast/random.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-scale, scale);
  return m;
}

inline Vector random_vector(Rng& rng, std::size_t len, double scale = 1.0) {
  Vector v(len);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Central differences of `loss` with respect to every entry of `values`,
/// perturbing in place and restoring afterwards.
inline std::vector<double> numeric_gradient(std::span<double> values, const std::function<double()>& loss,
                                            double step = kFdStep) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = loss();
    values[i] = saved - step;
    const double down = loss();
    values[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

}  // namespace gridcast::testing
