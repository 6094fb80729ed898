#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "gridcast/tensor.hpp"

namespace gridcast {

/// Bus voltages at one instant: n magnitudes (p.u.) followed by n angles (degrees).
struct StateVector {
  Vector values;

  StateVector() = default;
  explicit StateVector(Vector v) : values(std::move(v)) {}

  std::size_t n_buses() const noexcept { return values.size() / 2; }
  std::span<const double> magnitudes() const noexcept { return {values.data(), n_buses()}; }
  std::span<const double> angles() const noexcept { return {values.data() + n_buses(), n_buses()}; }

  friend bool operator==(const StateVector&, const StateVector&) = default;
};

/// T states at uniform spacing; index is time.
struct StateSeries {
  std::size_t n_buses = 0;
  std::vector<double> timestamps;
  std::vector<StateVector> states;

  std::size_t length() const noexcept { return states.size(); }

  friend bool operator==(const StateSeries&, const StateSeries&) = default;
};

/// One training or test example. Column c of `window` holds S_{t-r+1+c};
/// `target` is S_{t+1}.
struct Sample {
  Matrix window;  // 2n x r
  StateVector target;
};

/// Per-feature z-scoring. Features whose training variance is zero keep
/// std = 1 and are listed in `constant`.
struct Normalizer {
  Vector mean;
  Vector stddev;
  std::vector<std::size_t> constant;

  std::size_t features() const noexcept { return mean.size(); }
  bool is_identity() const noexcept;

  Vector apply(std::span<const double> x) const;
  Vector invert(std::span<const double> z) const;
  /// Applies the per-feature transform to every column.
  Matrix apply_window(const Matrix& window) const;

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

Normalizer fit_normalizer(const StateSeries& train);
Normalizer identity_normalizer(std::size_t n_buses);

// ---------------------------------------------------------------------------
// CSV: header `t,vm_1..vm_n,va_1..va_n`, one row per instant.

StateSeries load_series(const std::filesystem::path& path);
StateSeries parse_series(std::string_view text);
std::string format_series(const StateSeries& series);
void save_series(const StateSeries& series, const std::filesystem::path& path);

// ---------------------------------------------------------------------------

/// Splits at floor(T * train_fraction) with no shuffling. Both halves must
/// hold at least lag + 1 states so each yields a window.
std::pair<StateSeries, StateSeries> chronological_split(const StateSeries& series, double train_fraction,
                                                        std::size_t lag);

/// Exactly T - r samples; sample i uses states i .. i+r-1 (0-based) as its
/// window and state i+r as its target.
std::vector<Sample> build_windows(const StateSeries& series, std::size_t lag);

Matrix window_at(const StateSeries& series, std::size_t first, std::size_t lag);

// ---------------------------------------------------------------------------
// Synthetic grid states
//
//   |V_i(t)| = base + A_i sin(2 pi t / P + phi_i) + e_i(t)
//   theta_i(t) = offset_i + B_i sin(2 pi t / P + psi_i)
//                + c * B_{i-1} sin(2 pi t / P + psi_{i-1}) + e'_i(t)
//
// with bus indices on a ring (bus 0's neighbour is bus n-1), e ~ N(0, s_m^2)
// and e' ~ N(0, s_a^2) drawn from the seed.

struct SyntheticConfig {
  std::size_t n_buses = 14;
  std::size_t length = 2000;
  double base_magnitude = 1.0;
  Vector magnitude_amplitude;
  Vector magnitude_phase;
  Vector angle_offset;
  Vector angle_amplitude;
  Vector angle_phase;
  double period = 96.0;
  double magnitude_noise = 0.001;
  double angle_noise = 0.1;
  double coupling = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Per-bus amplitudes and phases drawn deterministically from `seed`:
/// A_i ~ U[0.01, 0.03] p.u., B_i ~ U[2, 6] deg, offset_i ~ U[-20, 5] deg
/// (bus 1 pinned at 0 as the reference), phases ~ U[0, 2 pi).
SyntheticConfig default_synthetic_config(std::size_t n_buses, std::size_t length, std::uint64_t seed);

StateSeries generate_synthetic_series(const SyntheticConfig& cfg);

}  // namespace gridcast
