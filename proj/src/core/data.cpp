#include "gridcast/data.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gridcast/error.hpp"
#include "gridcast/io.hpp"
#include "gridcast/random.hpp"

namespace gridcast {

// ---------------------------------------------------------------------------
// Normalizer

bool Normalizer::is_identity() const noexcept {
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (mean[i] != 0.0 || stddev[i] != 1.0) return false;
  }
  return true;
}

Vector Normalizer::apply(std::span<const double> x) const {
  if (x.size() != features()) {
    throw ShapeError("normalizer has " + std::to_string(features()) + " features, got " + std::to_string(x.size()));
  }
  Vector z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / stddev[i];
  return z;
}

Vector Normalizer::invert(std::span<const double> z) const {
  if (z.size() != features()) {
    throw ShapeError("normalizer has " + std::to_string(features()) + " features, got " + std::to_string(z.size()));
  }
  Vector x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] * stddev[i] + mean[i];
  return x;
}

Matrix Normalizer::apply_window(const Matrix& window) const {
  if (window.rows() != features()) {
    throw ShapeError("window has " + std::to_string(window.rows()) + " features, normalizer expects " +
                     std::to_string(features()));
  }
  Matrix out(window.rows(), window.cols());
  for (std::size_t f = 0; f < window.rows(); ++f) {
    for (std::size_t c = 0; c < window.cols(); ++c) out(f, c) = (window(f, c) - mean[f]) / stddev[f];
  }
  return out;
}

Normalizer fit_normalizer(const StateSeries& train) {
  if (train.states.empty()) throw InvalidArgument("cannot fit a normalizer on an empty series");
  const std::size_t features = 2 * train.n_buses;
  const double count = static_cast<double>(train.length());
  Normalizer norm{Vector(features, 0.0), Vector(features, 0.0), {}};
  for (const auto& s : train.states) {
    for (std::size_t f = 0; f < features; ++f) norm.mean[f] += s.values[f];
  }
  for (auto& m : norm.mean) m /= count;
  for (const auto& s : train.states) {
    for (std::size_t f = 0; f < features; ++f) {
      const double d = s.values[f] - norm.mean[f];
      norm.stddev[f] += d * d;
    }
  }
  for (std::size_t f = 0; f < features; ++f) {
    const double sd = std::sqrt(norm.stddev[f] / count);
    if (sd > 0.0) {
      norm.stddev[f] = sd;
    } else {
      norm.stddev[f] = 1.0;
      norm.constant.push_back(f);
    }
  }
  return norm;
}

Normalizer identity_normalizer(std::size_t n_buses) {
  return Normalizer{Vector(2 * n_buses, 0.0), Vector(2 * n_buses, 1.0), {}};
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::size_t parse_header(std::string_view line) {
  using Kind = ParseError::Kind;
  const auto cells = split_commas(line);
  if (cells.empty() || trim(cells[0]) != "t") {
    if (!cells.empty() && io::parse_double(cells[0])) throw ParseError(Kind::missing_header, 1, "missing header row");
    throw ParseError(Kind::bad_header, 1, "header must start with column 't'");
  }
  const std::size_t features = cells.size() - 1;
  if (features == 0 || features % 2 != 0) {
    throw ParseError(Kind::bad_header, 1, "header needs vm_1..vm_n,va_1..va_n after 't'");
  }
  const std::size_t n = features / 2;
  for (std::size_t i = 0; i < features; ++i) {
    const std::string expected = (i < n ? "vm_" : "va_") + std::to_string(i % n + 1);
    if (trim(cells[i + 1]) != expected) {
      throw ParseError(Kind::bad_header, 1, "column " + std::to_string(i + 2) + " is '" +
                                                std::string(trim(cells[i + 1])) + "', expected '" + expected + "'");
    }
  }
  return n;
}

}  // namespace

StateSeries parse_series(std::string_view text) {
  using Kind = ParseError::Kind;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  StateSeries series;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;

    if (!have_header) {
      if (line_no != 1) throw ParseError(Kind::missing_header, line_no, "blank lines before header");
      series.n_buses = parse_header(line);
      have_header = true;
      continue;
    }

    const auto cells = split_commas(line);
    const std::size_t expected = 2 * series.n_buses + 1;
    if (cells.size() != expected) {
      throw ParseError(Kind::ragged_row, line_no,
                       "expected " + std::to_string(expected) + " cells, found " + std::to_string(cells.size()));
    }
    StateVector state(Vector(2 * series.n_buses));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = io::parse_double(cells[c]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(Kind::non_numeric, line_no,
                         "cell " + std::to_string(c + 1) + " ('" + std::string(trim(cells[c])) + "') is not a finite number");
      }
      if (c == 0) {
        series.timestamps.push_back(*v);
      } else {
        state.values[c - 1] = *v;
      }
    }
    series.states.push_back(std::move(state));
  }
  if (!have_header) throw ParseError(Kind::missing_header, 0, "empty file");
  if (series.length() < 2) {
    throw ParseError(Kind::too_short, line_no, "series needs at least 2 rows, found " + std::to_string(series.length()));
  }
  return series;
}

StateSeries load_series(const std::filesystem::path& path) { return parse_series(io::read_file(path)); }

std::string format_series(const StateSeries& series) {
  std::string out = "t";
  for (std::size_t i = 1; i <= series.n_buses; ++i) out += ",vm_" + std::to_string(i);
  for (std::size_t i = 1; i <= series.n_buses; ++i) out += ",va_" + std::to_string(i);
  out += '\n';
  for (std::size_t t = 0; t < series.length(); ++t) {
    out += io::format_decimal(series.timestamps[t]);
    for (double v : series.states[t].values) {
      out += ',';
      out += io::format_decimal(v);
    }
    out += '\n';
  }
  return out;
}

void save_series(const StateSeries& series, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_series(series));
}

// ---------------------------------------------------------------------------
// Splitting and windowing

namespace {

StateSeries slice(const StateSeries& series, std::size_t begin, std::size_t end) {
  StateSeries out;
  out.n_buses = series.n_buses;
  out.timestamps.assign(series.timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                        series.timestamps.begin() + static_cast<std::ptrdiff_t>(end));
  out.states.assign(series.states.begin() + static_cast<std::ptrdiff_t>(begin),
                    series.states.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

}  // namespace

std::pair<StateSeries, StateSeries> chronological_split(const StateSeries& series, double train_fraction,
                                                        std::size_t lag) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("train fraction must lie strictly between 0 and 1");
  }
  const std::size_t total = series.length();
  // The epsilon keeps exact products such as 10 * 0.8 from flooring to 7.
  const auto train_count = static_cast<std::size_t>(std::floor(static_cast<double>(total) * train_fraction + 1e-9));
  const std::size_t test_count = total - train_count;
  if (train_count < lag + 1 || test_count < lag + 1) {
    throw InvalidArgument("split of " + std::to_string(total) + " states gives " + std::to_string(train_count) +
                          " train / " + std::to_string(test_count) + " test; each needs at least " +
                          std::to_string(lag + 1));
  }
  return {slice(series, 0, train_count), slice(series, train_count, total)};
}

Matrix window_at(const StateSeries& series, std::size_t first, std::size_t lag) {
  if (first + lag > series.length()) throw OutOfRange("window runs past the end of the series");
  Matrix w(2 * series.n_buses, lag);
  for (std::size_t c = 0; c < lag; ++c) w.set_column(c, series.states[first + c].values);
  return w;
}

std::vector<Sample> build_windows(const StateSeries& series, std::size_t lag) {
  if (lag == 0) throw InvalidArgument("lag must be at least 1");
  if (series.length() <= lag) {
    throw InvalidArgument("series of length " + std::to_string(series.length()) + " has no windows at lag " +
                          std::to_string(lag));
  }
  std::vector<Sample> samples;
  samples.reserve(series.length() - lag);
  for (std::size_t i = 0; i + lag < series.length(); ++i) {
    samples.push_back(Sample{window_at(series, i, lag), series.states[i + lag]});
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticConfig::validate() const {
  if (n_buses == 0) throw InvalidArgument("synthetic series needs at least one bus");
  if (length < 2) throw InvalidArgument("synthetic series needs at least 2 states");
  if (!(period >= 2.0)) throw InvalidArgument("period must be at least 2 samples");
  if (!(magnitude_noise >= 0.0) || !(angle_noise >= 0.0)) throw InvalidArgument("noise std must be non-negative");
  if (!std::isfinite(coupling) || !std::isfinite(base_magnitude)) throw InvalidArgument("non-finite synthetic parameter");
  for (const Vector* v : {&magnitude_amplitude, &magnitude_phase, &angle_offset, &angle_amplitude, &angle_phase}) {
    if (v->size() != n_buses) throw InvalidArgument("per-bus synthetic parameters must have one entry per bus");
  }
}

SyntheticConfig default_synthetic_config(std::size_t n_buses, std::size_t length, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_buses = n_buses;
  cfg.length = length;
  cfg.seed = seed;
  Rng rng(mix_seed(seed, 1));
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n_buses; ++i) {
    cfg.magnitude_amplitude.push_back(rng.uniform(0.01, 0.03));
    cfg.magnitude_phase.push_back(rng.uniform(0.0, two_pi));
    cfg.angle_offset.push_back(i == 0 ? 0.0 : rng.uniform(-20.0, 5.0));
    cfg.angle_amplitude.push_back(rng.uniform(2.0, 6.0));
    cfg.angle_phase.push_back(rng.uniform(0.0, two_pi));
  }
  return cfg;
}

StateSeries generate_synthetic_series(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_buses;
  const double omega = 2.0 * std::numbers::pi / cfg.period;
  Rng noise(mix_seed(cfg.seed, 2));

  StateSeries series;
  series.n_buses = n;
  series.timestamps.reserve(cfg.length);
  series.states.reserve(cfg.length);
  Vector swing(n);
  for (std::size_t t = 0; t < cfg.length; ++t) {
    // Reducing t modulo the period makes zero-noise series repeat bit-for-bit.
    const double phase = omega * std::fmod(static_cast<double>(t), cfg.period);
    StateVector s(Vector(2 * n));
    for (std::size_t i = 0; i < n; ++i) swing[i] = cfg.angle_amplitude[i] * std::sin(phase + cfg.angle_phase[i]);
    for (std::size_t i = 0; i < n; ++i) {
      double vm = cfg.base_magnitude + cfg.magnitude_amplitude[i] * std::sin(phase + cfg.magnitude_phase[i]);
      double va = cfg.angle_offset[i] + swing[i] + cfg.coupling * swing[(i + n - 1) % n];
      // Draws happen even at zero std so the stream layout never depends on it.
      vm += cfg.magnitude_noise * noise.normal();
      va += cfg.angle_noise * noise.normal();
      s.values[i] = vm;
      s.values[n + i] = va;
    }
    series.timestamps.push_back(static_cast<double>(t));
    series.states.push_back(std::move(s));
  }
  return series;
}

}  // namespace gridcast
