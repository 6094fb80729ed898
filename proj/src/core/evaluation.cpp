#include "gridcast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gridcast/error.hpp"
#include "gridcast/io.hpp"

namespace gridcast {

namespace {

void check_pairs(std::span<const StateVector> preds, std::span<const StateVector> truths) {
  if (preds.empty()) throw InvalidArgument("no predictions to score");
  if (preds.size() != truths.size()) {
    throw ShapeError(std::to_string(preds.size()) + " predictions for " + std::to_string(truths.size()) + " truths");
  }
  const std::size_t width = truths.front().values.size();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].values.size() != width || truths[i].values.size() != width) {
      throw ShapeError("state width differs at instance " + std::to_string(i + 1));
    }
  }
  if (width == 0 || width % 2 != 0) throw ShapeError("state vectors must hold 2n values");
}

}  // namespace

double normalized_rmse(std::span<const StateVector> preds, std::span<const StateVector> truths, Quantity quantity) {
  check_pairs(preds, truths);
  const std::size_t n = truths.front().n_buses();
  const std::size_t begin = quantity == Quantity::angle ? n : 0;
  const std::size_t end = quantity == Quantity::magnitude ? n : 2 * n;
  double err = 0.0;
  double ref = 0.0;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    for (std::size_t i = begin; i < end; ++i) {
      const double d = preds[t].values[i] - truths[t].values[i];
      err += d * d;
      ref += truths[t].values[i] * truths[t].values[i];
    }
  }
  if (ref == 0.0) return err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(err) / std::sqrt(ref);
}

MetricsReport ae_stats(std::span<const StateVector> preds, std::span<const StateVector> truths, std::size_t n_buses) {
  check_pairs(preds, truths);
  if (truths.front().n_buses() != n_buses) {
    throw ShapeError("states hold " + std::to_string(truths.front().n_buses()) + " buses, expected " +
                     std::to_string(n_buses));
  }
  MetricsReport r;
  r.n_test_windows = preds.size();
  r.nrmse = normalized_rmse(preds, truths, Quantity::all);
  r.nrmse_magnitude = normalized_rmse(preds, truths, Quantity::magnitude);
  r.nrmse_angle = normalized_rmse(preds, truths, Quantity::angle);
  double sum_m = 0.0;
  double sum_a = 0.0;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    for (std::size_t b = 0; b < n_buses; ++b) {
      const double em = std::abs(preds[t].values[b] - truths[t].values[b]);
      const double ea = std::abs(preds[t].values[n_buses + b] - truths[t].values[n_buses + b]);
      sum_m += em;
      sum_a += ea;
      r.max_ae_magnitude = std::max(r.max_ae_magnitude, em);
      r.max_ae_angle = std::max(r.max_ae_angle, ea);
    }
  }
  const double cells = static_cast<double>(preds.size() * n_buses);
  r.avg_ae_magnitude = sum_m / cells;
  r.avg_ae_angle = sum_a / cells;
  return r;
}

ErrorTrace error_trace(std::span<const StateVector> preds, std::span<const StateVector> truths) {
  check_pairs(preds, truths);
  const std::size_t n = truths.front().n_buses();
  ErrorTrace trace{Matrix(preds.size(), n), Matrix(preds.size(), n)};
  for (std::size_t t = 0; t < preds.size(); ++t) {
    for (std::size_t b = 0; b < n; ++b) {
      trace.ae_magnitude(t, b) = std::abs(preds[t].values[b] - truths[t].values[b]);
      trace.ae_angle(t, b) = std::abs(preds[t].values[n + b] - truths[t].values[n + b]);
    }
  }
  return trace;
}

StateVector persistence_baseline(const Matrix& window) {
  if (window.cols() == 0) throw ShapeError("empty window");
  return StateVector(window.column(window.cols() - 1));
}

Evaluation score(std::vector<StateVector> predictions, std::vector<StateVector> truths) {
  Evaluation e;
  e.metrics = ae_stats(predictions, truths, truths.empty() ? 0 : truths.front().n_buses());
  e.trace = error_trace(predictions, truths);
  e.predictions = std::move(predictions);
  e.truths = std::move(truths);
  return e;
}

Evaluation evaluate(const ForecastModel& model, std::span<const Sample> test) {
  if (test.empty()) throw InvalidArgument("no test windows");
  std::vector<StateVector> preds;
  std::vector<StateVector> truths;
  preds.reserve(test.size());
  truths.reserve(test.size());
  for (const auto& s : test) {
    preds.push_back(forecast_next(model, s.window));
    truths.push_back(s.target);
  }
  return score(std::move(preds), std::move(truths));
}

Evaluation evaluate_persistence(std::span<const Sample> test) {
  if (test.empty()) throw InvalidArgument("no test windows");
  std::vector<StateVector> preds;
  std::vector<StateVector> truths;
  for (const auto& s : test) {
    preds.push_back(persistence_baseline(s.window));
    truths.push_back(s.target);
  }
  return score(std::move(preds), std::move(truths));
}

// ---------------------------------------------------------------------------

std::string format_trace_csv(const ErrorTrace& trace) {
  std::string out = "instance,bus,ae_vm,ae_va\n";
  for (std::size_t t = 0; t < trace.instances(); ++t) {
    for (std::size_t b = 0; b < trace.buses(); ++b) {
      out += std::to_string(t + 1) + "," + std::to_string(b + 1) + "," + io::format_decimal(trace.ae_magnitude(t, b)) +
             "," + io::format_decimal(trace.ae_angle(t, b)) + "\n";
    }
  }
  return out;
}

namespace {

std::string slice_row(const Evaluation& e, std::size_t t, std::size_t b) {
  const std::size_t n = e.trace.buses();
  return io::format_decimal(e.predictions[t].values[b]) + "," + io::format_decimal(e.truths[t].values[b]) + "," +
         io::format_decimal(e.trace.ae_magnitude(t, b)) + "," + io::format_decimal(e.predictions[t].values[n + b]) + "," +
         io::format_decimal(e.truths[t].values[n + b]) + "," + io::format_decimal(e.trace.ae_angle(t, b));
}

}  // namespace

std::string format_instance_slice(const Evaluation& eval, std::size_t instance) {
  if (instance == 0 || instance > eval.trace.instances()) {
    throw OutOfRange("instance " + std::to_string(instance) + " outside 1.." + std::to_string(eval.trace.instances()));
  }
  std::string out = "bus,vm_pred,vm_true,ae_vm,va_pred,va_true,ae_va\n";
  for (std::size_t b = 0; b < eval.trace.buses(); ++b) {
    out += std::to_string(b + 1) + "," + slice_row(eval, instance - 1, b) + "\n";
  }
  return out;
}

std::string format_bus_slice(const Evaluation& eval, std::size_t bus, std::size_t first, std::size_t last) {
  if (bus == 0 || bus > eval.trace.buses()) {
    throw OutOfRange("bus " + std::to_string(bus) + " outside 1.." + std::to_string(eval.trace.buses()));
  }
  if (first == 0 || first > last || last > eval.trace.instances()) {
    throw OutOfRange("instance range " + std::to_string(first) + ".." + std::to_string(last) + " outside 1.." +
                     std::to_string(eval.trace.instances()));
  }
  std::string out = "instance,vm_pred,vm_true,ae_vm,va_pred,va_true,ae_va\n";
  for (std::size_t t = first; t <= last; ++t) out += std::to_string(t) + "," + slice_row(eval, t - 1, bus - 1) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

AggregateStats aggregate(std::span<const double> values, std::size_t excluded) {
  AggregateStats a;
  a.runs = values.size();
  a.excluded = excluded;
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(var / static_cast<double>(values.size()));
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  a.min = *lo;
  a.max = *hi;
  // Rounding in the mean can land a hair outside [min, max] for near-equal values.
  a.mean = std::clamp(a.mean, a.min, a.max);
  return a;
}

MetricsReport mean_metrics(std::span<const MetricsReport> reports) {
  MetricsReport m;
  if (reports.empty()) return m;
  const double count = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    m.nrmse += r.nrmse;
    m.nrmse_magnitude += r.nrmse_magnitude;
    m.nrmse_angle += r.nrmse_angle;
    m.avg_ae_magnitude += r.avg_ae_magnitude;
    m.max_ae_magnitude += r.max_ae_magnitude;
    m.avg_ae_angle += r.avg_ae_angle;
    m.max_ae_angle += r.max_ae_angle;
  }
  m.nrmse /= count;
  m.nrmse_magnitude /= count;
  m.nrmse_angle /= count;
  m.avg_ae_magnitude /= count;
  m.max_ae_magnitude /= count;
  m.avg_ae_angle /= count;
  m.max_ae_angle /= count;
  m.n_test_windows = reports.front().n_test_windows;
  return m;
}

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string format_comparison_table(std::span<const ComparisonRow> rows, const std::string& title) {
  std::size_t method_width = 8;
  for (const auto& r : rows) method_width = std::max(method_width, r.method.size() + 2);

  std::string out;
  if (!title.empty()) out += title + "\n";
  out += "ABSOLUTE ERROR OF VOLTAGE FORECASTING";
  if (!rows.empty()) out += " (test windows: " + std::to_string(rows.front().metrics.n_test_windows) + ")";
  out += "\n";
  out += pad("", method_width) + pad("| Voltage magnitude (p.u.)", 26) + pad("| Voltage angle (degree)", 26) +
         "| Normalized RMSE\n";
  out += pad("Method", method_width) + pad("| Average", 13) + pad("Max", 13) + pad("| Average", 13) + pad("Max", 13) +
         pad("| joint", 13) + pad("magnitude", 13) + "angle\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out += pad(r.method, method_width) + pad("| " + sci(m.avg_ae_magnitude), 13) + pad(sci(m.max_ae_magnitude), 13) +
           pad("| " + sci(m.avg_ae_angle), 13) + pad(sci(m.max_ae_angle), 13) + pad("| " + sci(m.nrmse), 13) +
           pad(sci(m.nrmse_magnitude), 13) + sci(m.nrmse_angle) + "\n";
  }

  const bool any_multi = std::any_of(rows.begin(), rows.end(), [](const ComparisonRow& r) {
    return r.aggregate && (r.aggregate->runs > 1 || r.aggregate->excluded > 0);
  });
  out += "\n";
  out += "nRMSE = sqrt(sum |pred - true|^2) / sqrt(sum |true|^2) over all test windows, physical units;\n";
  out += "inputs and training targets are z-score normalized with training-partition statistics.\n";
  if (any_multi) out += "Rows with more than one run show means over the included runs.\n";

  bool header_done = false;
  for (const auto& r : rows) {
    if (!r.aggregate) continue;
    if (!header_done) {
      out += "\nNRMSE OVER INDEPENDENT RUNS\n";
      out += pad("Method", method_width) + pad("runs", 7) + pad("excluded", 10) + pad("mean", 13) + pad("std", 13) +
             pad("min", 13) + "max\n";
      header_done = true;
    }
    const auto& a = *r.aggregate;
    out += pad(r.method, method_width) + pad(std::to_string(a.runs), 7) + pad(std::to_string(a.excluded), 10) +
           pad(sci(a.mean), 13) + pad(sci(a.stddev), 13) + pad(sci(a.min), 13) + sci(a.max) + "\n";
  }
  return out;
}

}  // namespace gridcast
