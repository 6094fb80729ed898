#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcast/data.hpp"
#include "gridcast/forecaster.hpp"

namespace gridcast {

/// Error statistics in physical units (p.u. for magnitudes, degrees for angles).
///
/// nRMSE = sqrt(sum_t |pred_t - true_t|^2) / sqrt(sum_t |true_t|^2), summed over
/// every component and every test window. The per-quantity variants restrict
/// both sums to the magnitude or angle half.
struct MetricsReport {
  double nrmse = 0.0;
  double nrmse_magnitude = 0.0;
  double nrmse_angle = 0.0;
  double avg_ae_magnitude = 0.0;
  double max_ae_magnitude = 0.0;
  double avg_ae_angle = 0.0;
  double max_ae_angle = 0.0;
  std::size_t n_test_windows = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Absolute errors, one row per test window, one column per bus.
struct ErrorTrace {
  Matrix ae_magnitude;
  Matrix ae_angle;

  std::size_t instances() const noexcept { return ae_magnitude.rows(); }
  std::size_t buses() const noexcept { return ae_magnitude.cols(); }
};

enum class Quantity { all, magnitude, angle };

double normalized_rmse(std::span<const StateVector> preds, std::span<const StateVector> truths,
                       Quantity quantity = Quantity::all);

/// Averages accumulate instance-major then bus, the same order the trace CSV is written in.
MetricsReport ae_stats(std::span<const StateVector> preds, std::span<const StateVector> truths, std::size_t n_buses);

ErrorTrace error_trace(std::span<const StateVector> preds, std::span<const StateVector> truths);

StateVector persistence_baseline(const Matrix& window);

struct Evaluation {
  MetricsReport metrics;
  ErrorTrace trace;
  std::vector<StateVector> predictions;
  std::vector<StateVector> truths;
};

/// Forecasts every (raw) test sample and scores it.
Evaluation evaluate(const ForecastModel& model, std::span<const Sample> test);
Evaluation evaluate_persistence(std::span<const Sample> test);
Evaluation score(std::vector<StateVector> predictions, std::vector<StateVector> truths);

// ---------------------------------------------------------------------------
// Exports. Instances and buses are numbered from 1; instance 1 is the first
// test window, i.e. the (r+1)-th state of the test partition.

/// `instance,bus,ae_vm,ae_va`
std::string format_trace_csv(const ErrorTrace& trace);

/// Every bus at one instance: `bus,vm_pred,vm_true,ae_vm,va_pred,va_true,ae_va`
std::string format_instance_slice(const Evaluation& eval, std::size_t instance);

/// One bus over instances [first, last]: `instance,vm_pred,vm_true,ae_vm,va_pred,va_true,ae_va`
std::string format_bus_slice(const Evaluation& eval, std::size_t bus, std::size_t first, std::size_t last);

// ---------------------------------------------------------------------------
// Aggregates and comparison tables

/// Population statistics of test nRMSE over the runs that did not diverge.
struct AggregateStats {
  std::size_t runs = 0;
  std::size_t excluded = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

AggregateStats aggregate(std::span<const double> values, std::size_t excluded = 0);

struct ComparisonRow {
  std::string method;
  MetricsReport metrics;  // mean over included runs when aggregate->runs > 1
  std::optional<AggregateStats> aggregate;
};

/// Text table laid out as absolute error (avg/max) x (magnitude/angle) plus nRMSE columns.
std::string format_comparison_table(std::span<const ComparisonRow> rows, const std::string& title = {});

MetricsReport mean_metrics(std::span<const MetricsReport> reports);

}  // namespace gridcast
