#include "gridcast/gridcast.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "gridcast/error.hpp"
#include "gridcast/evaluation.hpp"
#include "gridcast/forecaster.hpp"
#include "gridcast/io.hpp"
#include "gridcast/training.hpp"

struct gc_series {
  gridcast::StateSeries series;
};
struct gc_model {
  gridcast::ForecastModel model;
};
struct gc_train_report {
  gridcast::TrainReport report;
};
struct gc_evaluation {
  gridcast::Evaluation eval;
};
struct gc_multi_run {
  gridcast::MultiRunReport report;
};
struct gc_comparison {
  std::vector<gridcast::ComparisonRow> rows;
};

namespace {

thread_local std::string last_error;
thread_local std::size_t last_epoch = 0;
thread_local std::size_t last_batch = 0;

gc_status status_of(gridcast::ErrorCode code) {
  using gridcast::ErrorCode;
  switch (code) {
    case ErrorCode::invalid_argument: return GC_ERR_INVALID_ARGUMENT;
    case ErrorCode::io: return GC_ERR_IO;
    case ErrorCode::parse: return GC_ERR_PARSE;
    case ErrorCode::shape: return GC_ERR_SHAPE;
    case ErrorCode::format: return GC_ERR_FORMAT;
    case ErrorCode::version: return GC_ERR_VERSION;
    case ErrorCode::truncated: return GC_ERR_TRUNCATED;
    case ErrorCode::divergence: return GC_ERR_DIVERGENCE;
    case ErrorCode::out_of_range: return GC_ERR_OUT_OF_RANGE;
    case ErrorCode::missing_cache: return GC_ERR_MISSING_CACHE;
  }
  return GC_ERR_INTERNAL;
}

template <class F>
gc_status guarded(F&& body) {
  try {
    body();
    return GC_OK;
  } catch (const gridcast::DivergenceError& e) {
    last_error = e.what();
    last_epoch = e.epoch();
    last_batch = e.batch();
    return GC_ERR_DIVERGENCE;
  } catch (const gridcast::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return GC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GC_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return GC_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw gridcast::InvalidArgument(what);
}

gridcast::ModelConfig config_from(std::size_t n_buses, const gc_model_options* o) {
  gc_model_options d;
  gc_model_defaults(&d);
  if (!o) o = &d;
  require(o->architecture == GC_ARCH_HYBRID || o->architecture == GC_ARCH_RNN_ONLY, "unknown architecture");
  auto c = gridcast::ModelConfig::for_buses(n_buses, o->lag,
                                            o->architecture == GC_ARCH_HYBRID ? gridcast::Architecture::hybrid
                                                                              : gridcast::Architecture::rnn_only);
  if (o->conv_filters) c.conv_filters = o->conv_filters;
  if (o->dense1_width) c.dense1_width = o->dense1_width;
  if (o->rnn_layers) c.rnn_layers = o->rnn_layers;
  if (o->rnn_hidden) c.rnn_hidden = o->rnn_hidden;
  c.validate();
  return c;
}

gridcast::Hyperparams hyperparams_from(const gc_train_options& o) {
  gridcast::Hyperparams hp;
  hp.learning_rate = o.learning_rate;
  hp.beta1 = o.beta1;
  hp.beta2 = o.beta2;
  hp.epsilon = o.epsilon;
  hp.batch_size = o.batch_size;
  hp.epochs = o.epochs;
  hp.seed = o.seed;
  switch (o.freeze) {
    case GC_FREEZE_NONE: hp.freeze = gridcast::FreezeBranch::none; break;
    case GC_FREEZE_CNN: hp.freeze = gridcast::FreezeBranch::cnn; break;
    case GC_FREEZE_RNN: hp.freeze = gridcast::FreezeBranch::rnn; break;
    default: throw gridcast::InvalidArgument("unknown freeze branch");
  }
  hp.validate();
  return hp;
}

gc_metrics metrics_to_c(const gridcast::MetricsReport& m) {
  return gc_metrics{m.nrmse,        m.nrmse_magnitude,  m.nrmse_angle,  m.avg_ae_magnitude,
                    m.max_ae_magnitude, m.avg_ae_angle, m.max_ae_angle, m.n_test_windows};
}

gridcast::MetricsReport metrics_from_c(const gc_metrics& m) {
  gridcast::MetricsReport r;
  r.nrmse = m.nrmse;
  r.nrmse_magnitude = m.nrmse_magnitude;
  r.nrmse_angle = m.nrmse_angle;
  r.avg_ae_magnitude = m.avg_ae_magnitude;
  r.max_ae_magnitude = m.max_ae_magnitude;
  r.avg_ae_angle = m.avg_ae_angle;
  r.max_ae_angle = m.max_ae_angle;
  r.n_test_windows = m.n_test_windows;
  return r;
}

void copy_state(const gridcast::Vector& v, double* out, std::size_t capacity) {
  if (capacity < v.size()) {
    throw gridcast::InvalidArgument("output buffer holds " + std::to_string(capacity) + " values, need " +
                                    std::to_string(v.size()));
  }
  std::memcpy(out, v.data(), v.size() * sizeof(double));
}

gridcast::Matrix window_before(const gridcast::StateSeries& s, std::size_t lag, std::size_t index) {
  require(lag >= 1, "lag must be at least 1");
  if (index < lag + 1 || index > s.length() + 1) {
    throw gridcast::OutOfRange("instance " + std::to_string(index) + " outside " + std::to_string(lag + 1) + ".." +
                               std::to_string(s.length() + 1) + " for lag " + std::to_string(lag));
  }
  return gridcast::window_at(s, index - 1 - lag, lag);
}

}  // namespace

extern "C" {

const char* gc_version(void) { return "0.1.0"; }

const char* gc_status_name(gc_status status) {
  switch (status) {
    case GC_OK: return "ok";
    case GC_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case GC_ERR_IO: return "io";
    case GC_ERR_PARSE: return "parse";
    case GC_ERR_SHAPE: return "shape";
    case GC_ERR_FORMAT: return "format";
    case GC_ERR_VERSION: return "version";
    case GC_ERR_TRUNCATED: return "truncated";
    case GC_ERR_DIVERGENCE: return "divergence";
    case GC_ERR_OUT_OF_RANGE: return "out_of_range";
    case GC_ERR_MISSING_CACHE: return "missing_cache";
    case GC_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* gc_last_error(void) { return last_error.c_str(); }

void gc_last_divergence(size_t* epoch, size_t* batch) {
  if (epoch) *epoch = last_epoch;
  if (batch) *batch = last_batch;
}

void gc_string_free(char* s) { delete[] s; }

gc_status gc_write_file_atomic(const char* path, const char* data, size_t size) {
  return guarded([&] {
    require(path && (data || size == 0), "null argument");
    gridcast::io::write_file_atomic(path, std::string_view(data ? data : "", size));
  });
}

// ---- series ---------------------------------------------------------------

void gc_synthetic_defaults(gc_synthetic_options* o) {
  if (!o) return;
  const gridcast::SyntheticConfig d;
  *o = gc_synthetic_options{d.n_buses, d.length, d.period, d.magnitude_noise, d.angle_noise, d.coupling, d.seed};
}

gc_status gc_series_generate(const gc_synthetic_options* o, gc_series** out) {
  return guarded([&] {
    require(o && out, "null argument");
    auto cfg = gridcast::default_synthetic_config(o->n_buses, o->length, o->seed);
    cfg.period = o->period;
    cfg.magnitude_noise = o->magnitude_noise;
    cfg.angle_noise = o->angle_noise;
    cfg.coupling = o->coupling;
    *out = new gc_series{gridcast::generate_synthetic_series(cfg)};
  });
}

gc_status gc_series_load(const char* path, gc_series** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new gc_series{gridcast::load_series(path)};
  });
}

gc_status gc_series_save(const gc_series* s, const char* path) {
  return guarded([&] {
    require(s && path, "null argument");
    gridcast::save_series(s->series, path);
  });
}

size_t gc_series_buses(const gc_series* s) { return s ? s->series.n_buses : 0; }
size_t gc_series_length(const gc_series* s) { return s ? s->series.length() : 0; }

gc_status gc_series_state(const gc_series* s, size_t index, double* out, size_t capacity) {
  return guarded([&] {
    require(s && out, "null argument");
    if (index == 0 || index > s->series.length()) {
      throw gridcast::OutOfRange("state " + std::to_string(index) + " outside 1.." + std::to_string(s->series.length()));
    }
    copy_state(s->series.states[index - 1].values, out, capacity);
  });
}

void gc_series_free(gc_series* s) { delete s; }

// ---- training -------------------------------------------------------------

void gc_model_defaults(gc_model_options* o) {
  if (!o) return;
  *o = gc_model_options{GC_ARCH_HYBRID, 10, 0, 0, 0, 0};
}

void gc_train_defaults(gc_train_options* o) {
  if (!o) return;
  const gridcast::Hyperparams d;
  *o = gc_train_options{d.learning_rate, d.beta1, d.beta2, d.epsilon, d.batch_size, d.epochs, d.seed,
                        GC_FREEZE_NONE, 0.8, 1};
}

gc_status gc_train(const gc_series* s, const gc_model_options* mo, const gc_train_options* to, gc_model** model,
                   gc_train_report** report) {
  return guarded([&] {
    require(s && model, "null argument");
    gc_train_options d;
    gc_train_defaults(&d);
    const gc_train_options& opts = to ? *to : d;
    const auto config = config_from(s->series.n_buses, mo);
    const auto hp = hyperparams_from(opts);
    const auto data = gridcast::prepare_data(s->series, opts.train_fraction, config.lag);
    auto result = gridcast::fit_forecaster(config, data, hp, opts.normalize != 0);
    auto* m = new gc_model{std::move(result.model)};
    if (report) {
      try {
        *report = new gc_train_report{std::move(result.report)};
      } catch (...) {
        delete m;
        throw;
      }
    }
    *model = m;
  });
}

size_t gc_train_report_epochs(const gc_train_report* r) { return r ? r->report.epoch_loss.size() : 0; }

double gc_train_report_epoch_loss(const gc_train_report* r, size_t i) {
  return r && i < r->report.epoch_loss.size() ? r->report.epoch_loss[i] : 0.0;
}

int gc_train_report_test_nrmse(const gc_train_report* r, double* nrmse) {
  if (!r || !r->report.final_test_nrmse) return 0;
  if (nrmse) *nrmse = *r->report.final_test_nrmse;
  return 1;
}

double gc_train_report_wall_clock(const gc_train_report* r) { return r ? r->report.wall_clock_seconds : 0.0; }
size_t gc_train_report_train_samples(const gc_train_report* r) { return r ? r->report.train_samples : 0; }
void gc_train_report_free(gc_train_report* r) { delete r; }

// ---- models ---------------------------------------------------------------

gc_status gc_model_init(size_t n_buses, const gc_model_options* o, uint64_t seed, gc_model** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = new gc_model{gridcast::init_model(config_from(n_buses, o), seed)};
  });
}

gc_status gc_model_load(const char* path, gc_model** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new gc_model{gridcast::load_model(path)};
  });
}

gc_status gc_model_save(const gc_model* m, const char* path) {
  return guarded([&] {
    require(m && path, "null argument");
    gridcast::save_model(m->model, path);
  });
}

gc_status gc_model_get_info(const gc_model* m, gc_model_info* info) {
  return guarded([&] {
    require(m && info, "null argument");
    const auto& c = m->model.config;
    *info = gc_model_info{c.architecture == gridcast::Architecture::hybrid ? GC_ARCH_HYBRID : GC_ARCH_RNN_ONLY,
                          c.n_buses,
                          c.lag,
                          c.conv_filters,
                          c.kernel,
                          c.pool,
                          c.dense1_width,
                          c.rnn_layers,
                          c.rnn_hidden,
                          gridcast::param_count(c),
                          gridcast::kModelFormatVersion};
  });
}

void gc_model_free(gc_model* m) { delete m; }

gc_status gc_forecast_at(const gc_model* m, const gc_series* s, size_t index, double* out, size_t capacity) {
  return guarded([&] {
    require(m && s && out, "null argument");
    if (m->model.config.n_buses != s->series.n_buses) {
      throw gridcast::ShapeError("model expects " + std::to_string(m->model.config.n_buses) + " buses, data has " +
                                 std::to_string(s->series.n_buses));
    }
    const auto window = window_before(s->series, m->model.config.lag, index);
    copy_state(gridcast::forecast_next(m->model, window).values, out, capacity);
  });
}

gc_status gc_persistence_at(const gc_series* s, size_t lag, size_t index, double* out, size_t capacity) {
  return guarded([&] {
    require(s && out, "null argument");
    copy_state(gridcast::persistence_baseline(window_before(s->series, lag, index)).values, out, capacity);
  });
}

// ---- evaluation -----------------------------------------------------------

gc_status gc_evaluate(const gc_model* m, const gc_series* s, double train_fraction, gc_evaluation** out) {
  return guarded([&] {
    require(m && s && out, "null argument");
    if (m->model.config.n_buses != s->series.n_buses) {
      throw gridcast::ShapeError("model expects " + std::to_string(m->model.config.n_buses) + " buses, data has " +
                                 std::to_string(s->series.n_buses));
    }
    const auto data = gridcast::prepare_data(s->series, train_fraction, m->model.config.lag);
    *out = new gc_evaluation{gridcast::evaluate(m->model, data.test_windows)};
  });
}

gc_status gc_evaluate_persistence(const gc_series* s, size_t lag, double train_fraction, gc_evaluation** out) {
  return guarded([&] {
    require(s && out, "null argument");
    const auto data = gridcast::prepare_data(s->series, train_fraction, lag);
    *out = new gc_evaluation{gridcast::evaluate_persistence(data.test_windows)};
  });
}

gc_status gc_evaluation_metrics(const gc_evaluation* e, gc_metrics* metrics) {
  return guarded([&] {
    require(e && metrics, "null argument");
    *metrics = metrics_to_c(e->eval.metrics);
  });
}

gc_status gc_evaluation_write_trace(const gc_evaluation* e, const char* path) {
  return guarded([&] {
    require(e && path, "null argument");
    gridcast::io::write_file_atomic(path, gridcast::format_trace_csv(e->eval.trace));
  });
}

gc_status gc_evaluation_write_instance_slice(const gc_evaluation* e, size_t instance, const char* path) {
  return guarded([&] {
    require(e && path, "null argument");
    gridcast::io::write_file_atomic(path, gridcast::format_instance_slice(e->eval, instance));
  });
}

gc_status gc_evaluation_write_bus_slice(const gc_evaluation* e, size_t bus, size_t first, size_t last,
                                        const char* path) {
  return guarded([&] {
    require(e && path, "null argument");
    gridcast::io::write_file_atomic(path, gridcast::format_bus_slice(e->eval, bus, first, last));
  });
}

void gc_evaluation_free(gc_evaluation* e) { delete e; }

gc_status gc_multi_run_train(const gc_series* s, const gc_model_options* mo, const gc_train_options* to, size_t runs,
                             size_t threads, gc_multi_run** out) {
  return guarded([&] {
    require(s && out, "null argument");
    gc_train_options d;
    gc_train_defaults(&d);
    const gc_train_options& opts = to ? *to : d;
    const auto config = config_from(s->series.n_buses, mo);
    const auto hp = hyperparams_from(opts);
    const auto data = gridcast::prepare_data(s->series, opts.train_fraction, config.lag);
    *out = new gc_multi_run{gridcast::multi_run(config, data, hp, runs, threads)};
  });
}

size_t gc_multi_run_count(const gc_multi_run* mr) { return mr ? mr->report.runs.size() : 0; }

gc_status gc_multi_run_aggregate(const gc_multi_run* mr, gc_aggregate* a) {
  return guarded([&] {
    require(mr && a, "null argument");
    const auto& s = mr->report.nrmse;
    *a = gc_aggregate{s.runs, s.excluded, s.mean, s.stddev, s.min, s.max};
  });
}

gc_status gc_multi_run_mean_metrics(const gc_multi_run* mr, gc_metrics* metrics) {
  return guarded([&] {
    require(mr && metrics, "null argument");
    *metrics = metrics_to_c(mr->report.mean_metrics);
  });
}

gc_status gc_multi_run_result(const gc_multi_run* mr, size_t index, uint64_t* seed, int* diverged,
                              gc_metrics* metrics) {
  return guarded([&] {
    require(mr != nullptr, "null argument");
    if (index >= mr->report.runs.size()) throw gridcast::OutOfRange("run index out of range");
    const auto& r = mr->report.runs[index];
    if (seed) *seed = r.seed;
    if (diverged) *diverged = r.diverged ? 1 : 0;
    if (metrics) *metrics = metrics_to_c(r.metrics);
  });
}

void gc_multi_run_free(gc_multi_run* mr) { delete mr; }

gc_status gc_comparison_create(gc_comparison** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = new gc_comparison{};
  });
}

gc_status gc_comparison_add(gc_comparison* cmp, const char* method, const gc_metrics* metrics,
                            const gc_aggregate* aggregate) {
  return guarded([&] {
    require(cmp && method && metrics, "null argument");
    gridcast::ComparisonRow row{method, metrics_from_c(*metrics), std::nullopt};
    if (aggregate) {
      row.aggregate = gridcast::AggregateStats{aggregate->runs, aggregate->excluded, aggregate->mean,
                                               aggregate->stddev, aggregate->min,  aggregate->max};
    }
    cmp->rows.push_back(std::move(row));
  });
}

gc_status gc_comparison_render(const gc_comparison* cmp, const char* title, char** text) {
  return guarded([&] {
    require(cmp && text, "null argument");
    const auto s = gridcast::format_comparison_table(cmp->rows, title ? title : "");
    char* buf = new char[s.size() + 1];
    std::memcpy(buf, s.c_str(), s.size() + 1);
    *text = buf;
  });
}

void gc_comparison_free(gc_comparison* cmp) { delete cmp; }

}  // extern "C"
