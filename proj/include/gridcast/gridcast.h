#ifndef GRIDCAST_GRIDCAST_H
#define GRIDCAST_GRIDCAST_H

/* C interface to the gridcast forecaster.
 *
 * Every fallible call returns a gc_status. On failure the calling thread's
 * last-error message is set and output handles are left untouched. Handles
 * are opaque and owned by the caller; release them with the matching
 * *_free function (NULL is accepted). Strings returned through char** are
 * released with gc_string_free. Instances and buses are numbered from 1.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(GRIDCAST_BUILDING_LIBRARY)
#    define GRIDCAST_API __declspec(dllexport)
#  else
#    define GRIDCAST_API __declspec(dllimport)
#  endif
#else
#  define GRIDCAST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gc_status {
  GC_OK = 0,
  GC_ERR_INVALID_ARGUMENT = 1,
  GC_ERR_IO = 2,
  GC_ERR_PARSE = 3,
  GC_ERR_SHAPE = 4,
  GC_ERR_FORMAT = 5,
  GC_ERR_VERSION = 6,
  GC_ERR_TRUNCATED = 7,
  GC_ERR_DIVERGENCE = 8,
  GC_ERR_OUT_OF_RANGE = 9,
  GC_ERR_MISSING_CACHE = 10,
  GC_ERR_INTERNAL = 11
} gc_status;

typedef enum gc_architecture { GC_ARCH_HYBRID = 0, GC_ARCH_RNN_ONLY = 1 } gc_architecture;
typedef enum gc_freeze { GC_FREEZE_NONE = 0, GC_FREEZE_CNN = 1, GC_FREEZE_RNN = 2 } gc_freeze;

typedef struct gc_series gc_series;
typedef struct gc_model gc_model;
typedef struct gc_train_report gc_train_report;
typedef struct gc_evaluation gc_evaluation;
typedef struct gc_multi_run gc_multi_run;
typedef struct gc_comparison gc_comparison;

GRIDCAST_API const char* gc_version(void);
GRIDCAST_API const char* gc_status_name(gc_status status);
/* Message of the last failed call on this thread; "" if none. */
GRIDCAST_API const char* gc_last_error(void);
/* Epoch and batch (1-based) of the last divergence on this thread; 0 if none. */
GRIDCAST_API void gc_last_divergence(size_t* epoch, size_t* batch);
GRIDCAST_API void gc_string_free(char* s);

/* Writes via a temporary file and rename. */
GRIDCAST_API gc_status gc_write_file_atomic(const char* path, const char* data, size_t size);

/* ---- series ------------------------------------------------------------ */

typedef struct gc_synthetic_options {
  size_t n_buses;
  size_t length;
  double period;
  double magnitude_noise; /* p.u. */
  double angle_noise;     /* degrees */
  double coupling;
  uint64_t seed;
} gc_synthetic_options;

GRIDCAST_API void gc_synthetic_defaults(gc_synthetic_options* options);
GRIDCAST_API gc_status gc_series_generate(const gc_synthetic_options* options, gc_series** out);
GRIDCAST_API gc_status gc_series_load(const char* path, gc_series** out);
GRIDCAST_API gc_status gc_series_save(const gc_series* series, const char* path);
GRIDCAST_API size_t gc_series_buses(const gc_series* series);
GRIDCAST_API size_t gc_series_length(const gc_series* series);
/* Copies the 2n values of state `index` (1-based) into out[0..capacity). */
GRIDCAST_API gc_status gc_series_state(const gc_series* series, size_t index, double* out, size_t capacity);
GRIDCAST_API void gc_series_free(gc_series* series);

/* ---- training ---------------------------------------------------------- */

/* Zero widths select the defaults for the bus count (n filters, 2n wide). */
typedef struct gc_model_options {
  gc_architecture architecture;
  size_t lag;
  size_t conv_filters;
  size_t dense1_width;
  size_t rnn_layers;
  size_t rnn_hidden;
} gc_model_options;

typedef struct gc_train_options {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  size_t batch_size;
  size_t epochs;
  uint64_t seed;
  gc_freeze freeze;
  double train_fraction;
  int normalize; /* nonzero: z-score with training-partition statistics */
} gc_train_options;

GRIDCAST_API void gc_model_defaults(gc_model_options* options);
GRIDCAST_API void gc_train_defaults(gc_train_options* options);

/* Split, normalize, window and train. `report` may be NULL. */
GRIDCAST_API gc_status gc_train(const gc_series* series, const gc_model_options* model_options,
                                const gc_train_options* train_options, gc_model** model, gc_train_report** report);

GRIDCAST_API size_t gc_train_report_epochs(const gc_train_report* report);
GRIDCAST_API double gc_train_report_epoch_loss(const gc_train_report* report, size_t epoch_index);
/* Returns 0 when no test windows were scored. */
GRIDCAST_API int gc_train_report_test_nrmse(const gc_train_report* report, double* nrmse);
GRIDCAST_API double gc_train_report_wall_clock(const gc_train_report* report);
GRIDCAST_API size_t gc_train_report_train_samples(const gc_train_report* report);
GRIDCAST_API void gc_train_report_free(gc_train_report* report);

/* ---- models ------------------------------------------------------------ */

typedef struct gc_model_info {
  gc_architecture architecture;
  size_t n_buses;
  size_t lag;
  size_t conv_filters;
  size_t kernel;
  size_t pool;
  size_t dense1_width;
  size_t rnn_layers;
  size_t rnn_hidden;
  size_t param_count;
  int format_version;
} gc_model_info;

GRIDCAST_API gc_status gc_model_init(size_t n_buses, const gc_model_options* options, uint64_t seed, gc_model** out);
GRIDCAST_API gc_status gc_model_load(const char* path, gc_model** out);
GRIDCAST_API gc_status gc_model_save(const gc_model* model, const char* path);
GRIDCAST_API gc_status gc_model_get_info(const gc_model* model, gc_model_info* info);
GRIDCAST_API void gc_model_free(gc_model* model);

/* Forecast of state `index` (1-based, series coordinates) from the lag states
 * before it. Legal indices run from lag+1 to length+1. Writes 2n values. */
GRIDCAST_API gc_status gc_forecast_at(const gc_model* model, const gc_series* series, size_t index, double* out,
                                      size_t capacity);
/* Same contract with the last observed state as the forecast. */
GRIDCAST_API gc_status gc_persistence_at(const gc_series* series, size_t lag, size_t index, double* out,
                                         size_t capacity);

/* ---- evaluation -------------------------------------------------------- */

typedef struct gc_metrics {
  double nrmse;
  double nrmse_magnitude;
  double nrmse_angle;
  double avg_ae_magnitude;
  double max_ae_magnitude;
  double avg_ae_angle;
  double max_ae_angle;
  size_t n_test_windows;
} gc_metrics;

typedef struct gc_aggregate {
  size_t runs;
  size_t excluded;
  double mean;
  double stddev;
  double min;
  double max;
} gc_aggregate;

/* Scores the model on the test partition of `series`. */
GRIDCAST_API gc_status gc_evaluate(const gc_model* model, const gc_series* series, double train_fraction,
                                   gc_evaluation** out);
GRIDCAST_API gc_status gc_evaluate_persistence(const gc_series* series, size_t lag, double train_fraction,
                                               gc_evaluation** out);
GRIDCAST_API gc_status gc_evaluation_metrics(const gc_evaluation* eval, gc_metrics* metrics);
GRIDCAST_API gc_status gc_evaluation_write_trace(const gc_evaluation* eval, const char* path);
GRIDCAST_API gc_status gc_evaluation_write_instance_slice(const gc_evaluation* eval, size_t instance,
                                                          const char* path);
GRIDCAST_API gc_status gc_evaluation_write_bus_slice(const gc_evaluation* eval, size_t bus, size_t first,
                                                     size_t last, const char* path);
GRIDCAST_API void gc_evaluation_free(gc_evaluation* eval);

/* Trains `runs` models with seeds seed..seed+runs-1 and scores each on the
 * test partition. Diverged runs are excluded from the aggregate. */
GRIDCAST_API gc_status gc_multi_run_train(const gc_series* series, const gc_model_options* model_options,
                                          const gc_train_options* train_options, size_t runs, size_t threads,
                                          gc_multi_run** out);
GRIDCAST_API size_t gc_multi_run_count(const gc_multi_run* mr);
GRIDCAST_API gc_status gc_multi_run_aggregate(const gc_multi_run* mr, gc_aggregate* aggregate);
GRIDCAST_API gc_status gc_multi_run_mean_metrics(const gc_multi_run* mr, gc_metrics* metrics);
/* Per-run result; `diverged` is set to 1 for excluded runs. */
GRIDCAST_API gc_status gc_multi_run_result(const gc_multi_run* mr, size_t index, uint64_t* seed, int* diverged,
                                           gc_metrics* metrics);
GRIDCAST_API void gc_multi_run_free(gc_multi_run* mr);

GRIDCAST_API gc_status gc_comparison_create(gc_comparison** out);
/* `aggregate` may be NULL for single-run rows. */
GRIDCAST_API gc_status gc_comparison_add(gc_comparison* cmp, const char* method, const gc_metrics* metrics,
                                         const gc_aggregate* aggregate);
GRIDCAST_API gc_status gc_comparison_render(const gc_comparison* cmp, const char* title, char** text);
GRIDCAST_API void gc_comparison_free(gc_comparison* cmp);

#ifdef __cplusplus
}
#endif

#endif
