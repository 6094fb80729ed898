// gridcast command-line driver. Talks to the library only through gridcast.h.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "gridcast/gridcast.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;

constexpr int kReportSchema = 1;
constexpr int kSeriesFormat = 1;

struct Failure {
  int exit_code;
  std::string message;
};

[[noreturn]] void usage_error(const std::string& message) { throw Failure{kExitUsage, message}; }

void check(gc_status st, const std::string& context) {
  if (st == GC_OK) return;
  std::string msg = context + ": " + gc_last_error();
  if (st == GC_ERR_DIVERGENCE) {
    std::size_t epoch = 0, batch = 0;
    gc_last_divergence(&epoch, &batch);
    msg += " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ")";
    throw Failure{kExitDivergence, msg};
  }
  throw Failure{kExitData, msg};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using SeriesPtr = std::unique_ptr<gc_series, Deleter<gc_series, gc_series_free>>;
using ModelPtr = std::unique_ptr<gc_model, Deleter<gc_model, gc_model_free>>;
using ReportPtr = std::unique_ptr<gc_train_report, Deleter<gc_train_report, gc_train_report_free>>;
using EvalPtr = std::unique_ptr<gc_evaluation, Deleter<gc_evaluation, gc_evaluation_free>>;
using MultiPtr = std::unique_ptr<gc_multi_run, Deleter<gc_multi_run, gc_multi_run_free>>;
using ComparisonPtr = std::unique_ptr<gc_comparison, Deleter<gc_comparison, gc_comparison_free>>;

void write_text(const std::string& path, const std::string& text) {
  check(gc_write_file_atomic(path.c_str(), text.data(), text.size()), "writing " + path);
}

SeriesPtr load_series(const std::string& path) {
  gc_series* s = nullptr;
  check(gc_series_load(path.c_str(), &s), "reading " + path);
  return SeriesPtr(s);
}

ModelPtr load_model(const std::string& path) {
  gc_model* m = nullptr;
  check(gc_model_load(path.c_str(), &m), "reading " + path);
  return ModelPtr(m);
}

const char* arch_name(gc_architecture a) { return a == GC_ARCH_HYBRID ? "hybrid" : "rnn-only"; }

ordered_json metrics_json(const gc_metrics& m) {
  return ordered_json{{"nrmse", m.nrmse},
                      {"nrmse_magnitude", m.nrmse_magnitude},
                      {"nrmse_angle", m.nrmse_angle},
                      {"avg_ae_magnitude", m.avg_ae_magnitude},
                      {"max_ae_magnitude", m.max_ae_magnitude},
                      {"avg_ae_angle", m.avg_ae_angle},
                      {"max_ae_angle", m.max_ae_angle},
                      {"n_test_windows", m.n_test_windows}};
}

ordered_json aggregate_json(const gc_aggregate& a) {
  return ordered_json{{"runs", a.runs},     {"excluded", a.excluded}, {"mean", a.mean},
                      {"stddev", a.stddev}, {"min", a.min},           {"max", a.max}};
}

std::string canonical(const std::string& p) {
  std::error_code ec;
  auto c = fs::weakly_canonical(p, ec);
  return ec ? p : c.string();
}

/// Rejects outputs that would overwrite one of the inputs.
void guard_inputs(const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  for (const auto& out : outputs) {
    if (out.empty()) continue;
    for (const auto& in : inputs) {
      if (canonical(in) == canonical(out)) usage_error("output " + out + " would overwrite input " + in);
    }
  }
}

/// One manifest per run, written next to the primary output.
class Manifest {
 public:
  Manifest(std::string command, const CLI::App& sub) : started_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["library_version"] = gc_version();
    ordered_json flags = ordered_json::object();
    for (const CLI::Option* opt : sub.get_options()) {
      if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
      const auto& results = opt->results();
      std::string name = opt->get_name();
      while (!name.empty() && name.front() == '-') name.erase(name.begin());
      if (opt->get_expected_max() == 0) {
        flags[name] = opt->count() > 0;
      } else if (opt->get_items_expected_max() > 1) {
        flags[name] = results;
      } else {
        flags[name] = results.empty() ? opt->get_default_str() : results.back();
      }
    }
    doc_["flags"] = std::move(flags);
    doc_["inputs"] = ordered_json::array();
    doc_["outputs"] = ordered_json::array();
    doc_["seeds"] = ordered_json::array();
    doc_["formats"] = ordered_json{{"series_csv", kSeriesFormat}, {"report_schema", kReportSchema}};
  }

  void input(const std::string& path) { doc_["inputs"].push_back(path); }
  void output(const std::string& path) {
    if (!path.empty()) doc_["outputs"].push_back(path);
  }
  void seed(std::uint64_t s) { doc_["seeds"].push_back(s); }
  void format(const std::string& key, int version) { doc_["formats"][key] = version; }
  void note(const std::string& key, ordered_json value) { doc_[key] = std::move(value); }

  /// Writes `<primary>.manifest.json`, or prints to stderr when there is no file output.
  void finish(const std::string& primary) {
    doc_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    const std::string text = doc_.dump(2) + "\n";
    if (primary.empty()) {
      std::cerr << text;
    } else {
      write_text(primary + ".manifest.json", text);
    }
  }

 private:
  ordered_json doc_;
  std::chrono::steady_clock::time_point started_;
};

// ---------------------------------------------------------------------------

struct GenDataArgs {
  gc_synthetic_options opts{};
  std::string out;
};

int run_gen_data(const GenDataArgs& a, const CLI::App& sub) {
  if (a.opts.n_buses == 0) usage_error("--buses must be at least 1");
  if (a.opts.length < 11) usage_error("--length must be at least 11 (lag 10 plus one target)");
  if (!(a.opts.period >= 2.0)) usage_error("--period must be at least 2");
  if (a.opts.magnitude_noise < 0.0 || a.opts.angle_noise < 0.0) usage_error("noise levels must be non-negative");

  Manifest manifest("gen-data", sub);
  gc_series* raw = nullptr;
  check(gc_series_generate(&a.opts, &raw), "generating series");
  SeriesPtr series(raw);
  check(gc_series_save(series.get(), a.out.c_str()), "writing " + a.out);
  manifest.seed(a.opts.seed);
  manifest.output(a.out);
  manifest.finish(a.out);
  std::cout << "wrote " << gc_series_length(series.get()) << " states of " << gc_series_buses(series.get())
            << " buses to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ModelArgs {
  std::size_t lag = 10;
  std::string baseline = "hybrid";
  std::size_t filters = 0;
  std::size_t dense1 = 0;
  std::size_t layers = 0;
  std::size_t hidden = 0;

  gc_model_options options() const {
    gc_model_options o;
    gc_model_defaults(&o);
    o.architecture = baseline == "rnn-only" ? GC_ARCH_RNN_ONLY : GC_ARCH_HYBRID;
    o.lag = lag;
    o.conv_filters = filters;
    o.dense1_width = dense1;
    o.rnn_layers = layers;
    o.rnn_hidden = hidden;
    return o;
  }
};

struct TrainArgs {
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  std::string freeze = "none";
  double train_fraction = 0.8;

  gc_train_options options() const {
    gc_train_options o;
    gc_train_defaults(&o);
    o.learning_rate = lr;
    o.batch_size = batch;
    o.epochs = epochs;
    o.seed = seed;
    o.freeze = freeze == "cnn" ? GC_FREEZE_CNN : freeze == "rnn" ? GC_FREEZE_RNN : GC_FREEZE_NONE;
    o.train_fraction = train_fraction;
    return o;
  }

  void validate() const {
    if (!(lr > 0.0)) usage_error("--lr must be positive");
    if (batch == 0) usage_error("--batch must be at least 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) usage_error("--train-fraction must lie in (0, 1)");
  }
};

void add_model_flags(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--lag", m.lag, "Lagged states per window")->capture_default_str()->check(CLI::Range(2, 100000));
  cmd->add_option("--filters", m.filters, "Convolution filters (0: one per bus)")->capture_default_str();
  cmd->add_option("--dense-width", m.dense1, "First dense layer width (0: 2n)")->capture_default_str();
  cmd->add_option("--rnn-layers", m.layers, "Stacked recurrent layers (0: 3)")->capture_default_str();
  cmd->add_option("--hidden", m.hidden, "Recurrent hidden width (0: 2n)")->capture_default_str();
}

void add_train_flags(CLI::App* cmd, TrainArgs& t) {
  cmd->add_option("--epochs", t.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch", t.batch, "Minibatch size")->capture_default_str();
  cmd->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--seed", t.seed, "Initialization and shuffling seed")->capture_default_str();
  cmd->add_option("--train-fraction", t.train_fraction, "Leading share of states used for training")
      ->capture_default_str();
}

ordered_json hyperparams_json(const gc_train_options& o) {
  return ordered_json{{"learning_rate", o.learning_rate}, {"beta1", o.beta1},
                      {"beta2", o.beta2},                 {"epsilon", o.epsilon},
                      {"batch_size", o.batch_size},       {"epochs", o.epochs},
                      {"seed", o.seed},                   {"train_fraction", o.train_fraction},
                      {"freeze_branch", o.freeze == GC_FREEZE_CNN   ? "cnn"
                                        : o.freeze == GC_FREEZE_RNN ? "rnn"
                                                                    : "none"},
                      {"normalize", o.normalize != 0}};
}

ordered_json config_json(const gc_model_info& info) {
  return ordered_json{{"architecture", arch_name(info.architecture)},
                      {"n_buses", info.n_buses},
                      {"lag", info.lag},
                      {"conv_filters", info.conv_filters},
                      {"kernel", info.kernel},
                      {"pool", info.pool},
                      {"dense1_width", info.dense1_width},
                      {"rnn_layers", info.rnn_layers},
                      {"rnn_hidden", info.rnn_hidden},
                      {"param_count", info.param_count}};
}

struct TrainCmd {
  std::string data;
  std::string model_out;
  std::string report_out;
  ModelArgs model;
  TrainArgs train;
};

int run_train(const TrainCmd& a, const CLI::App& sub) {
  a.train.validate();
  guard_inputs({a.data}, {a.model_out, a.report_out});
  Manifest manifest("train", sub);
  manifest.input(a.data);
  auto series = load_series(a.data);

  const auto mo = a.model.options();
  const auto to = a.train.options();
  gc_model* raw_model = nullptr;
  gc_train_report* raw_report = nullptr;
  check(gc_train(series.get(), &mo, &to, &raw_model, &raw_report), "training");
  ModelPtr model(raw_model);
  ReportPtr report(raw_report);

  gc_model_info info{};
  check(gc_model_get_info(model.get(), &info), "model info");
  check(gc_model_save(model.get(), a.model_out.c_str()), "writing " + a.model_out);
  manifest.output(a.model_out);
  manifest.seed(a.train.seed);
  manifest.format("model", info.format_version);

  ordered_json losses = ordered_json::array();
  for (std::size_t e = 0; e < gc_train_report_epochs(report.get()); ++e) {
    losses.push_back(gc_train_report_epoch_loss(report.get(), e));
  }
  double nrmse = 0.0;
  const bool has_nrmse = gc_train_report_test_nrmse(report.get(), &nrmse) != 0;

  // Wall-clock lives in the manifest so identical runs give identical reports.
  ordered_json rep{{"schema", kReportSchema},
                   {"seed", a.train.seed},
                   {"hyperparams", hyperparams_json(to)},
                   {"model", config_json(info)},
                   {"train_samples", gc_train_report_train_samples(report.get())},
                   {"epoch_loss", losses},
                   {"final_test_nrmse", has_nrmse ? ordered_json(nrmse) : ordered_json(nullptr)}};
  if (!a.report_out.empty()) {
    write_text(a.report_out, rep.dump(2) + "\n");
    manifest.output(a.report_out);
  }
  manifest.note("train_wall_clock_seconds", gc_train_report_wall_clock(report.get()));
  manifest.finish(a.model_out);

  std::cout << "trained " << arch_name(info.architecture) << " model (" << info.param_count << " parameters, "
            << losses.size() << " epochs)";
  if (!losses.empty()) std::cout << ", final loss " << losses.back().get<double>();
  if (has_nrmse) std::cout << ", test nRMSE " << nrmse;
  std::cout << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalCmd {
  std::string model;
  std::string data;
  std::string report_out;
  std::string metrics_out;
  std::string trace_out;
  std::size_t runs = 1;
  std::vector<std::string> compare;
  std::size_t threads = 0;
  std::size_t slice_instance = 0;
  std::string slice_instance_out;
  std::size_t slice_bus = 0;
  std::size_t slice_from = 0;
  std::size_t slice_to = 0;
  std::string slice_bus_out;
  TrainArgs train;
};

int run_eval(const EvalCmd& a, const CLI::App& sub) {
  a.train.validate();
  if (a.runs == 0) usage_error("--runs must be at least 1");
  if (!a.slice_instance_out.empty() && a.slice_instance == 0) usage_error("--slice-instance-out needs --slice-instance");
  if (!a.slice_bus_out.empty() && (a.slice_bus == 0 || a.slice_from == 0 || a.slice_to == 0)) {
    usage_error("--slice-bus-out needs --slice-bus, --slice-from and --slice-to");
  }
  guard_inputs({a.model, a.data}, {a.report_out, a.metrics_out, a.trace_out, a.slice_instance_out, a.slice_bus_out});

  Manifest manifest("eval", sub);
  manifest.input(a.model);
  manifest.input(a.data);
  auto model = load_model(a.model);
  auto series = load_series(a.data);
  gc_model_info info{};
  check(gc_model_get_info(model.get(), &info), "model info");
  manifest.format("model", info.format_version);

  gc_evaluation* raw_eval = nullptr;
  check(gc_evaluate(model.get(), series.get(), a.train.train_fraction, &raw_eval), "evaluating model");
  EvalPtr eval(raw_eval);
  gc_metrics own{};
  check(gc_evaluation_metrics(eval.get(), &own), "metrics");

  // Methods in report order: the loaded model's architecture first, then --compare entries.
  std::vector<std::string> methods{arch_name(info.architecture)};
  for (const auto& m : a.compare) {
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }

  const std::size_t threads = a.threads ? a.threads : std::max(1u, std::thread::hardware_concurrency());
  ComparisonPtr cmp;
  {
    gc_comparison* raw = nullptr;
    check(gc_comparison_create(&raw), "comparison");
    cmp.reset(raw);
  }
  ordered_json rows = ordered_json::array();
  for (const auto& method : methods) {
    ordered_json row{{"method", method}};
    if (method == "persistence") {
      gc_evaluation* p = nullptr;
      check(gc_evaluate_persistence(series.get(), info.lag, a.train.train_fraction, &p), "persistence baseline");
      EvalPtr pe(p);
      gc_metrics pm{};
      check(gc_evaluation_metrics(pe.get(), &pm), "metrics");
      check(gc_comparison_add(cmp.get(), method.c_str(), &pm, nullptr), "comparison");
      row["metrics"] = metrics_json(pm);
      rows.push_back(row);
      continue;
    }
    const bool own_arch = method == arch_name(info.architecture);
    if (a.runs == 1 && own_arch) {
      const gc_aggregate agg{1, 0, own.nrmse, 0.0, own.nrmse, own.nrmse};
      check(gc_comparison_add(cmp.get(), method.c_str(), &own, &agg), "comparison");
      row["source"] = "loaded model";
      row["metrics"] = metrics_json(own);
      row["aggregate"] = aggregate_json(agg);
      rows.push_back(row);
      continue;
    }
    gc_model_options mo;
    gc_model_defaults(&mo);
    mo.lag = info.lag;
    mo.architecture = method == "hybrid" ? GC_ARCH_HYBRID : GC_ARCH_RNN_ONLY;
    if (own_arch) {
      mo.conv_filters = info.conv_filters;
      mo.dense1_width = info.dense1_width;
      mo.rnn_layers = info.rnn_layers;
      mo.rnn_hidden = info.rnn_hidden;
    }
    const auto to = a.train.options();
    gc_multi_run* raw_mr = nullptr;
    check(gc_multi_run_train(series.get(), &mo, &to, a.runs, threads, &raw_mr), "training " + method);
    MultiPtr mr(raw_mr);
    gc_aggregate agg{};
    gc_metrics mean{};
    check(gc_multi_run_aggregate(mr.get(), &agg), "aggregate");
    check(gc_multi_run_mean_metrics(mr.get(), &mean), "aggregate");
    if (agg.runs == 0) throw Failure{kExitDivergence, "every " + method + " run diverged"};
    check(gc_comparison_add(cmp.get(), method.c_str(), &mean, &agg), "comparison");
    ordered_json per_run = ordered_json::array();
    for (std::size_t i = 0; i < gc_multi_run_count(mr.get()); ++i) {
      std::uint64_t seed = 0;
      int diverged = 0;
      gc_metrics m{};
      check(gc_multi_run_result(mr.get(), i, &seed, &diverged, &m), "run result");
      manifest.seed(seed);
      per_run.push_back(ordered_json{{"seed", seed}, {"diverged", diverged != 0},
                                     {"metrics", diverged ? ordered_json(nullptr) : metrics_json(m)}});
    }
    row["source"] = "retrained";
    row["hyperparams"] = hyperparams_json(to);
    row["metrics"] = metrics_json(mean);
    row["aggregate"] = aggregate_json(agg);
    row["runs"] = per_run;
    rows.push_back(row);
  }

  char* table_raw = nullptr;
  const std::string title = "gridcast evaluation: " + a.data + " (" + std::to_string(info.n_buses) + " buses, lag " +
                            std::to_string(info.lag) + ")";
  check(gc_comparison_render(cmp.get(), title.c_str(), &table_raw), "rendering table");
  const std::string table(table_raw);
  gc_string_free(table_raw);
  std::cout << table;

  std::string primary;
  if (!a.report_out.empty()) {
    write_text(a.report_out, table);
    manifest.output(a.report_out);
    primary = a.report_out;
  }
  if (!a.metrics_out.empty()) {
    const ordered_json doc{{"schema", kReportSchema}, {"model", config_json(info)}, {"rows", rows}};
    write_text(a.metrics_out, doc.dump(2) + "\n");
    manifest.output(a.metrics_out);
    if (primary.empty()) primary = a.metrics_out;
  }
  if (!a.trace_out.empty()) {
    check(gc_evaluation_write_trace(eval.get(), a.trace_out.c_str()), "writing " + a.trace_out);
    manifest.output(a.trace_out);
    if (primary.empty()) primary = a.trace_out;
  }
  if (!a.slice_instance_out.empty()) {
    check(gc_evaluation_write_instance_slice(eval.get(), a.slice_instance, a.slice_instance_out.c_str()),
          "instance slice");
    manifest.output(a.slice_instance_out);
    if (primary.empty()) primary = a.slice_instance_out;
  }
  if (!a.slice_bus_out.empty()) {
    check(gc_evaluation_write_bus_slice(eval.get(), a.slice_bus, a.slice_from, a.slice_to, a.slice_bus_out.c_str()),
          "bus slice");
    manifest.output(a.slice_bus_out);
    if (primary.empty()) primary = a.slice_bus_out;
  }
  manifest.finish(primary);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ForecastCmd {
  std::string model;
  std::string data;
  std::size_t at = 0;
  std::string out;
  bool persistence = false;
  std::size_t lag = 10;
};

std::string format_row(const char* label, const std::vector<double>& v) {
  std::string line = label;
  char buf[40];
  for (double x : v) {
    std::snprintf(buf, sizeof buf, ",%.17g", x);
    line += buf;
  }
  return line + "\n";
}

int run_forecast(const ForecastCmd& a, const CLI::App& sub) {
  if (!a.persistence && a.model.empty()) usage_error("forecast needs --model unless --persistence is given");
  guard_inputs({a.model, a.data}, {a.out});
  Manifest manifest("forecast", sub);
  if (!a.model.empty()) manifest.input(a.model);
  manifest.input(a.data);
  auto series = load_series(a.data);
  const std::size_t n = gc_series_buses(series.get());
  std::vector<double> pred(2 * n);

  std::size_t lag = a.lag;
  if (a.persistence) {
    if (!a.model.empty()) {
      auto model = load_model(a.model);
      gc_model_info info{};
      check(gc_model_get_info(model.get(), &info), "model info");
      lag = info.lag;
    }
    check(gc_persistence_at(series.get(), lag, a.at, pred.data(), pred.size()), "forecast");
  } else {
    auto model = load_model(a.model);
    gc_model_info info{};
    check(gc_model_get_info(model.get(), &info), "model info");
    lag = info.lag;
    manifest.format("model", info.format_version);
    check(gc_forecast_at(model.get(), series.get(), a.at, pred.data(), pred.size()), "forecast");
  }

  std::string text = "row";
  for (std::size_t i = 1; i <= n; ++i) text += ",vm_" + std::to_string(i);
  for (std::size_t i = 1; i <= n; ++i) text += ",va_" + std::to_string(i);
  text += "\n" + format_row("forecast", pred);
  if (a.at <= gc_series_length(series.get())) {
    std::vector<double> truth(2 * n);
    check(gc_series_state(series.get(), a.at, truth.data(), truth.size()), "truth");
    std::vector<double> ae(2 * n);
    for (std::size_t i = 0; i < ae.size(); ++i) ae[i] = std::abs(pred[i] - truth[i]);
    text += format_row("truth", truth) + format_row("ae", ae);
  }
  std::cout << text;
  manifest.note("instance", a.at);
  manifest.note("lag", lag);
  if (!a.out.empty()) {
    write_text(a.out, text);
    manifest.output(a.out);
  }
  manifest.finish(a.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridcast: hybrid CNN-RNN forecaster of bus voltage states"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gc_version()));

  GenDataArgs gen;
  gc_synthetic_defaults(&gen.opts);
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic state series as CSV");
  gen_cmd->add_option("--buses", gen.opts.n_buses, "Number of buses")->capture_default_str();
  gen_cmd->add_option("--length", gen.opts.length, "Number of states")->capture_default_str();
  gen_cmd->add_option("--period", gen.opts.period, "Daily cycle length in samples")->capture_default_str();
  gen_cmd->add_option("--noise", gen.opts.magnitude_noise, "Magnitude noise std (p.u.)")->capture_default_str();
  gen_cmd->add_option("--angle-noise", gen.opts.angle_noise, "Angle noise std (degrees)")->capture_default_str();
  gen_cmd->add_option("--coupling", gen.opts.coupling, "Neighbour angle coupling")->capture_default_str();
  gen_cmd->add_option("--seed", gen.opts.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output CSV")->required();

  TrainCmd train;
  auto* train_cmd = app.add_subcommand("train", "Train a forecaster on a state series");
  train_cmd->add_option("--data", train.data, "Input CSV")->required();
  train_cmd->add_option("--model-out", train.model_out, "Model file to write")->required();
  train_cmd->add_option("--report-out", train.report_out, "Training report JSON");
  add_model_flags(train_cmd, train.model);
  add_train_flags(train_cmd, train.train);
  train_cmd->add_option("--freeze-branch", train.train.freeze, "Branch whose parameters stay fixed")
      ->capture_default_str()
      ->check(CLI::IsMember({"none", "cnn", "rnn"}));
  train_cmd->add_option("--baseline", train.model.baseline, "Architecture to train")
      ->capture_default_str()
      ->check(CLI::IsMember({"hybrid", "rnn-only"}));

  EvalCmd ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a model on the test partition and compare methods");
  eval_cmd->add_option("--model", ev.model, "Model file")->required();
  eval_cmd->add_option("--data", ev.data, "Input CSV")->required();
  eval_cmd->add_option("--report-out", ev.report_out, "Comparison table (text)");
  eval_cmd->add_option("--metrics-out", ev.metrics_out, "Metrics and aggregates (JSON)");
  eval_cmd->add_option("--trace-out", ev.trace_out, "Per-instance, per-bus absolute errors (CSV)");
  eval_cmd->add_option("--runs", ev.runs, "Independent retrain-and-evaluate runs")->capture_default_str();
  eval_cmd->add_option("--compare", ev.compare, "Extra methods: persistence, hybrid, rnn-only")
      ->delimiter(',')
      ->check(CLI::IsMember({"persistence", "hybrid", "rnn-only"}));
  eval_cmd->add_option("--threads", ev.threads, "Concurrent runs (0: all cores)")->capture_default_str();
  eval_cmd->add_option("--slice-instance", ev.slice_instance, "Test instance for the all-bus slice");
  eval_cmd->add_option("--slice-instance-out", ev.slice_instance_out, "All-bus slice CSV");
  eval_cmd->add_option("--slice-bus", ev.slice_bus, "Bus for the range slice");
  eval_cmd->add_option("--slice-from", ev.slice_from, "First test instance of the range slice");
  eval_cmd->add_option("--slice-to", ev.slice_to, "Last test instance of the range slice");
  eval_cmd->add_option("--slice-bus-out", ev.slice_bus_out, "Single-bus range slice CSV");
  add_train_flags(eval_cmd, ev.train);

  ForecastCmd fc;
  auto* fc_cmd = app.add_subcommand("forecast", "Forecast one state from the lagged states before it");
  fc_cmd->add_option("--model", fc.model, "Model file");
  fc_cmd->add_option("--data", fc.data, "Input CSV")->required();
  fc_cmd->add_option("--at-instance", fc.at, "1-based series index of the forecast state (lag+1 .. T+1)")
      ->required();
  fc_cmd->add_option("--out", fc.out, "Output CSV");
  fc_cmd->add_flag("--persistence", fc.persistence, "Use the last observed state as the forecast");
  fc_cmd->add_option("--lag", fc.lag, "Window length for --persistence without --model")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen, *gen_cmd);
    if (*train_cmd) return run_train(train, *train_cmd);
    if (*eval_cmd) return run_eval(ev, *eval_cmd);
    if (*fc_cmd) return run_forecast(fc, *fc_cmd);
  } catch (const Failure& f) {
    std::cerr << "gridcast: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "gridcast: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
