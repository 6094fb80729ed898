// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "gridcast/evaluation.hpp"
#include "gridcast/forecaster.hpp"
#include "gridcast/io.hpp"
#include "gridcast/layers.hpp"
#include "gridcast/training.hpp"
#include "support/oracles.hpp"

#ifndef GRIDCAST_CLI_PATH
#error "GRIDCAST_CLI_PATH must point at the gridcast executable"
#endif

using namespace gridcast;
using namespace gridcast::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

void append(std::vector<double>& dst, std::span<const double> src) { dst.insert(dst.end(), src.begin(), src.end()); }

// ---------------------------------------------------------------------------
// 1. gradients

double conv_error(Rng& rng) {
  const std::size_t channels = 2 + rng.below(4), cols = 3 + rng.below(5), filters = 1 + rng.below(4);
  layers::ConvParams p{random_matrix(rng, filters, channels * 2), random_vector(rng, filters, 0.3), 2};
  Matrix x = random_matrix(rng, channels, cols);
  const auto up = random_matrix(rng, filters, cols - 1);
  const auto cache = layers::conv1d_forward(x, p);
  const auto g = layers::conv1d_backward(p, x, cache, up);
  std::vector<double> analytic;
  append(analytic, g.params.weight.values());
  append(analytic, g.params.bias);
  append(analytic, g.input.values());
  auto loss = [&] { return dot(layers::conv1d_forward(x, p).output.values(), up.values()); };
  std::vector<double> numeric = numeric_gradient(p.weight.values(), loss);
  append(numeric, numeric_gradient(p.bias, loss));
  append(numeric, numeric_gradient(x.values(), loss));
  return relative_error(analytic, numeric);
}

double pool_error(Rng& rng) {
  const std::size_t rows = 1 + rng.below(5), cols = 2 + rng.below(8), pool = 1 + rng.below(std::min<std::size_t>(cols, 3));
  Matrix x = random_matrix(rng, rows, cols);
  const auto cache = layers::maxpool_forward(x, pool);
  const auto up = random_matrix(rng, rows, cache.output.cols());
  const auto analytic = layers::maxpool_backward(cache, up);
  const auto numeric = numeric_gradient(x.values(), [&] {
    return dot(layers::maxpool_forward(x, pool).output.values(), up.values());
  });
  return relative_error(analytic.values(), numeric);
}

double dense_error(Rng& rng, layers::Activation act) {
  const std::size_t in = 1 + rng.below(8), out = 1 + rng.below(6);
  layers::DenseParams p{random_matrix(rng, out, in), random_vector(rng, out, 0.3), act};
  Vector x = random_vector(rng, in);
  const auto up = random_vector(rng, out);
  const auto g = layers::dense_backward(p, x, layers::dense_forward(p, x), up);
  std::vector<double> analytic;
  append(analytic, g.params.weight.values());
  append(analytic, g.params.bias);
  append(analytic, g.input);
  auto loss = [&] { return dot(layers::dense_forward(p, x).output, up); };
  std::vector<double> numeric = numeric_gradient(p.weight.values(), loss);
  append(numeric, numeric_gradient(p.bias, loss));
  append(numeric, numeric_gradient(x, loss));
  return relative_error(analytic, numeric);
}

double relu_error(Rng& rng) {
  Vector x = random_vector(rng, 1 + rng.below(10));
  const auto up = random_vector(rng, x.size());
  Vector analytic(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) analytic[i] = x[i] > 0.0 ? up[i] : 0.0;
  const auto numeric = numeric_gradient(x, [&] { return dot(layers::relu(x), up); });
  return relative_error(analytic, numeric);
}

double rnn_error(Rng& rng) {
  const std::size_t d = 1 + rng.below(4), h = 1 + rng.below(5), steps = 2 + rng.below(4), depth = 1 + rng.below(3);
  std::vector<layers::RnnLayerParams> ls;
  for (std::size_t l = 0; l < depth; ++l) {
    ls.push_back({random_matrix(rng, h, l == 0 ? d : h, 0.8), random_matrix(rng, h, h, 0.8), random_vector(rng, h, 0.3)});
  }
  Matrix x = random_matrix(rng, d, steps);
  const auto up = random_vector(rng, h);
  const auto g = layers::stacked_rnn_backward(ls, x, layers::stacked_rnn_forward(ls, x), up);
  std::vector<double> analytic;
  for (const auto& l : g.layers) {
    append(analytic, l.input_weight.values());
    append(analytic, l.recurrent_weight.values());
    append(analytic, l.bias);
  }
  append(analytic, g.input.values());
  auto loss = [&] { return dot(layers::stacked_rnn_forward(ls, x).output, up); };
  std::vector<double> numeric;
  for (auto& l : ls) {
    append(numeric, numeric_gradient(l.input_weight.values(), loss));
    append(numeric, numeric_gradient(l.recurrent_weight.values(), loss));
    append(numeric, numeric_gradient(l.bias, loss));
  }
  append(numeric, numeric_gradient(x.values(), loss));
  return relative_error(analytic, numeric);
}

double model_error(std::uint64_t seed) {
  ModelConfig c = ModelConfig::for_buses(2, 3);
  c.conv_filters = 2;
  c.rnn_hidden = 4;
  c.rnn_layers = 3;
  auto m = init_model(c, seed);
  Rng rng(mix_seed(seed, 0xacce));
  for (auto& b : parameter_blocks(m.params)) {
    if (b.name.ends_with("bias")) {
      for (double& v : b.values) v = rng.uniform(-0.3, 0.3);
    }
  }
  const auto window = random_matrix(rng, 4, 3);
  const auto up = random_vector(rng, 4);
  auto grads = zeros_like(m.params);
  backward(c, m.params, window, forward(c, m.params, window), up, grads);
  auto flat = flatten_parameters(m.params);
  const auto numeric = numeric_gradient(flat, [&] {
    assign_parameters(m.params, flat);
    return dot(forward(c, m.params, window).output, up);
  });
  return relative_error(flatten_parameters(grads), numeric);
}

Outcome gradients() {
  constexpr std::uint64_t kSeeds = 100;
  struct Kind {
    const char* name;
    std::function<double(Rng&, std::uint64_t)> err;
    double worst = 0.0;
  };
  std::vector<Kind> kinds{
      {"conv", [](Rng& r, std::uint64_t) { return conv_error(r); }},
      {"maxpool", [](Rng& r, std::uint64_t) { return pool_error(r); }},
      {"dense-relu", [](Rng& r, std::uint64_t) { return dense_error(r, layers::Activation::relu); }},
      {"dense-linear", [](Rng& r, std::uint64_t) { return dense_error(r, layers::Activation::linear); }},
      {"relu", [](Rng& r, std::uint64_t) { return relu_error(r); }},
      {"stacked-rnn", [](Rng& r, std::uint64_t) { return rnn_error(r); }},
      {"hybrid-model", [](Rng&, std::uint64_t s) { return model_error(s); }},
  };
  bool pass = true;
  std::string detail = std::to_string(kSeeds) + " seeds, max rel err:";
  for (auto& k : kinds) {
    for (std::uint64_t s = 1; s <= kSeeds; ++s) {
      Rng rng(mix_seed(s, 0x9a4d));
      k.worst = std::max(k.worst, k.err(rng, s));
    }
    pass = pass && k.worst <= kGradTolerance;
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s %.1e", k.name, k.worst);
    detail += buf;
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 2. shapes at n=118, r=10

Outcome shapes() {
  const auto c = ModelConfig::for_buses(118, 10);
  const auto m = init_model(c, 1);
  Rng rng(2);
  const auto window = random_matrix(rng, 236, 10);
  const auto p = forward(c, m.params, window);
  const bool ok = window.rows() == 236 && window.cols() == 10 && p.conv.output.rows() == 118 &&
                  p.conv.output.cols() == 9 && p.pool.output.rows() == 118 && p.pool.output.cols() == 4 &&
                  p.flat.size() == 472 && p.dense1.output.size() == 236 && p.dense2.output.size() == 118 &&
                  p.rnn.hidden.size() == 3 && p.rnn.hidden.back().back().size() == 236 && p.head.output.size() == 118 &&
                  p.output.size() == 236;
  std::string detail = "236x10 -> " + p.conv.output.shape_string() + " -> " + p.pool.output.shape_string() + " -> " +
                       std::to_string(p.flat.size()) + " -> " + std::to_string(p.dense1.output.size()) + " -> " +
                       std::to_string(p.dense2.output.size()) + "; rnn hidden " +
                       std::to_string(p.rnn.hidden.back().back().size()) + " -> " +
                       std::to_string(p.head.output.size());
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 3. parameter counts

std::size_t enumerate(const ModelParameters& p) {
  std::size_t n = p.cnn.conv.weight.size() + p.cnn.conv.bias.size() + p.cnn.dense1.weight.size() +
                  p.cnn.dense1.bias.size() + p.cnn.dense2.weight.size() + p.cnn.dense2.bias.size();
  for (const auto& l : p.rnn.layers) n += l.input_weight.size() + l.recurrent_weight.size() + l.bias.size();
  return n + p.rnn.head.weight.size() + p.rnn.head.bias.size();
}

Outcome param_counts() {
  const auto full = init_model(ModelConfig::for_buses(118), 1);
  const std::size_t conv = full.params.cnn.conv.weight.size() + full.params.cnn.conv.bias.size();
  bool ok = conv == 55814 && param_count(full.config) == enumerate(full.params);
  Rng rng(77);
  constexpr int kConfigs = 25;
  for (int i = 0; i < kConfigs; ++i) {
    auto c = ModelConfig::for_buses(1 + rng.below(12), 3 + rng.below(10),
                                    rng.below(4) == 0 ? Architecture::rnn_only : Architecture::hybrid);
    c.conv_filters = 1 + rng.below(10);
    c.dense1_width = 1 + rng.below(12);
    c.rnn_layers = 1 + rng.below(4);
    c.rnn_hidden = 1 + rng.below(12);
    c.dense1_bias = rng.below(3) != 0;
    ok = ok && param_count(c) == enumerate(init_model(c, i).params);
  }
  return {ok, "default conv total " + std::to_string(conv) + ", default model " +
                  std::to_string(param_count(full.config)) + ", " + std::to_string(kConfigs) +
                  " random configs match enumeration"};
}

// ---------------------------------------------------------------------------
// 4. memorization

Outcome memorization() {
  // Noise-free 8-bus series of 30 states gives 20 windows at lag 10.
  auto sc = default_synthetic_config(8, 30, 3);
  sc.magnitude_noise = 0.0;
  sc.angle_noise = 0.0;
  const auto series = generate_synthetic_series(sc);
  const auto windows = build_windows(series, 10);
  auto model = init_model(ModelConfig::for_buses(8, 10), 3);
  model.normalizer = fit_normalizer(series);
  Hyperparams hp;
  hp.epochs = 10000;
  hp.seed = 3;
  const auto result = train(model, windows, hp);

  const auto samples = normalize_samples(result.model.normalizer, windows);
  double loss = 0.0;
  for (const auto& s : samples) loss += joint_loss(forward(result.model.config, result.model.params, s.window).output, s.target.values);
  loss /= static_cast<double>(samples.size());
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu samples, %zu epochs, seed 3: final training loss %.3e (last epoch mean %.3e)",
                windows.size(), hp.epochs, loss, result.report.epoch_loss.back());
  return {windows.size() == 20 && loss <= 1e-5, buf};
}

// ---------------------------------------------------------------------------
// 5 and 6. synthetic benchmark

struct Benchmark {
  PreparedData data;
  Evaluation persistence;
  MultiRunReport hybrid;
  MultiRunReport rnn_only;
};

Benchmark run_benchmark() {
  const auto series = generate_synthetic_series(default_synthetic_config(14, 2000, 7));
  Benchmark b;
  b.data = prepare_data(series, 0.8, 10);
  b.persistence = evaluate_persistence(b.data.test_windows);
  Hyperparams hp;
  hp.epochs = 30;
  hp.seed = 1;
  const std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  b.hybrid = multi_run(ModelConfig::for_buses(14, 10), b.data, hp, 5, threads);
  b.rnn_only = multi_run(ModelConfig::for_buses(14, 10, Architecture::rnn_only), b.data, hp, 5, threads);
  return b;
}

Outcome beats_persistence(const Benchmark& b) {
  const double base = b.persistence.metrics.nrmse;
  const double mean = b.hybrid.nrmse.mean;
  char buf[200];
  std::snprintf(buf, sizeof buf, "hybrid mean nRMSE %.4e over %zu seeds vs persistence %.4e (ratio %.3f, need <= 0.9)",
                mean, b.hybrid.nrmse.runs, base, mean / base);
  return {b.hybrid.nrmse.runs == 5 && mean <= 0.9 * base, buf};
}

Outcome baseline_parity(const Benchmark& b, std::string& table) {
  const std::vector<ComparisonRow> rows{{"hybrid", b.hybrid.mean_metrics, b.hybrid.nrmse},
                                        {"rnn-only", b.rnn_only.mean_metrics, b.rnn_only.nrmse},
                                        {"persistence", b.persistence.metrics, std::nullopt}};
  table = format_comparison_table(rows, "synthetic 14-bus benchmark, 5 runs");
  bool ok = b.rnn_only.nrmse.runs == 5 && b.rnn_only.mean_metrics.n_test_windows == b.hybrid.mean_metrics.n_test_windows;
  for (const char* needle : {"ABSOLUTE ERROR OF VOLTAGE FORECASTING", "Voltage magnitude (p.u.)", "Voltage angle (degree)",
                             "Average", "Max", "Normalized RMSE", "\nhybrid ", "\nrnn-only ", "\npersistence "}) {
    ok = ok && table.find(needle) != std::string::npos;
  }
  const bool direction = b.hybrid.mean_metrics.avg_ae_magnitude <= b.rnn_only.mean_metrics.avg_ae_magnitude;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "table emitted for 3 methods; avg magnitude AE hybrid %.4e vs rnn-only %.4e (hybrid <= rnn-only: %s, "
                "informational)",
                b.hybrid.mean_metrics.avg_ae_magnitude, b.rnn_only.mean_metrics.avg_ae_magnitude,
                direction ? "yes" : "no");
  return {ok, buf};
}

// ---------------------------------------------------------------------------
// 7. CLI determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("gridcast_acceptance_" + std::to_string(::getpid()));
  const char* steps[] = {
      "gen-data --buses 6 --length 400 --seed 11 --out data.csv",
      "train --data data.csv --model-out model.txt --report-out train.json --epochs 4 --seed 5",
      "eval --model model.txt --data data.csv --compare persistence,rnn-only --runs 2 --threads 2 --epochs 2 --seed 5 "
      "--report-out eval.txt --metrics-out eval.json --trace-out trace.csv",
      "forecast --model model.txt --data data.csv --at-instance 350 --out forecast.csv",
  };
  const char* artifacts[] = {"data.csv", "model.txt", "train.json", "eval.txt", "eval.json", "trace.csv", "forecast.csv"};
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = root / ("run" + std::to_string(rep));
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const char* step : steps) {
      const std::string cmd = "cd '" + dir.string() + "' && '" GRIDCAST_CLI_PATH "' " + step + " >/dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        fs::remove_all(root);
        return {false, std::string("command failed: ") + step};
      }
    }
  }
  bool ok = true;
  std::string differing;
  for (const char* a : artifacts) {
    const auto x = slurp(root / "run0" / a);
    const auto y = slurp(root / "run1" / a);
    if (x.empty() || x != y) {
      ok = false;
      differing += std::string(" ") + a;
    }
  }
  fs::remove_all(root);
  return {ok, ok ? "2 identical invocations; 7 artifacts byte-identical (data, model, reports, trace, forecast)"
                 : "differing:" + differing};
}

// ---------------------------------------------------------------------------
// 8. data pipeline

StateSeries ramp(std::size_t n, std::size_t length) {
  StateSeries s;
  s.n_buses = n;
  for (std::size_t t = 0; t < length; ++t) {
    s.timestamps.push_back(static_cast<double>(t));
    s.states.emplace_back(Vector(2 * n, static_cast<double>(t)));
  }
  return s;
}

Outcome data_pipeline() {
  const auto [train, test] = chronological_split(ramp(1, 18528), 0.8, 10);
  bool ok = train.length() == 14822 && test.length() == 3706;
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const std::size_t r = 1 + rng.below(20);
    const std::size_t t = r + 1 + rng.below(300);
    ok = ok && build_windows(ramp(1 + rng.below(3), t), r).size() == t - r;
  }
  const auto series = generate_synthetic_series(default_synthetic_config(14, 2000, 7));
  const auto norm = fit_normalizer(series);
  double worst = 0.0;
  for (const auto& s : series.states) {
    const auto back = norm.invert(norm.apply(s.values));
    for (std::size_t f = 0; f < back.size(); ++f) {
      worst = std::max(worst, std::abs(back[f] - s.values[f]) / std::max(std::abs(s.values[f]), 1e-300));
    }
  }
  ok = ok && worst <= 1e-12;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "18528 -> %zu/%zu; 50 random (T, r) give T-r windows; normalizer round trip max rel err %.1e",
                train.length(), test.length(), worst);
  return {ok, buf};
}

// ---------------------------------------------------------------------------
// 9. metric oracles

Outcome metric_oracles() {
  Rng rng(9);
  std::vector<StateVector> truths, preds, zeros;
  for (int t = 0; t < 50; ++t) {
    Vector v(28), p(28);
    for (std::size_t i = 0; i < 28; ++i) {
      v[i] = i < 14 ? rng.uniform(0.95, 1.05) : rng.uniform(-30.0, 5.0);
      p[i] = v[i] + rng.uniform(-0.01, 0.01);
    }
    truths.emplace_back(v);
    preds.emplace_back(p);
    zeros.emplace_back(Vector(28, 0.0));
  }
  const bool perfect = normalized_rmse(truths, truths) == 0.0;
  const bool all_zero = normalized_rmse(zeros, truths) == 1.0;

  const auto e = score(preds, truths);
  std::istringstream in(format_trace_csv(e.trace));
  std::string line;
  std::getline(in, line);
  double sum_m = 0.0, sum_a = 0.0, max_m = 0.0, max_a = 0.0;
  std::size_t cells = 0;
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    const double m = *io::parse_double(line.substr(c2 + 1, c3 - c2 - 1));
    const double a = *io::parse_double(line.substr(c3 + 1));
    sum_m += m;
    sum_a += a;
    max_m = std::max(max_m, m);
    max_a = std::max(max_a, a);
    ++cells;
  }
  const double n = static_cast<double>(cells);
  const bool recompute = cells == 50 * 14 && sum_m / n == e.metrics.avg_ae_magnitude &&
                         sum_a / n == e.metrics.avg_ae_angle && max_m == e.metrics.max_ae_magnitude &&
                         max_a == e.metrics.max_ae_angle;
  return {perfect && all_zero && recompute,
          std::string("perfect -> 0: ") + (perfect ? "exact" : "no") + ", all-zero -> 1: " +
              (all_zero ? "exact" : "no") + ", trace recompute: " + (recompute ? "exact" : "mismatch")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  report(1, "gradient correctness", gradients);
  report(2, "shape oracle at n=118, r=10", shapes);
  report(3, "parameter-count oracle", param_counts);
  report(4, "memorization", memorization);

  std::optional<Benchmark> bench;
  std::string table;
  report(5, "beats persistence", [&] {
    bench = run_benchmark();
    return beats_persistence(*bench);
  });
  report(6, "baseline parity harness", [&] {
    if (!bench) return Outcome{false, "benchmark did not run"};
    return baseline_parity(*bench, table);
  });
  report(7, "CLI determinism", determinism);
  report(8, "data-pipeline oracles", data_pipeline);
  report(9, "metric oracles", metric_oracles);

  if (!table.empty()) std::printf("\n%s\n", table.c_str());
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
