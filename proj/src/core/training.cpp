#include "gridcast/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "gridcast/error.hpp"
#include "gridcast/random.hpp"

namespace gridcast {

const char* to_string(FreezeBranch f) noexcept {
  switch (f) {
    case FreezeBranch::none: return "none";
    case FreezeBranch::cnn: return "cnn";
    case FreezeBranch::rnn: return "rnn";
  }
  return "unknown";
}

std::optional<FreezeBranch> parse_freeze_branch(std::string_view name) noexcept {
  if (name == "none") return FreezeBranch::none;
  if (name == "cnn") return FreezeBranch::cnn;
  if (name == "rnn") return FreezeBranch::rnn;
  return std::nullopt;
}

void Hyperparams::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must lie strictly between 0 and 1");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("Adam epsilon must be positive");
  if (batch_size == 0) throw InvalidArgument("batch size must be at least 1");
}

// ---------------------------------------------------------------------------

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw ShapeError("mse over " + std::to_string(pred.size()) + " predictions and " + std::to_string(target.size()) +
                     " targets");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred[i] - target[i]) * (pred[i] - target[i]);
  return sum / static_cast<double>(pred.size());
}

Vector mse_gradient(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) throw ShapeError("mse gradient length mismatch");
  Vector g(pred.size());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

double joint_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.size() % 2 != 0) throw ShapeError("joint loss needs two equal halves");
  const std::size_t n = pred.size() / 2;
  return mse_loss(pred.first(n), target.first(n)) + mse_loss(pred.subspan(n), target.subspan(n));
}

Vector joint_loss_gradient(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.size() % 2 != 0) throw ShapeError("joint loss needs two equal halves");
  const std::size_t n = pred.size() / 2;
  Vector g = mse_gradient(pred.first(n), target.first(n));
  const Vector ga = mse_gradient(pred.subspan(n), target.subspan(n));
  g.insert(g.end(), ga.begin(), ga.end());
  return g;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const Hyperparams& hp) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("Adam step over " + std::to_string(params.size()) + " parameters with " +
                     std::to_string(grads.size()) + " gradients and state of " + std::to_string(state.m.size()));
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(hp.beta1, t);
  const double correction2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
  }
}

double batch_loss_and_gradient(const ModelConfig& config, const ModelParameters& params,
                               std::span<const Sample* const> batch, ModelParameters& grads) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const Sample* s : batch) {
    const auto pass = forward(config, params, s->window);
    loss += joint_loss(pass.output, s->target.values);
    Vector g = joint_loss_gradient(pass.output, s->target.values);
    for (double& v : g) v *= scale;
    backward(config, params, s->window, pass, g, grads);
  }
  return loss * scale;
}

std::vector<Sample> normalize_samples(const Normalizer& normalizer, std::span<const Sample> raw) {
  std::vector<Sample> out;
  out.reserve(raw.size());
  for (const auto& s : raw) {
    out.push_back(Sample{normalizer.apply_window(s.window), StateVector(normalizer.apply(s.target.values))});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void zero_frozen(ModelParameters& grads, FreezeBranch freeze) {
  if (freeze == FreezeBranch::none) return;
  for (auto& b : parameter_blocks(grads)) {
    const bool is_rnn = b.name.starts_with("rnn.") || b.name.starts_with("head.");
    if ((freeze == FreezeBranch::rnn) == is_rnn) std::fill(b.values.begin(), b.values.end(), 0.0);
  }
}

}  // namespace

TrainResult train(ForecastModel model, std::span<const Sample> raw_train, const Hyperparams& hp) {
  hp.validate();
  if (raw_train.empty()) throw InvalidArgument("training needs at least one sample");
  const auto started = std::chrono::steady_clock::now();

  const auto samples = normalize_samples(model.normalizer, raw_train);
  std::vector<double> flat = flatten_parameters(model.params);
  AdamState adam = AdamState::zeros(flat.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  report.seed = hp.seed;
  report.hyperparams = hp;
  report.train_samples = samples.size();
  report.epoch_loss.reserve(hp.epochs);

  std::vector<const Sample*> batch;
  batch.reserve(hp.batch_size);
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    if (hp.shuffle_each_epoch) {
      Rng rng(mix_seed(hp.seed, 0x5eed0000ULL + epoch));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    double epoch_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size, ++batch_index) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + hp.batch_size);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&samples[order[i]]);

      ModelParameters grads = zeros_like(model.params);
      const double loss = batch_loss_and_gradient(model.config, model.params, batch, grads);
      if (!std::isfinite(loss)) {
        throw DivergenceError(epoch + 1, batch_index + 1,
                              "training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                  std::to_string(batch_index + 1));
      }
      zero_frozen(grads, hp.freeze);
      const auto g = flatten_parameters(grads);
      adam_step(flat, g, adam, hp);
      assign_parameters(model.params, flat);
      epoch_sum += loss * static_cast<double>(batch.size());
    }
    report.epoch_loss.push_back(epoch_sum / static_cast<double>(samples.size()));
  }

  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return TrainResult{std::move(model), std::move(report)};
}

PreparedData prepare_data(const StateSeries& series, double train_fraction, std::size_t lag) {
  auto [train_part, test_part] = chronological_split(series, train_fraction, lag);
  PreparedData data;
  data.train_windows = build_windows(train_part, lag);
  data.test_windows = build_windows(test_part, lag);
  data.train = std::move(train_part);
  data.test = std::move(test_part);
  return data;
}

TrainResult fit_forecaster(const ModelConfig& config, const PreparedData& data, const Hyperparams& hp, bool normalize) {
  ForecastModel model = init_model(config, hp.seed);
  if (data.train.n_buses != config.n_buses) {
    throw ShapeError("data has " + std::to_string(data.train.n_buses) + " buses, model expects " +
                     std::to_string(config.n_buses));
  }
  if (normalize) model.normalizer = fit_normalizer(data.train);
  auto result = train(std::move(model), data.train_windows, hp);
  if (!data.test_windows.empty()) {
    result.report.final_test_nrmse = evaluate(result.model, data.test_windows).metrics.nrmse;
  }
  return result;
}

MultiRunReport multi_run(const ModelConfig& config, const PreparedData& data, const Hyperparams& hp, std::size_t n_runs,
                         std::size_t threads) {
  if (n_runs == 0) throw InvalidArgument("need at least one run");
  if (data.test_windows.empty()) throw InvalidArgument("multi-run evaluation needs test windows");
  hp.validate();
  config.validate();

  std::vector<RunResult> results(n_runs);
  std::vector<std::exception_ptr> failures(n_runs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n_runs; i = next++) {
      Hyperparams run_hp = hp;
      run_hp.seed = hp.seed + i;
      results[i].seed = run_hp.seed;
      try {
        const auto fitted = fit_forecaster(config, data, run_hp);
        results[i].metrics = evaluate(fitted.model, data.test_windows).metrics;
      } catch (const DivergenceError& e) {
        results[i].diverged = true;
        results[i].error = e.what();
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, n_runs);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  MultiRunReport report;
  std::vector<double> nrmse;
  std::vector<MetricsReport> included;
  std::size_t excluded = 0;
  for (const auto& r : results) {
    if (r.diverged) {
      ++excluded;
    } else {
      nrmse.push_back(r.metrics.nrmse);
      included.push_back(r.metrics);
    }
  }
  report.nrmse = aggregate(nrmse, excluded);
  report.mean_metrics = mean_metrics(included);
  report.runs = std::move(results);
  return report;
}

}  // namespace gridcast
