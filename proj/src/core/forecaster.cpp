#include "gridcast/forecaster.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "gridcast/error.hpp"
#include "gridcast/io.hpp"
#include "gridcast/random.hpp"

namespace gridcast {

using layers::Activation;
using layers::ConvParams;
using layers::DenseParams;
using layers::RnnLayerParams;

const char* to_string(Architecture a) noexcept {
  switch (a) {
    case Architecture::hybrid: return "hybrid";
    case Architecture::rnn_only: return "rnn-only";
  }
  return "unknown";
}

std::optional<Architecture> parse_architecture(std::string_view name) noexcept {
  if (name == "hybrid") return Architecture::hybrid;
  if (name == "rnn-only" || name == "rnn_only") return Architecture::rnn_only;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Config

ModelConfig ModelConfig::for_buses(std::size_t n_buses, std::size_t lag, Architecture architecture) {
  ModelConfig c;
  c.n_buses = n_buses;
  c.lag = lag;
  c.conv_filters = n_buses;
  c.dense1_width = 2 * n_buses;
  c.rnn_hidden = 2 * n_buses;
  c.architecture = architecture;
  return c;
}

void ModelConfig::validate() const {
  if (n_buses == 0) throw InvalidArgument("model needs at least one bus");
  if (lag < 2) throw InvalidArgument("lag must be at least 2");
  if (rnn_layers == 0 || rnn_hidden == 0) throw InvalidArgument("recurrent branch needs at least one non-empty layer");
  if (architecture == Architecture::hybrid) {
    if (conv_filters == 0) throw InvalidArgument("convolution needs at least one filter");
    if (dense1_width == 0) throw InvalidArgument("dense layer width must be positive");
    if (kernel == 0 || kernel > lag) throw InvalidArgument("kernel must lie in [1, lag]");
    if (pool == 0 || pool > lag - kernel + 1) throw InvalidArgument("pool width exceeds the feature map length");
  }
}

std::size_t ModelConfig::conv_positions() const { return layers::conv_output_cols(lag, kernel); }

std::size_t ModelConfig::pooled_positions() const { return layers::pool_output_cols(conv_positions(), pool); }

std::size_t ModelConfig::flat_width() const { return conv_filters * pooled_positions(); }

std::size_t ModelConfig::head_width() const noexcept {
  return architecture == Architecture::hybrid ? n_buses : 2 * n_buses;
}

// ---------------------------------------------------------------------------
// Parameter blocks

namespace {

template <typename Ref, typename Params>
std::vector<Ref> collect_blocks(Params& p) {
  std::vector<Ref> out;
  auto add_matrix = [&](std::string name, auto& m) { out.push_back(Ref{std::move(name), m.rows(), m.cols(), m.values()}); };
  auto add_vector = [&](std::string name, auto& v) {
    if (!v.empty()) out.push_back(Ref{std::move(name), 1, v.size(), std::span(v)});
  };
  if (!p.cnn.conv.weight.empty()) {
    add_matrix("conv.weight", p.cnn.conv.weight);
    add_vector("conv.bias", p.cnn.conv.bias);
    add_matrix("dense1.weight", p.cnn.dense1.weight);
    add_vector("dense1.bias", p.cnn.dense1.bias);
    add_matrix("dense2.weight", p.cnn.dense2.weight);
    add_vector("dense2.bias", p.cnn.dense2.bias);
  }
  for (std::size_t l = 0; l < p.rnn.layers.size(); ++l) {
    const std::string prefix = "rnn." + std::to_string(l) + ".";
    add_matrix(prefix + "input_weight", p.rnn.layers[l].input_weight);
    add_matrix(prefix + "recurrent_weight", p.rnn.layers[l].recurrent_weight);
    add_vector(prefix + "bias", p.rnn.layers[l].bias);
  }
  add_matrix("head.weight", p.rnn.head.weight);
  add_vector("head.bias", p.rnn.head.bias);
  return out;
}

}  // namespace

std::vector<BlockRef> parameter_blocks(ModelParameters& params) { return collect_blocks<BlockRef>(params); }

std::vector<ConstBlockRef> parameter_blocks(const ModelParameters& params) {
  return collect_blocks<ConstBlockRef>(params);
}

std::vector<double> flatten_parameters(const ModelParameters& params) {
  std::vector<double> flat;
  for (const auto& b : parameter_blocks(params)) flat.insert(flat.end(), b.values.begin(), b.values.end());
  return flat;
}

void assign_parameters(ModelParameters& params, std::span<const double> flat) {
  std::size_t offset = 0;
  for (auto& b : parameter_blocks(params)) {
    if (offset + b.values.size() > flat.size()) throw ShapeError("flat parameter vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), b.values.size(), b.values.begin());
    offset += b.values.size();
  }
  if (offset != flat.size()) throw ShapeError("flat parameter vector too long");
}

ModelParameters zeros_like(const ModelParameters& params) {
  ModelParameters z = params;
  for (auto& b : parameter_blocks(z)) std::fill(b.values.begin(), b.values.end(), 0.0);
  return z;
}

std::size_t param_count(const ModelConfig& config) {
  config.validate();
  const std::size_t n = config.n_buses;
  const std::size_t d = config.features();
  const std::size_t h = config.rnn_hidden;
  std::size_t total = 0;
  if (config.architecture == Architecture::hybrid) {
    total += config.conv_filters * (d * config.kernel + 1);
    total += config.dense1_width * config.flat_width() + (config.dense1_bias ? config.dense1_width : 0);
    total += n * config.dense1_width + n;
  }
  total += h * d + h * h + h;
  total += (config.rnn_layers - 1) * (h * h + h * h + h);
  total += config.head_width() * h + config.head_width();
  return total;
}

double init_bound(std::size_t fan_in, std::size_t fan_out) noexcept {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

DenseParams init_dense(Rng& rng, std::size_t out, std::size_t in, Activation act, bool bias) {
  return DenseParams{uniform_matrix(rng, out, in, init_bound(in, out)), bias ? Vector(out, 0.0) : Vector{}, act};
}

}  // namespace

ForecastModel init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x1417));
  ForecastModel model;
  model.config = config;
  model.normalizer = identity_normalizer(config.n_buses);

  const std::size_t d = config.features();
  if (config.architecture == Architecture::hybrid) {
    const std::size_t k = config.conv_filters;
    auto& cnn = model.params.cnn;
    cnn.conv = ConvParams{uniform_matrix(rng, k, d * config.kernel, init_bound(d * config.kernel, k * config.kernel)),
                          Vector(k, 0.0), config.kernel};
    cnn.dense1 = init_dense(rng, config.dense1_width, config.flat_width(), Activation::relu, config.dense1_bias);
    cnn.dense2 = init_dense(rng, config.n_buses, config.dense1_width, Activation::linear, true);
  }
  std::size_t in = d;
  const std::size_t h = config.rnn_hidden;
  for (std::size_t l = 0; l < config.rnn_layers; ++l) {
    model.params.rnn.layers.push_back(RnnLayerParams{uniform_matrix(rng, h, in, init_bound(in, h)),
                                                     uniform_matrix(rng, h, h, init_bound(h, h)), Vector(h, 0.0)});
    in = h;
  }
  model.params.rnn.head = init_dense(rng, config.head_width(), h, Activation::linear, true);
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

void check_window(const ModelConfig& config, const Matrix& window) {
  if (window.rows() != config.features() || window.cols() != config.lag) {
    throw ShapeError("window is " + window.shape_string() + ", model expects " + std::to_string(config.features()) +
                     "x" + std::to_string(config.lag));
  }
}

void add_into(std::span<double> acc, std::span<const double> g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

void add_dense(DenseParams& acc, const DenseParams& g) {
  add_into(acc.weight.values(), g.weight.values());
  if (acc.has_bias()) add_into(acc.bias, g.bias);
}

}  // namespace

ForwardPass forward(const ModelConfig& config, const ModelParameters& params, const Matrix& window) {
  check_window(config, window);
  ForwardPass pass;
  pass.output.reserve(config.features());
  if (config.architecture == Architecture::hybrid) {
    pass.conv = layers::conv1d_forward(window, params.cnn.conv);
    pass.pool = layers::maxpool_forward(pass.conv.output, config.pool);
    pass.flat = layers::flatten(pass.pool.output);
    pass.dense1 = layers::dense_forward(params.cnn.dense1, pass.flat);
    pass.dense2 = layers::dense_forward(params.cnn.dense2, pass.dense1.output);
    pass.output.insert(pass.output.end(), pass.dense2.output.begin(), pass.dense2.output.end());
  }
  pass.rnn = layers::stacked_rnn_forward(params.rnn.layers, window);
  pass.head = layers::dense_forward(params.rnn.head, pass.rnn.output);
  pass.output.insert(pass.output.end(), pass.head.output.begin(), pass.head.output.end());
  return pass;
}

void backward(const ModelConfig& config, const ModelParameters& params, const Matrix& window, const ForwardPass& pass,
              std::span<const double> output_grad, ModelParameters& grads) {
  if (output_grad.size() != config.features()) throw ShapeError("output gradient must have 2n entries");
  std::span<const double> head_grad = output_grad;

  if (config.architecture == Architecture::hybrid) {
    const std::size_t n = config.n_buses;
    head_grad = output_grad.subspan(n);
    const auto g2 = layers::dense_backward(params.cnn.dense2, pass.dense1.output, pass.dense2, output_grad.first(n));
    const auto g1 = layers::dense_backward(params.cnn.dense1, pass.flat, pass.dense1, g2.input);
    const auto pooled_grad = layers::unflatten(g1.input, pass.pool.output.rows(), pass.pool.output.cols());
    const auto conv_out_grad = layers::maxpool_backward(pass.pool, pooled_grad);
    const auto gc = layers::conv1d_backward(params.cnn.conv, window, pass.conv, conv_out_grad);
    add_dense(grads.cnn.dense2, g2.params);
    add_dense(grads.cnn.dense1, g1.params);
    add_into(grads.cnn.conv.weight.values(), gc.params.weight.values());
    add_into(grads.cnn.conv.bias, gc.params.bias);
  }

  const auto gh = layers::dense_backward(params.rnn.head, pass.rnn.output, pass.head, head_grad);
  add_dense(grads.rnn.head, gh.params);
  const auto gr = layers::stacked_rnn_backward(params.rnn.layers, window, pass.rnn, gh.input);
  for (std::size_t l = 0; l < gr.layers.size(); ++l) {
    add_into(grads.rnn.layers[l].input_weight.values(), gr.layers[l].input_weight.values());
    add_into(grads.rnn.layers[l].recurrent_weight.values(), gr.layers[l].recurrent_weight.values());
    add_into(grads.rnn.layers[l].bias, gr.layers[l].bias);
  }
}

Vector cnn_branch_forward(const ForecastModel& model, const Matrix& window) {
  if (model.config.architecture != Architecture::hybrid) throw InvalidArgument("model has no convolutional branch");
  check_window(model.config, window);
  const auto& cnn = model.params.cnn;
  const auto conv = layers::conv1d_forward(window, cnn.conv);
  const auto pool = layers::maxpool_forward(conv.output, model.config.pool);
  const auto d1 = layers::dense_forward(cnn.dense1, layers::flatten(pool.output));
  return layers::dense_forward(cnn.dense2, d1.output).output;
}

Vector rnn_branch_forward(const ForecastModel& model, const Matrix& window) {
  check_window(model.config, window);
  const auto rnn = layers::stacked_rnn_forward(model.params.rnn.layers, window);
  return layers::dense_forward(model.params.rnn.head, rnn.output).output;
}

StateVector forecast_next(const ForecastModel& model, const Matrix& raw_window) {
  check_window(model.config, raw_window);
  if (!all_finite(raw_window.values())) throw InvalidArgument("window contains non-finite values");
  const auto pass = forward(model.config, model.params, model.normalizer.apply_window(raw_window));
  return StateVector(model.normalizer.invert(pass.output));
}

// ---------------------------------------------------------------------------
// Persistence

std::string format_model(const ForecastModel& model) {
  const auto& c = model.config;
  std::string out = "gridcast-model\nformat_version " + std::to_string(kModelFormatVersion) + "\n";
  auto field = [&](const char* key, const std::string& value) { out += std::string("config ") + key + " " + value + "\n"; };
  field("architecture", to_string(c.architecture));
  field("n_buses", std::to_string(c.n_buses));
  field("lag", std::to_string(c.lag));
  field("conv_filters", std::to_string(c.conv_filters));
  field("kernel", std::to_string(c.kernel));
  field("pool", std::to_string(c.pool));
  field("dense1_width", std::to_string(c.dense1_width));
  field("dense1_bias", c.dense1_bias ? "1" : "0");
  field("rnn_layers", std::to_string(c.rnn_layers));
  field("rnn_hidden", std::to_string(c.rnn_hidden));

  auto values_line = [&](std::string prefix, std::span<const double> values) {
    out += prefix;
    for (double v : values) {
      out += ' ';
      out += io::format_hex(v);
    }
    out += '\n';
  };
  values_line("normalizer mean", model.normalizer.mean);
  values_line("normalizer stddev", model.normalizer.stddev);
  out += "normalizer constant " + std::to_string(model.normalizer.constant.size());
  for (auto idx : model.normalizer.constant) out += " " + std::to_string(idx);
  out += '\n';
  for (const auto& b : parameter_blocks(model.params)) {
    values_line("param " + b.name + " " + std::to_string(b.rows) + " " + std::to_string(b.cols), b.values);
  }
  out += "end\n";
  return out;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

std::size_t parse_count(std::string_view token, const std::string& what) {
  std::size_t v = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw FormatError("bad " + what + " '" + std::string(token) + "'");
  return v;
}

Vector parse_values(std::span<const std::string_view> tokens, const std::string& what) {
  Vector out;
  out.reserve(tokens.size());
  for (auto t : tokens) {
    const auto v = io::parse_double(t);
    if (!v || !std::isfinite(*v)) throw FormatError("bad number '" + std::string(t) + "' in " + what);
    out.push_back(*v);
  }
  return out;
}

}  // namespace

ForecastModel parse_model(std::string_view text) {
  std::vector<std::vector<std::string_view>> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto tokens = split_ws(text.substr(start, end - start));
    if (!tokens.empty()) lines.push_back(std::move(tokens));
    start = end + 1;
  }

  if (lines.empty() || lines[0].size() != 1 || lines[0][0] != "gridcast-model") {
    throw FormatError("not a gridcast model file (bad header)");
  }
  if (lines.size() < 2 || lines[1].size() != 2 || lines[1][0] != "format_version") {
    if (lines.size() < 2) throw TruncatedError("model file ends after the header");
    throw FormatError("missing format_version line");
  }
  const std::size_t version = parse_count(lines[1][1], "format version");
  if (version != static_cast<std::size_t>(kModelFormatVersion)) {
    throw VersionError("model format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  if (lines.back().size() != 1 || lines.back()[0] != "end") throw TruncatedError("model file has no end marker");

  ForecastModel model;
  auto& c = model.config;
  std::map<std::string, std::string_view, std::less<>> config_fields;
  std::map<std::string, Vector, std::less<>> normalizer_fields;
  std::vector<std::size_t> constant;
  struct ParsedBlock {
    std::string name;
    std::size_t rows, cols;
    Vector values;
  };
  std::vector<ParsedBlock> blocks;

  for (std::size_t i = 2; i + 1 < lines.size(); ++i) {
    const auto& tok = lines[i];
    if (tok[0] == "config") {
      if (tok.size() != 3) throw FormatError("config line needs a key and a value");
      config_fields[std::string(tok[1])] = tok[2];
    } else if (tok[0] == "normalizer" && tok.size() >= 2 && tok[1] == "constant") {
      if (tok.size() < 3) throw FormatError("normalizer constant line needs a count");
      const std::size_t count = parse_count(tok[2], "constant feature count");
      if (tok.size() != 3 + count) throw ShapeError("normalizer constant list length disagrees with its count");
      for (std::size_t j = 0; j < count; ++j) constant.push_back(parse_count(tok[3 + j], "constant feature index"));
    } else if (tok[0] == "normalizer" && tok.size() >= 2) {
      normalizer_fields[std::string(tok[1])] =
          parse_values(std::span(tok).subspan(2), "normalizer " + std::string(tok[1]));
    } else if (tok[0] == "param") {
      if (tok.size() < 4) throw FormatError("param line needs a name and dimensions");
      ParsedBlock b{std::string(tok[1]), parse_count(tok[2], "rows"), parse_count(tok[3], "cols"), {}};
      b.values = parse_values(std::span(tok).subspan(4), "param " + b.name);
      if (b.values.size() != b.rows * b.cols) {
        throw ShapeError("param " + b.name + " declares " + std::to_string(b.rows) + "x" + std::to_string(b.cols) +
                         " but holds " + std::to_string(b.values.size()) + " values");
      }
      blocks.push_back(std::move(b));
    } else {
      throw FormatError("unrecognised line starting with '" + std::string(tok[0]) + "'");
    }
  }

  auto count_field = [&](const char* key) -> std::size_t {
    const auto it = config_fields.find(key);
    if (it == config_fields.end()) throw FormatError(std::string("missing config field ") + key);
    return parse_count(it->second, key);
  };
  const auto arch_it = config_fields.find("architecture");
  if (arch_it == config_fields.end()) throw FormatError("missing config field architecture");
  const auto arch = parse_architecture(arch_it->second);
  if (!arch) throw FormatError("unknown architecture '" + std::string(arch_it->second) + "'");
  c.architecture = *arch;
  c.n_buses = count_field("n_buses");
  c.lag = count_field("lag");
  c.conv_filters = count_field("conv_filters");
  c.kernel = count_field("kernel");
  c.pool = count_field("pool");
  c.dense1_width = count_field("dense1_width");
  c.dense1_bias = count_field("dense1_bias") != 0;
  c.rnn_layers = count_field("rnn_layers");
  c.rnn_hidden = count_field("rnn_hidden");
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("invalid config: ") + e.what());
  }

  for (const char* key : {"mean", "stddev"}) {
    const auto it = normalizer_fields.find(key);
    if (it == normalizer_fields.end()) throw FormatError(std::string("missing normalizer ") + key);
    if (it->second.size() != c.features()) {
      throw ShapeError(std::string("normalizer ") + key + " has " + std::to_string(it->second.size()) +
                       " entries for " + std::to_string(c.features()) + " features");
    }
  }
  model.normalizer.mean = normalizer_fields["mean"];
  model.normalizer.stddev = normalizer_fields["stddev"];
  model.normalizer.constant = std::move(constant);
  for (double s : model.normalizer.stddev) {
    if (!(s > 0.0)) throw FormatError("normalizer stddev must be positive");
  }
  for (auto idx : model.normalizer.constant) {
    if (idx >= c.features()) throw ShapeError("normalizer constant index out of range");
  }

  model.params = init_model(c, 0).params;
  auto expected = parameter_blocks(model.params);
  if (expected.size() != blocks.size()) {
    throw ShapeError("model file holds " + std::to_string(blocks.size()) + " parameter blocks, config implies " +
                     std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].name != expected[i].name || blocks[i].rows != expected[i].rows || blocks[i].cols != expected[i].cols) {
      throw ShapeError("parameter block " + std::to_string(i) + " is " + blocks[i].name + " " +
                       std::to_string(blocks[i].rows) + "x" + std::to_string(blocks[i].cols) + ", config implies " +
                       expected[i].name + " " + std::to_string(expected[i].rows) + "x" +
                       std::to_string(expected[i].cols));
    }
    std::copy(blocks[i].values.begin(), blocks[i].values.end(), expected[i].values.begin());
  }
  return model;
}

void save_model(const ForecastModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_model(model));
}

ForecastModel load_model(const std::filesystem::path& path) { return parse_model(io::read_file(path)); }

}  // namespace gridcast
