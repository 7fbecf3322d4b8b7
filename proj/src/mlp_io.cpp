#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <iterator>
#include <ostream>

#include "binary_io.hpp"
#include "sasv/error.hpp"
#include "sasv/fusion_mlp.hpp"
#include "text_util.hpp"

namespace sasv {

namespace {

constexpr char kModelMagic[8] = {'S', 'A', 'S', 'V', 'M', 'L', 'P', '1'};

}  // namespace

std::string MlpModel::get(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  return fallback;
}

double MlpModel::leaky_slope() const {
  const std::string v = get("leaky_slope");
  if (v.empty()) return kDefaultLeakySlope;
  double slope = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), slope);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(slope))
    throw InputError("model metadata: bad leaky_slope '" + v + "'");
  return slope;
}

Metadata describe_training(const TrainConfig& config, const ScheduleConfig& resolved,
                           const MlpShape& shape) {
  std::string hidden;
  for (std::size_t i = 0; i < shape.hidden.size(); ++i) {
    if (i) hidden += ',';
    hidden += std::to_string(shape.hidden[i]);
  }
  return {
      {"spk_dim", std::to_string(shape.spk_dim)},
      {"cm_dim", std::to_string(shape.cm_dim)},
      {"hidden", hidden},
      {"leaky_slope", format_score(config.leaky_slope)},
      {"seed", std::to_string(config.seed)},
      {"batch_size", std::to_string(config.batch_size)},
      {"epochs", std::to_string(config.epochs)},
      {"lr_max", format_score(resolved.lr_max)},
      {"lr_min", format_score(resolved.lr_min)},
      {"period", std::to_string(resolved.period)},
      {"restart_mult", std::to_string(resolved.restart_mult)},
      {"adam_beta1", format_score(config.adam.beta1)},
      {"adam_beta2", format_score(config.adam.beta2)},
      {"adam_epsilon", format_score(config.adam.epsilon)},
      {"loss", "softmax_cross_entropy"},
  };
}

void write_model(std::ostream& out, const MlpModel& model) {
  out.write(kModelMagic, sizeof kModelMagic);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.layers.size()));
  for (const DenseLayer& l : model.params.layers) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.fan_in));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.fan_out));
    for (double w : l.weights) detail::put_f64(out, w);
    for (double b : l.bias) detail::put_f64(out, b);
  }
  for (const auto& [k, v] : model.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw InputError("model metadata entries cannot contain '=' in keys or newlines");
    out << k << '=' << v << '\n';
  }
}

MlpModel read_model(std::istream& in, const std::string& source_name) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw InputError(source_name + ": not a model file (bad magic)");
  std::uint32_t n_layers = 0;
  if (!detail::get_le(in, n_layers) || n_layers == 0)
    throw InputError(source_name + ": corrupt model header");

  MlpModel model;
  std::size_t prev_out = 0;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::string where = source_name + ": layer " + std::to_string(l + 1);
    std::uint32_t rows = 0, cols = 0;
    if (!detail::get_le(in, rows) || !detail::get_le(in, cols) || rows == 0 || cols == 0)
      throw InputError(where + ": corrupt shape");
    if (l > 0 && rows != prev_out) throw InputError(where + ": shape does not chain");
    DenseLayer layer{rows, cols, std::vector<double>(std::size_t{rows} * cols),
                     std::vector<double>(cols)};
    for (double& w : layer.weights)
      if (!detail::get_f64(in, w)) throw InputError(where + ": truncated weights");
    for (double& b : layer.bias)
      if (!detail::get_f64(in, b)) throw InputError(where + ": truncated biases");
    prev_out = cols;
    model.params.layers.push_back(std::move(layer));
  }
  if (prev_out != 2) throw InputError(source_name + ": output layer must have 2 units");
  if (!model.params.all_finite()) throw InputError(source_name + ": non-finite parameters");

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError(source_name + ": metadata line " + std::to_string(lineno) +
                       " is not key=value");
    model.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return model;
}

void save_model(const std::filesystem::path& path, const MlpModel& model) {
  auto out = detail::open_output(path, std::ios::out | std::ios::binary);
  write_model(out, model);
  detail::finish_output(out, path);
}

MlpModel load_model(const std::filesystem::path& path) {
  auto in = detail::open_input(path, std::ios::in | std::ios::binary);
  return read_model(in, path.string());
}

void write_loss_trace(std::ostream& out, std::span<const LossTraceEntry> trace) {
  out << "step,lr,loss\n";
  for (const LossTraceEntry& e : trace)
    out << e.step << ',' << format_score(e.lr) << ',' << format_score(e.loss) << '\n';
}

}  // namespace sasv
