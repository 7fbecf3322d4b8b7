#include "sasv/fusion_mlp.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <istream>
#include <numbers>
#include <ostream>
#include <unordered_map>

#include "sasv/error.hpp"
#include "text_util.hpp"

namespace sasv {

// ---------------------------------------------------------------------------
// Parameters

namespace {

void check_widths(std::span<const std::size_t> widths) {
  if (widths.size() < 2) throw InputError("MLP needs at least an input and an output width");
  if (widths.back() != 2) throw InputError("MLP output layer must have exactly 2 units");
  for (std::size_t w : widths)
    if (w == 0) throw InputError("MLP layer widths must be positive");
}

}  // namespace

MlpParams MlpParams::zeros(std::span<const std::size_t> widths) {
  check_widths(widths);
  MlpParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    p.layers.push_back(DenseLayer{widths[l], widths[l + 1],
                                  std::vector<double>(widths[l] * widths[l + 1], 0.0),
                                  std::vector<double>(widths[l + 1], 0.0)});
  return p;
}

MlpParams MlpParams::glorot(std::span<const std::size_t> widths, Rng& rng) {
  MlpParams p = zeros(widths);
  for (DenseLayer& layer : p.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.fan_in + layer.fan_out));
    for (double& w : layer.weights) w = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return p;
}

std::vector<std::size_t> MlpParams::widths() const {
  std::vector<std::size_t> w;
  if (layers.empty()) return w;
  w.push_back(layers.front().fan_in);
  for (const DenseLayer& l : layers) w.push_back(l.fan_out);
  return w;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<std::span<double>> MlpParams::tensors() {
  std::vector<std::span<double>> out;
  for (DenseLayer& l : layers) {
    out.emplace_back(l.weights);
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> MlpParams::tensors() const {
  std::vector<std::span<const double>> out;
  for (const DenseLayer& l : layers) {
    out.emplace_back(l.weights);
    out.emplace_back(l.bias);
  }
  return out;
}

bool MlpParams::all_finite() const {
  for (auto t : tensors())
    for (double v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

std::vector<std::size_t> MlpShape::widths() const {
  std::vector<std::size_t> w{2 * spk_dim + cm_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(2);
  return w;
}

std::vector<double> fusion_input(std::span<const double> enrol_spk, std::span<const double> test_spk,
                                 std::span<const double> test_cm) {
  if (enrol_spk.size() != test_spk.size())
    throw InputError("fusion input: enrolment and test speaker embeddings differ in dimension");
  std::vector<double> x;
  x.reserve(enrol_spk.size() + test_spk.size() + test_cm.size());
  x.insert(x.end(), enrol_spk.begin(), enrol_spk.end());
  x.insert(x.end(), test_spk.begin(), test_spk.end());
  x.insert(x.end(), test_cm.begin(), test_cm.end());
  return x;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

// Pre-activations of every layer for one sample; activations are recomputed
// from them on the way back.
struct Trace {
  std::vector<std::vector<double>> pre;   // z_l, l = 1..L
  std::vector<std::vector<double>> post;  // a_l, a_0 = input
};

inline double leaky(double z, double slope) { return z > 0.0 ? z : slope * z; }
inline double leaky_grad(double z, double slope) { return z > 0.0 ? 1.0 : slope; }

void affine(const DenseLayer& layer, std::span<const double> x, std::vector<double>& z) {
  z.assign(layer.bias.begin(), layer.bias.end());
  for (std::size_t i = 0; i < layer.fan_in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = layer.weights.data() + i * layer.fan_out;
    for (std::size_t j = 0; j < layer.fan_out; ++j) z[j] += xi * row[j];
  }
}

void run_forward(const MlpParams& params, std::span<const double> input, double slope, Trace& t) {
  if (params.layers.empty()) throw InputError("forward: network has no layers");
  if (input.size() != params.input_width())
    throw InputError("forward: input width " + std::to_string(input.size()) +
                     " does not match network input width " +
                     std::to_string(params.input_width()));
  const std::size_t n_layers = params.layers.size();
  t.pre.resize(n_layers);
  t.post.resize(n_layers);
  t.post[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < n_layers; ++l) {
    affine(params.layers[l], t.post[l], t.pre[l]);
    if (l + 1 < n_layers) {
      t.post[l + 1].resize(t.pre[l].size());
      for (std::size_t j = 0; j < t.pre[l].size(); ++j)
        t.post[l + 1][j] = leaky(t.pre[l][j], slope);
    }
  }
}

ForwardResult softmax2(std::span<const double> logits) {
  ForwardResult r;
  r.logits = {logits[0], logits[1]};
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  r.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
  return r;
}

// -log softmax(z)[c], evaluated stably.
double cross_entropy(std::span<const double> z, std::size_t c) {
  const double m = std::max(z[0], z[1]);
  return m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m)) - z[c];
}

}  // namespace

ForwardResult forward(const MlpParams& params, std::span<const double> input, double leaky_slope) {
  Trace t;
  run_forward(params, input, leaky_slope, t);
  return softmax2(t.pre.back());
}

ForwardResult forward(const MlpParams& params, std::span<const double> enrol_spk,
                      std::span<const double> test_spk, std::span<const double> test_cm,
                      double leaky_slope) {
  const auto x = fusion_input(enrol_spk, test_spk, test_cm);
  return forward(params, x, leaky_slope);
}

LossAndGrad loss_and_grad(const MlpParams& params, std::span<const Sample> batch,
                          double leaky_slope) {
  if (batch.empty()) throw InputError("loss_and_grad: empty batch");
  LossAndGrad out{0.0, MlpParams::zeros(params.widths())};
  const std::size_t n_layers = params.layers.size();
  Trace t;
  std::vector<double> delta, prev_delta;
  double loss_sum = 0.0;
  for (const Sample& s : batch) {
    run_forward(params, s.input, leaky_slope, t);
    const std::vector<double>& logits = t.pre.back();
    const std::size_t c = class_index(s.label);
    loss_sum += cross_entropy(logits, c);

    const ForwardResult fr = softmax2(logits);
    delta = {fr.probs[0], fr.probs[1]};
    delta[c] -= 1.0;
    for (std::size_t l = n_layers; l-- > 0;) {
      const DenseLayer& layer = params.layers[l];
      DenseLayer& g = out.grads.layers[l];
      const std::vector<double>& a = t.post[l];
      for (std::size_t j = 0; j < layer.fan_out; ++j) g.bias[j] += delta[j];
      for (std::size_t i = 0; i < layer.fan_in; ++i) {
        const double ai = a[i];
        double* grow = g.weights.data() + i * layer.fan_out;
        for (std::size_t j = 0; j < layer.fan_out; ++j) grow[j] += ai * delta[j];
      }
      if (l == 0) break;
      prev_delta.assign(layer.fan_in, 0.0);
      for (std::size_t i = 0; i < layer.fan_in; ++i) {
        const double* row = layer.weights.data() + i * layer.fan_out;
        double acc = 0.0;
        for (std::size_t j = 0; j < layer.fan_out; ++j) acc += row[j] * delta[j];
        prev_delta[i] = acc * leaky_grad(t.pre[l - 1][i], leaky_slope);
      }
      std::swap(delta, prev_delta);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss = loss_sum * inv;
  for (auto tensor : out.grads.tensors())
    for (double& v : tensor) v *= inv;
  return out;
}

double batch_loss(const MlpParams& params, std::span<const Sample> batch, double leaky_slope) {
  if (batch.empty()) throw InputError("batch_loss: empty batch");
  Trace t;
  double sum = 0.0;
  for (const Sample& s : batch) {
    run_forward(params, s.input, leaky_slope, t);
    sum += cross_entropy(t.pre.back(), class_index(s.label));
  }
  return sum / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Adam and the learning-rate schedule

OptimState OptimState::zeros_like(const MlpParams& params) {
  const auto w = params.widths();
  return OptimState{MlpParams::zeros(w), MlpParams::zeros(w), 0, 0.0};
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t step, double lr, const AdamConfig& config) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw InputError("adam_update: shape mismatch");
  if (step == 0) throw InputError("adam_update: step numbers start at 1");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < param.size(); ++k) {
    const double g = grad[k];
    if (!std::isfinite(g)) throw NumericError("adam_update: non-finite gradient");
    m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
    v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
    const double m_hat = m[k] / c1;
    const double v_hat = v[k] / c2;
    param[k] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

void adam_step(MlpParams& params, const MlpParams& grads, OptimState& state, double lr,
               const AdamConfig& config) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InputError("adam_step: learning rate must be > 0");
  if (grads.widths() != params.widths() || state.first_moment.widths() != params.widths() ||
      state.second_moment.widths() != params.widths())
    throw InputError("adam_step: shape mismatch");
  for (auto g : grads.tensors())
    for (double v : g)
      if (!std::isfinite(v))
        throw NumericError("adam_step: non-finite gradient at step " +
                           std::to_string(state.step + 1));
  ++state.step;
  state.lr = lr;
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) adam_update(p[k], g[k], m[k], v[k], state.step, lr, config);
}

void ScheduleConfig::validate() const {
  if (!(lr_min > 0.0) || !(lr_max > lr_min) || !std::isfinite(lr_max))
    throw InputError("schedule: need lr_max > lr_min > 0");
  if (period < 1) throw InputError("schedule: period must be >= 1");
  if (restart_mult < 1) throw InputError("schedule: restart_mult must be >= 1");
}

double lr_schedule(std::uint64_t step, const ScheduleConfig& config) {
  config.validate();
  std::uint64_t t = step;
  std::uint64_t length = config.period;
  if (config.restart_mult == 1) {
    t %= length;
  } else {
    while (t >= length) {
      t -= length;
      length *= config.restart_mult;
    }
  }
  const double phase = static_cast<double>(t) / static_cast<double>(length);
  const double lr = config.lr_min + 0.5 * (config.lr_max - config.lr_min) *
                                        (1.0 + std::cos(std::numbers::pi * phase));
  return std::clamp(lr, config.lr_min, config.lr_max);
}

// ---------------------------------------------------------------------------
// Training table and pair construction

TrainTable parse_train_table(std::istream& in, const std::string& source_name) {
  TrainTable table;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    const auto f = detail::split_ws(line);
    if (f.size() != 3)
      throw ParseError(source_name, lineno, "expected 3 fields, found " + std::to_string(f.size()));
    TrainUtterance u{std::string(f[0]), std::string(f[1]), std::string(f[2])};
    if (detail::to_lower(u.source) == kBonafide) u.source = kBonafide;
    if (!seen.emplace(u.utt, lineno).second)
      throw ParseError(source_name, lineno, "duplicate utterance id '" + u.utt + "'");
    table.push_back(std::move(u));
  }
  return table;
}

TrainTable load_train_table(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_train_table(in, path.string());
}

void write_train_table(std::ostream& out, const TrainTable& table) {
  for (const TrainUtterance& u : table) out << u.speaker << ' ' << u.utt << ' ' << u.source << '\n';
}

void save_train_table(const std::filesystem::path& path, const TrainTable& table) {
  auto out = detail::open_output(path);
  write_train_table(out, table);
  detail::finish_output(out, path);
}

std::vector<TrainPair> build_train_pairs(const TrainTable& table, Rng& rng) {
  struct SpeakerUtts {
    std::vector<std::size_t> bonafide;
    std::vector<std::size_t> spoof;
  };
  std::vector<std::string> speakers;
  std::unordered_map<std::string, SpeakerUtts> by_speaker;
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto [it, inserted] = by_speaker.try_emplace(table[i].speaker);
    if (inserted) speakers.push_back(table[i].speaker);
    (table[i].bonafide() ? it->second.bonafide : it->second.spoof).push_back(i);
  }
  std::vector<const std::string*> bonafide_speakers;
  for (const std::string& s : speakers)
    if (!by_speaker[s].bonafide.empty()) bonafide_speakers.push_back(&s);

  std::vector<TrainPair> pairs;
  std::size_t n_target = 0;
  for (std::size_t a = 0; a < table.size(); ++a) {
    const TrainUtterance& anchor = table[a];
    if (!anchor.bonafide()) continue;
    const SpeakerUtts& own = by_speaker[anchor.speaker];

    if (own.bonafide.size() >= 2) {
      // Uniform over the speaker's other bona fide utterances.
      std::size_t pos = std::find(own.bonafide.begin(), own.bonafide.end(), a) - own.bonafide.begin();
      std::size_t pick = rng.below(own.bonafide.size() - 1);
      if (pick >= pos) ++pick;
      pairs.push_back({anchor.utt, table[own.bonafide[pick]].utt, PairLabel::Target});
      ++n_target;
    }
    if (bonafide_speakers.size() >= 2) {
      std::size_t pick = rng.below(bonafide_speakers.size() - 1);
      std::size_t own_pos = 0;
      while (*bonafide_speakers[own_pos] != anchor.speaker) ++own_pos;
      if (pick >= own_pos) ++pick;
      const SpeakerUtts& other = by_speaker[*bonafide_speakers[pick]];
      const std::size_t utt = other.bonafide[rng.below(other.bonafide.size())];
      pairs.push_back({anchor.utt, table[utt].utt, PairLabel::NonTargetOrSpoof});
    }
    if (!own.spoof.empty()) {
      const std::size_t utt = own.spoof[rng.below(own.spoof.size())];
      pairs.push_back({anchor.utt, table[utt].utt, PairLabel::NonTargetOrSpoof});
    }
  }
  if (n_target == 0)
    throw InputError("degenerate training corpus: no speaker has two bona fide utterances");
  return pairs;
}

std::vector<TrainPair> build_train_pairs(const TrainTable& table, std::uint64_t seed) {
  Rng rng(seed);
  return build_train_pairs(table, rng);
}

// ---------------------------------------------------------------------------
// Training

std::vector<Sample> make_samples(const EmbeddingStore& spk, const EmbeddingStore& cm,
                                 std::span<const TrainPair> pairs) {
  std::vector<Sample> samples;
  samples.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const TrainPair& p = pairs[i];
    try {
      const Embedding enrol = spk.embedding(p.enrol_utt);
      const Embedding test = spk.embedding(p.test_utt);
      const Embedding test_cm = cm.embedding(p.test_utt);
      samples.push_back({fusion_input(enrol, test, test_cm), p.label});
    } catch (const LookupError& e) {
      throw LookupError("training pair " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return samples;
}

double accuracy(const MlpParams& params, std::span<const Sample> samples, double leaky_slope) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Sample& s : samples) {
    const ForwardResult r = forward(params, s.input, leaky_slope);
    const std::size_t predicted = r.probs[0] >= r.probs[1] ? 0 : 1;
    correct += predicted == class_index(s.label);
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainResult train(const EmbeddingStore& spk, const EmbeddingStore& cm,
                  std::span<const TrainPair> pairs, const TrainConfig& config, Rng& rng) {
  if (config.batch_size == 0) throw InputError("train: batch size must be positive");
  if (pairs.empty()) throw InputError("train: no training pairs");
  const std::vector<Sample> samples = make_samples(spk, cm, pairs);

  const MlpShape shape{spk.dim(), cm.dim(), config.hidden};
  TrainResult result;
  result.params = MlpParams::glorot(shape.widths(), rng);

  const std::size_t steps_per_epoch = (samples.size() + config.batch_size - 1) / config.batch_size;
  result.schedule = config.schedule;
  if (result.schedule.period == 0) result.schedule.period = steps_per_epoch;
  result.schedule.validate();

  OptimState state = OptimState::zeros_like(result.params);
  std::vector<std::size_t> order(samples.size());
  std::vector<Sample> batch;
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(samples[order[k]]);
      const double lr = lr_schedule(step, result.schedule);
      LossAndGrad lg = loss_and_grad(result.params, batch, config.leaky_slope);
      if (!std::isfinite(lg.loss))
        throw NumericError("training diverged at step " + std::to_string(step) +
                           " (non-finite loss)");
      try {
        adam_step(result.params, lg.grads, state, lr, config.adam);
      } catch (const NumericError&) {
        throw NumericError("training diverged at step " + std::to_string(step) +
                           " (non-finite gradient)");
      }
      result.trace.push_back({step, lr, lg.loss});
      ++step;
    }
  }
  if (!result.params.all_finite())
    throw NumericError("training diverged: non-finite parameters after step " + std::to_string(step));
  result.train_accuracy = accuracy(result.params, samples, config.leaky_slope);
  return result;
}

TrainResult train(const EmbeddingStore& spk, const EmbeddingStore& cm,
                  std::span<const TrainPair> pairs, const TrainConfig& config) {
  Rng rng(config.seed);
  return train(spk, cm, pairs, config, rng);
}

// ---------------------------------------------------------------------------
// Inference

namespace {

double b2_trial_score(const MlpParams& params, const Embedding& mean, const Trial& trial,
                      const EmbeddingStore& spk, const EmbeddingStore& cm, double slope) {
  const Embedding test = spk.embedding(trial.test_utt);
  const Embedding test_cm = cm.embedding(trial.test_utt);
  return forward(params, mean, test, test_cm, slope).target_prob();
}

const EnrolmentModel& enrolment_of(const ProtocolSet& protocol, const Trial& trial) {
  auto it = protocol.enrolments.find(trial.speaker_model);
  if (it == protocol.enrolments.end())
    throw LookupError("speaker model '" + trial.speaker_model + "' has no enrolment");
  return it->second;
}

template <typename Fn>
void in_trial(std::size_t index, Fn&& fn) {
  const std::string prefix = "trial " + std::to_string(index + 1) + ": ";
  try {
    fn();
  } catch (const LookupError& e) {
    throw LookupError(prefix + e.what());
  } catch (const InputError& e) {
    throw InputError(prefix + e.what());
  }
}

}  // namespace

ScoreSet score_b2(const MlpParams& params, const ProtocolSet& protocol, const EmbeddingStore& spk,
                  const EmbeddingStore& cm, double leaky_slope) {
  const std::size_t n = protocol.trials.size();
  ScoreSet out{protocol.trials, std::vector<double>(n, 0.0), ScoreKind::Fused};
  std::vector<std::exception_ptr> errors(n);
  const auto n_trials = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n_trials; ++i) {
    try {
      in_trial(i, [&] {
        const Trial& t = protocol.trials[i];
        const Embedding mean = mean_enrolment(spk, enrolment_of(protocol, t));
        out.scores[i] = b2_trial_score(params, mean, t, spk, cm, leaky_slope);
      });
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace reference {

ScoreSet score_b2(const MlpParams& params, const ProtocolSet& protocol, const EmbeddingStore& spk,
                  const EmbeddingStore& cm, double leaky_slope) {
  ScoreSet out{protocol.trials, {}, ScoreKind::Fused};
  for (std::size_t i = 0; i < protocol.trials.size(); ++i) {
    in_trial(i, [&] {
      const Trial& t = protocol.trials[i];
      const Embedding mean = mean_enrolment(spk, enrolment_of(protocol, t));
      out.scores.push_back(b2_trial_score(params, mean, t, spk, cm, leaky_slope));
    });
  }
  return out;
}

}  // namespace reference

}  // namespace sasv
