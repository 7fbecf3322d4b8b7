#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sasv/embeddings.hpp"
#include "sasv/protocol.hpp"
#include "sasv/rng.hpp"
#include "sasv/scoring.hpp"

namespace sasv {

/// Fully connected layer. Weights are fan_in x fan_out, row-major, so that
/// z[j] = bias[j] + sum_i x[i] * weights[i * fan_out + j].
struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  double& w(std::size_t i, std::size_t j) { return weights[i * fan_out + j]; }
  double w(std::size_t i, std::size_t j) const { return weights[i * fan_out + j]; }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Parameters of the fusion perceptron: LeakyReLU hidden layers and a
/// two-unit affine output (class 0 = target, class 1 = non-target or spoof).
struct MlpParams {
  std::vector<DenseLayer> layers;

  /// widths = {input, hidden..., 2}.
  static MlpParams zeros(std::span<const std::size_t> widths);
  /// Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
  static MlpParams glorot(std::span<const std::size_t> widths, Rng& rng);

  std::vector<std::size_t> widths() const;
  std::size_t input_width() const { return layers.empty() ? 0 : layers.front().fan_in; }
  std::size_t parameter_count() const;

  /// W1, b1, W2, b2, ... in layer order.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool all_finite() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

inline constexpr std::size_t kTargetClass = 0;
inline constexpr double kDefaultLeakySlope = 0.01;

struct MlpShape {
  std::size_t spk_dim = 192;
  std::size_t cm_dim = 160;
  std::vector<std::size_t> hidden{256, 128, 64};

  /// {2 * spk_dim + cm_dim, hidden..., 2}
  std::vector<std::size_t> widths() const;
};

/// Input vector: enrolment speaker, test speaker, test CM embedding.
std::vector<double> fusion_input(std::span<const double> enrol_spk, std::span<const double> test_spk,
                                 std::span<const double> test_cm);

struct ForwardResult {
  std::array<double, 2> logits{};
  std::array<double, 2> probs{};
  double target_prob() const { return probs[kTargetClass]; }
};

ForwardResult forward(const MlpParams& params, std::span<const double> input,
                      double leaky_slope = kDefaultLeakySlope);

ForwardResult forward(const MlpParams& params, std::span<const double> enrol_spk,
                      std::span<const double> test_spk, std::span<const double> test_cm,
                      double leaky_slope = kDefaultLeakySlope);

enum class PairLabel { Target, NonTargetOrSpoof };

inline std::size_t class_index(PairLabel label) {
  return label == PairLabel::Target ? kTargetClass : 1 - kTargetClass;
}

struct Sample {
  std::vector<double> input;
  PairLabel label = PairLabel::Target;
};

struct LossAndGrad {
  double loss = 0.0;
  MlpParams grads;
};

/// Mean softmax cross-entropy over the batch and its gradient.
LossAndGrad loss_and_grad(const MlpParams& params, std::span<const Sample> batch,
                          double leaky_slope = kDefaultLeakySlope);

double batch_loss(const MlpParams& params, std::span<const Sample> batch,
                  double leaky_slope = kDefaultLeakySlope);

// ---------------------------------------------------------------------------
// Optimisation

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step = 0;
  double lr = 0.0;

  static OptimState zeros_like(const MlpParams& params);
};

/// One Adam update of a single tensor with bias correction. `step` is the
/// 1-based step number after increment.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t step, double lr, const AdamConfig& config = {});

/// Adam over every tensor. Throws NumericError on a non-finite gradient.
void adam_step(MlpParams& params, const MlpParams& grads, OptimState& state, double lr,
               const AdamConfig& config = {});

/// Cosine annealing with warm restarts. The first cycle lasts `period` steps;
/// each later cycle is `restart_mult` times longer than the previous one.
struct ScheduleConfig {
  double lr_max = 0.1;
  double lr_min = 0.001;
  std::uint64_t period = 1;
  std::uint64_t restart_mult = 1;

  void validate() const;
};

double lr_schedule(std::uint64_t step, const ScheduleConfig& config);

// ---------------------------------------------------------------------------
// Training data

/// One row of the training table: a bona fide utterance of `speaker`, or a
/// spoof (source = attack id) targeting `speaker`.
struct TrainUtterance {
  std::string speaker;
  std::string utt;
  std::string source;

  bool bonafide() const { return source == kBonafide; }
  friend bool operator==(const TrainUtterance&, const TrainUtterance&) = default;
};

using TrainTable = std::vector<TrainUtterance>;

TrainTable parse_train_table(std::istream& in, const std::string& source_name);
TrainTable load_train_table(const std::filesystem::path& path);
void write_train_table(std::ostream& out, const TrainTable& table);
void save_train_table(const std::filesystem::path& path, const TrainTable& table);

struct TrainPair {
  std::string enrol_utt;
  std::string test_utt;
  PairLabel label = PairLabel::Target;

  friend bool operator==(const TrainPair&, const TrainPair&) = default;
};

/// For every bona fide anchor utterance, in table order: a target pair with
/// another utterance of the same speaker, a non-target pair with a bona fide
/// utterance of another speaker, and a spoof pair with a spoof of the same
/// speaker. Categories that cannot be formed for an anchor are skipped.
std::vector<TrainPair> build_train_pairs(const TrainTable& table, Rng& rng);
std::vector<TrainPair> build_train_pairs(const TrainTable& table, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training and inference

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  // period == 0 means one cycle per epoch.
  ScheduleConfig schedule{0.1, 0.001, 0, 1};
  std::vector<std::size_t> hidden{256, 128, 64};
  double leaky_slope = kDefaultLeakySlope;
  AdamConfig adam;
};

struct LossTraceEntry {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  MlpParams params;
  std::vector<LossTraceEntry> trace;
  ScheduleConfig schedule;  // with the period resolved
  double train_accuracy = 0.0;
};

/// Materialises pair inputs from the stores.
std::vector<Sample> make_samples(const EmbeddingStore& spk, const EmbeddingStore& cm,
                                 std::span<const TrainPair> pairs);

/// Fraction of samples whose arg-max class matches the label.
double accuracy(const MlpParams& params, std::span<const Sample> samples,
                double leaky_slope = kDefaultLeakySlope);

/// Mini-batch training. Initialisation and per-epoch shuffles draw from `rng`
/// in that order. Single-threaded, so results are bit-reproducible. Throws
/// NumericError naming the step when the loss becomes non-finite.
TrainResult train(const EmbeddingStore& spk, const EmbeddingStore& cm,
                  std::span<const TrainPair> pairs, const TrainConfig& config, Rng& rng);
TrainResult train(const EmbeddingStore& spk, const EmbeddingStore& cm,
                  std::span<const TrainPair> pairs, const TrainConfig& config);

/// Target probability per trial, enrolment embeddings averaged per model.
/// Parallel over trials.
ScoreSet score_b2(const MlpParams& params, const ProtocolSet& protocol, const EmbeddingStore& spk,
                  const EmbeddingStore& cm, double leaky_slope = kDefaultLeakySlope);

namespace reference {
ScoreSet score_b2(const MlpParams& params, const ProtocolSet& protocol, const EmbeddingStore& spk,
                  const EmbeddingStore& cm, double leaky_slope = kDefaultLeakySlope);
}  // namespace reference

// ---------------------------------------------------------------------------
// Model file

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct MlpModel {
  MlpParams params;
  Metadata metadata;

  /// Value of `key`, or `fallback` when absent.
  std::string get(const std::string& key, const std::string& fallback = {}) const;
  double leaky_slope() const;

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

Metadata describe_training(const TrainConfig& config, const ScheduleConfig& resolved,
                           const MlpShape& shape);

void write_model(std::ostream& out, const MlpModel& model);
MlpModel read_model(std::istream& in, const std::string& source_name);
void save_model(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_model(const std::filesystem::path& path);

void write_loss_trace(std::ostream& out, std::span<const LossTraceEntry> trace);

}  // namespace sasv
