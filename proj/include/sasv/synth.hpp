#pragma once

#include <cstdint>
#include <filesystem>

#include "sasv/embeddings.hpp"
#include "sasv/fusion_mlp.hpp"
#include "sasv/protocol.hpp"

namespace sasv {

/// Synthetic corpus parameters. Counts apply per partition: train, dev and
/// eval each get n_speakers disjoint speakers.
struct SynthConfig {
  std::size_t n_speakers = 20;
  std::size_t utts_per_speaker = 10;
  std::size_t enrol_per_speaker = 3;  // dev/eval only; the rest are test utterances
  std::size_t n_attacks = 3;
  std::size_t spoofs_per_attack_per_speaker = 5;
  std::size_t nontargets_per_model = 20;  // 0 = every other speaker's test utterance
  std::size_t spk_dim = 192;
  std::size_t cm_dim = 160;
  // Norm scale of the speaker noise around each unit centroid.
  double speaker_spread = 0.75;
  // Additional speaker-space noise on spoofed utterances.
  double spoof_extra_spread = 0.1;
  // Distance between bona fide and spoof means on the bona fide CM logit.
  double spoof_cm_separation = 6.0;
  // Per-component noise of the CM embeddings.
  double cm_embedding_noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthCorpus {
  EmbeddingStore spk;        // spk_dim, every utterance
  EmbeddingStore cm;         // cm_dim CM embeddings, every utterance
  EmbeddingStore cm_logits;  // (bona fide, spoof) logits, every utterance
  TrainTable train;
  ProtocolSet dev;
  ProtocolSet eval;
};

/// Speakers are random unit centroids; bona fide speaker embeddings add
/// isotropic Gaussian noise of expected norm speaker_spread. Spoofs copy the
/// attacked speaker's centroid with the same noise plus spoof_extra_spread.
/// The bona fide CM logit is N(+sep/2, 1) for bona fide and N(-sep/2, 1) for
/// spoofed speech, with a spoof logit of 0; the CM embedding places that
/// latent value along a fixed random direction plus isotropic noise.
SynthCorpus generate(const SynthConfig& config);

struct CorpusPaths {
  std::filesystem::path spk_emb;
  std::filesystem::path cm_emb;
  std::filesystem::path cm_logits;
  std::filesystem::path train_table;
  std::filesystem::path dev_trials;
  std::filesystem::path dev_enrolment;
  std::filesystem::path eval_trials;
  std::filesystem::path eval_enrolment;
};

CorpusPaths corpus_paths(const std::filesystem::path& dir, StoreFormat format);

/// Writes every corpus file into `dir` (created if needed).
CorpusPaths save_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus,
                        StoreFormat format);

}  // namespace sasv
