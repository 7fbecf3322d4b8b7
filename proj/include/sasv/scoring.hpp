#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sasv/embeddings.hpp"
#include "sasv/protocol.hpp"

namespace sasv {

enum class ScoreKind { ASV, CM, Fused };

/// Scores aligned with trials.
///
/// Range invariants by kind: ASV in [-1, 1], CM in [0, 1]. Fused scores only
/// have to be finite; their range depends on the fusion that produced them.
struct ScoreSet {
  std::vector<Trial> trials;
  std::vector<double> scores;
  ScoreKind kind = ScoreKind::Fused;

  std::size_t size() const { return scores.size(); }

  /// Throws InputError when an invariant does not hold.
  void validate() const;

  friend bool operator==(const ScoreSet&, const ScoreSet&) = default;
};

std::string_view score_kind_name(ScoreKind kind);

/// Cosine similarity clamped to [-1, 1]. Zero-norm inputs are rejected.
double cosine_score(std::span<const double> enrol, std::span<const double> test);

/// Softmax probability of the bona fide class from (bona fide, spoof) logits.
double cm_score(double bonafide_logit, double spoof_logit);

/// CM score from a store record: a 1-d record is taken as a precomputed score
/// in [0, 1]; a 2-d record holds (bona fide, spoof) logits.
double cm_record_score(std::span<const float> record);

/// B1 fusion. asv must lie in [-1, 1] and cm in [0, 1]. The baseline uses
/// cm_weight == 1.
double score_sum(double asv, double cm, double cm_weight = 1.0);

enum class ScoreMode { ASV, CM, B1 };

ScoreMode parse_score_mode(std::string_view name);

struct ScoringInputs {
  const EmbeddingStore* speaker = nullptr;  // required for ASV and B1
  const EmbeddingStore* cm = nullptr;       // required for CM and B1
};

struct ScoringOptions {
  double cm_weight = 1.0;
  bool length_normalize_enrol = false;
};

/// Scores every trial in protocol order. Enrolment means are computed once per
/// model and trials are scored in parallel; output does not depend on the
/// thread count. Errors name the 1-based trial index.
ScoreSet score_protocol(const ProtocolSet& protocol, const ScoringInputs& inputs, ScoreMode mode,
                        const ScoringOptions& options = {});

namespace reference {

/// Serial scoring loop, recomputing each enrolment mean per trial. Produces
/// bit-identical results to sasv::score_protocol.
ScoreSet score_protocol(const ProtocolSet& protocol, const ScoringInputs& inputs, ScoreMode mode,
                        const ScoringOptions& options = {});

}  // namespace reference

std::string format_score(double score);

void write_scores(std::ostream& out, const ScoreSet& scores);
ScoreSet read_scores(std::istream& in, const std::string& source_name, ScoreKind kind);

void save_score_file(const std::filesystem::path& path, const ScoreSet& scores);
ScoreSet load_score_file(const std::filesystem::path& path, ScoreKind kind = ScoreKind::Fused);

}  // namespace sasv
