#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sasv/scoring.hpp"

namespace sasv {

// Decision convention used throughout: a positive trial with score < t is
// falsely rejected, a negative trial with score >= t is falsely accepted.

struct OperatingPoint {
  double threshold;
  double far;
  double frr;
  std::size_t false_rejects;  // positives below threshold
  std::size_t false_accepts;  // negatives at or above threshold
};

/// One operating point per distinct score, ascending, followed by a final
/// point just above the maximum score where everything is rejected.
std::vector<OperatingPoint> operating_points(std::span<const double> positives,
                                             std::span<const double> negatives);

struct EerResult {
  double eer = 0.0;  // fraction in [0, 1]
  double threshold = 0.0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
};

/// Equal error rate.
///
/// Sweeps the operating points and finds the first one with FRR >= FAR. When
/// the two are equal there, that value is the EER and the threshold is the
/// midpoint of the score interval realising it. Otherwise the crossing is
/// linearly interpolated between that point and the previous one, and the
/// threshold is interpolated the same way. The EER depends only on the ranks
/// of the scores.
EerResult eer(std::span<const double> positives, std::span<const double> negatives);

/// Brute-force reference: evaluates thresholds at -inf, +inf and every
/// midpoint between consecutive distinct scores, and returns (FAR + FRR) / 2
/// at the threshold minimising |FAR - FRR|. Quadratic; for tests only.
double eer_oracle(std::span<const double> positives, std::span<const double> negatives);

struct EvalReport {
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
  std::size_t n_spoof = 0;
  // Absent when the subset has no negatives.
  std::optional<EerResult> sv;
  std::optional<EerResult> spf;
  std::optional<EerResult> sasv;
  std::optional<EerResult> pooled_spf;
  std::map<std::string, EerResult> per_attack;
};

struct SplitScores {
  std::vector<double> positives;
  std::vector<double> negatives;
};

/// Target scores as positives; negatives per subset. A non-empty attack id
/// restricts spoof negatives to that attack.
SplitScores split_scores(const ScoreSet& scores, Subset which, std::string_view attack = {});

/// SV, SPF and SASV EERs plus the per-attack SPF breakdown, which is computed
/// in parallel over attacks. Throws InputError without target trials.
EvalReport evaluate(const ScoreSet& scores);

/// Human-readable table (percentages, two decimals) followed by a key=value
/// block with full-precision fractions.
void write_report(std::ostream& out, const EvalReport& report, std::string_view system_name);

/// Per-attack SPF-EER table with a final pooled row, plus key=value block.
void write_breakdown(std::ostream& out, const EvalReport& report, std::string_view system_name);

std::string format_percent(double fraction);

}  // namespace sasv
