#pragma once

#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "sasv/metrics.hpp"
#include "sasv/scoring.hpp"

namespace sasv {

enum class ThresholdSource { DevEerPoint, Manual };

struct Thresholds {
  double tau_cm = 0.0;
  double tau_asv = 0.0;
  ThresholdSource provenance = ThresholdSource::Manual;
};

Thresholds manual_thresholds(double tau_cm, double tau_asv);

/// EER-point thresholds from development data: the CM task separates bona fide
/// trials (target and non-target) from spoofs, the ASV task separates targets
/// from non-targets.
Thresholds pick_thresholds(const ScoreSet& dev_cm, const ScoreSet& dev_asv);

enum class Decision { Reject, Accept };

/// CM gate followed by ASV; accept iff cm >= tau_cm and asv >= tau_asv.
inline Decision decide(double cm, double asv, const Thresholds& th) {
  if (!(cm >= th.tau_cm)) return Decision::Reject;
  return asv >= th.tau_asv ? Decision::Accept : Decision::Reject;
}

/// Applies decide() to aligned CM and ASV score sets, in parallel over trials.
std::vector<Decision> cascade_decisions(const ScoreSet& cm, const ScoreSet& asv,
                                        const Thresholds& th);

namespace reference {
std::vector<Decision> cascade_decisions(const ScoreSet& cm, const ScoreSet& asv,
                                        const Thresholds& th);
}  // namespace reference

struct ConfusionCounts {
  std::size_t target_accepted = 0;
  std::size_t target_rejected = 0;
  std::size_t nontarget_accepted = 0;
  std::size_t nontarget_rejected = 0;
  std::size_t spoof_accepted = 0;
  std::size_t spoof_rejected = 0;
};

ConfusionCounts count_decisions(std::span<const Trial> trials, std::span<const Decision> decisions);

struct HterResult {
  double hter = 0.0;
  double far = 0.0;
  double frr = 0.0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
};

/// Half-total error rate of a subset from confusion counts. Computed from an
/// integer numerator with a single division.
HterResult hter(const ConfusionCounts& counts, Subset which);

HterResult hter(std::span<const Trial> trials, std::span<const Decision> decisions, Subset which);

struct HterReport {
  Thresholds thresholds;
  ConfusionCounts counts;
  HterResult sv;
  HterResult spf;
  HterResult sasv;
};

HterReport cascade_report(const ScoreSet& cm, const ScoreSet& asv, const Thresholds& th);

void write_hter_report(std::ostream& out, const HterReport& report);

}  // namespace sasv
