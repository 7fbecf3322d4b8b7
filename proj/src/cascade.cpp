#include "sasv/cascade.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "sasv/error.hpp"

namespace sasv {

Thresholds manual_thresholds(double tau_cm, double tau_asv) {
  if (!std::isfinite(tau_cm) || !std::isfinite(tau_asv))
    throw InputError("thresholds must be finite");
  return {tau_cm, tau_asv, ThresholdSource::Manual};
}

Thresholds pick_thresholds(const ScoreSet& dev_cm, const ScoreSet& dev_asv) {
  dev_cm.validate();
  dev_asv.validate();
  std::vector<double> bonafide, spoof;
  for (std::size_t i = 0; i < dev_cm.size(); ++i)
    (dev_cm.trials[i].key.is_spoof() ? spoof : bonafide).push_back(dev_cm.scores[i]);
  if (bonafide.empty() || spoof.empty())
    throw InputError("pick_thresholds: CM development scores need bona fide and spoof trials");

  SplitScores asv = split_scores(dev_asv, Subset::SV);
  if (asv.positives.empty() || asv.negatives.empty())
    throw InputError("pick_thresholds: ASV development scores need target and non-target trials");

  return {eer(bonafide, spoof).threshold, eer(asv.positives, asv.negatives).threshold,
          ThresholdSource::DevEerPoint};
}

namespace {

void check_aligned(const ScoreSet& cm, const ScoreSet& asv) {
  if (cm.size() != asv.size())
    throw InputError("CM and ASV score sets differ in length (" + std::to_string(cm.size()) +
                     " vs " + std::to_string(asv.size()) + ")");
  for (std::size_t i = 0; i < cm.size(); ++i)
    if (!(cm.trials[i] == asv.trials[i]))
      throw InputError("CM and ASV score sets disagree at trial " + std::to_string(i + 1));
  for (double s : cm.scores)
    if (!std::isfinite(s)) throw InputError("non-finite CM score");
  for (double s : asv.scores)
    if (!std::isfinite(s)) throw InputError("non-finite ASV score");
}

}  // namespace

std::vector<Decision> cascade_decisions(const ScoreSet& cm, const ScoreSet& asv,
                                        const Thresholds& th) {
  check_aligned(cm, asv);
  std::vector<Decision> out(cm.size());
  const auto n = static_cast<std::ptrdiff_t>(cm.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = decide(cm.scores[i], asv.scores[i], th);
  return out;
}

namespace reference {

std::vector<Decision> cascade_decisions(const ScoreSet& cm, const ScoreSet& asv,
                                        const Thresholds& th) {
  check_aligned(cm, asv);
  std::vector<Decision> out;
  out.reserve(cm.size());
  for (std::size_t i = 0; i < cm.size(); ++i) {
    const bool cm_ok = cm.scores[i] >= th.tau_cm;
    const bool asv_ok = asv.scores[i] >= th.tau_asv;
    out.push_back(cm_ok && asv_ok ? Decision::Accept : Decision::Reject);
  }
  return out;
}

}  // namespace reference

ConfusionCounts count_decisions(std::span<const Trial> trials, std::span<const Decision> decisions) {
  if (trials.size() != decisions.size())
    throw InputError("count_decisions: trials and decisions differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const bool accepted = decisions[i] == Decision::Accept;
    switch (trials[i].key.kind()) {
      case TrialKind::Target:
        ++(accepted ? c.target_accepted : c.target_rejected);
        break;
      case TrialKind::NonTarget:
        ++(accepted ? c.nontarget_accepted : c.nontarget_rejected);
        break;
      case TrialKind::Spoof:
        ++(accepted ? c.spoof_accepted : c.spoof_rejected);
        break;
    }
  }
  return c;
}

HterResult hter(const ConfusionCounts& c, Subset which) {
  const std::size_t n_pos = c.target_accepted + c.target_rejected;
  std::size_t n_neg = 0, false_accepts = 0;
  if (which != Subset::SPF) {
    n_neg += c.nontarget_accepted + c.nontarget_rejected;
    false_accepts += c.nontarget_accepted;
  }
  if (which != Subset::SV) {
    n_neg += c.spoof_accepted + c.spoof_rejected;
    false_accepts += c.spoof_accepted;
  }
  if (n_pos == 0)
    throw InputError("HTER(" + std::string(subset_name(which)) + "): no target trials");
  if (n_neg == 0)
    throw InputError("HTER(" + std::string(subset_name(which)) + "): no negative trials");

  HterResult r;
  r.n_positive = n_pos;
  r.n_negative = n_neg;
  r.frr = static_cast<double>(c.target_rejected) / static_cast<double>(n_pos);
  r.far = static_cast<double>(false_accepts) / static_cast<double>(n_neg);
  // (FA/N + FR/P) / 2 == (FA*P + FR*N) / (2*P*N)
  const auto num = static_cast<unsigned __int128>(false_accepts) * n_pos +
                   static_cast<unsigned __int128>(c.target_rejected) * n_neg;
  const auto den = static_cast<unsigned __int128>(2) * n_pos * n_neg;
  r.hter = static_cast<double>(num) / static_cast<double>(den);
  return r;
}

HterResult hter(std::span<const Trial> trials, std::span<const Decision> decisions, Subset which) {
  return hter(count_decisions(trials, decisions), which);
}

HterReport cascade_report(const ScoreSet& cm, const ScoreSet& asv, const Thresholds& th) {
  const auto decisions = cascade_decisions(cm, asv, th);
  HterReport report;
  report.thresholds = th;
  report.counts = count_decisions(cm.trials, decisions);
  report.sv = hter(report.counts, Subset::SV);
  report.spf = hter(report.counts, Subset::SPF);
  report.sasv = hter(report.counts, Subset::SASV);
  return report;
}

void write_hter_report(std::ostream& out, const HterReport& report) {
  char line[160];
  out << "Cascade (CM gate -> ASV). Values are HTERs, not EERs; they are not comparable "
         "with EER figures.\n";
  std::snprintf(line, sizeof line, "%-24s %10s %10s %10s\n", "System", "SV-HTER", "SPF-HTER",
                "SASV-HTER");
  out << line;
  std::snprintf(line, sizeof line, "%-24s %10s %10s %10s\n", "Cascade",
                format_percent(report.sv.hter).c_str(), format_percent(report.spf.hter).c_str(),
                format_percent(report.sasv.hter).c_str());
  out << line << "(HTERs in %)\n\n";
  const ConfusionCounts& c = report.counts;
  out << "tau_cm=" << format_score(report.thresholds.tau_cm) << '\n'
      << "tau_asv=" << format_score(report.thresholds.tau_asv) << '\n'
      << "threshold_provenance="
      << (report.thresholds.provenance == ThresholdSource::DevEerPoint ? "dev-eer-point" : "manual")
      << '\n'
      << "sv_hter=" << format_score(report.sv.hter) << '\n'
      << "spf_hter=" << format_score(report.spf.hter) << '\n'
      << "sasv_hter=" << format_score(report.sasv.hter) << '\n'
      << "sv_far=" << format_score(report.sv.far) << '\n'
      << "spf_far=" << format_score(report.spf.far) << '\n'
      << "sasv_far=" << format_score(report.sasv.far) << '\n'
      << "frr=" << format_score(report.sv.frr) << '\n'
      << "target_accepted=" << c.target_accepted << '\n'
      << "target_rejected=" << c.target_rejected << '\n'
      << "nontarget_accepted=" << c.nontarget_accepted << '\n'
      << "nontarget_rejected=" << c.nontarget_rejected << '\n'
      << "spoof_accepted=" << c.spoof_accepted << '\n'
      << "spoof_rejected=" << c.spoof_rejected << '\n';
}

}  // namespace sasv
