#include "sasv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <utility>

#include "sasv/error.hpp"

namespace sasv {

namespace {

void check_scores(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty()) throw InputError("EER: no positive scores");
  if (negatives.empty()) throw InputError("EER: no negative scores");
  for (double s : positives)
    if (!std::isfinite(s)) throw InputError("EER: non-finite positive score");
  for (double s : negatives)
    if (!std::isfinite(s)) throw InputError("EER: non-finite negative score");
}

// Sweep state in integer counts; rates are derived on demand.
struct CountPoint {
  double threshold;
  std::size_t false_rejects;
  std::size_t false_accepts;
};

std::vector<CountPoint> count_points(std::span<const double> positives,
                                     std::span<const double> negatives) {
  std::vector<std::pair<double, bool>> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.emplace_back(s, true);
  for (double s : negatives) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<CountPoint> points;
  std::size_t below_pos = 0;
  std::size_t at_or_above_neg = negatives.size();
  std::size_t i = 0;
  while (i < all.size()) {
    const double t = all[i].first;
    points.push_back({t, below_pos, at_or_above_neg});
    while (i < all.size() && all[i].first == t) {
      if (all[i].second)
        ++below_pos;
      else
        --at_or_above_neg;
      ++i;
    }
  }
  const double above = std::nextafter(all.back().first, std::numeric_limits<double>::infinity());
  points.push_back({above, below_pos, at_or_above_neg});
  return points;
}

}  // namespace

std::vector<OperatingPoint> operating_points(std::span<const double> positives,
                                             std::span<const double> negatives) {
  check_scores(positives, negatives);
  const double p = static_cast<double>(positives.size());
  const double n = static_cast<double>(negatives.size());
  std::vector<OperatingPoint> out;
  for (const CountPoint& c : count_points(positives, negatives))
    out.push_back({c.threshold, static_cast<double>(c.false_accepts) / n,
                   static_cast<double>(c.false_rejects) / p, c.false_rejects, c.false_accepts});
  return out;
}

EerResult eer(std::span<const double> positives, std::span<const double> negatives) {
  check_scores(positives, negatives);
  const auto points = count_points(positives, negatives);
  const auto np = static_cast<unsigned __int128>(positives.size());
  const auto nn = static_cast<unsigned __int128>(negatives.size());

  // FRR - FAR scaled by P*N, as an exact signed integer.
  auto gap = [&](const CountPoint& c) -> __int128 {
    return static_cast<__int128>(c.false_rejects * nn) - static_cast<__int128>(c.false_accepts * np);
  };

  EerResult result;
  result.n_positive = positives.size();
  result.n_negative = negatives.size();
  // points[0] has FRR = 0 and FAR = 1; the last point has FRR = 1 and FAR = 0.
  std::size_t k = 1;
  while (gap(points[k]) < 0) ++k;
  const CountPoint& lo = points[k - 1];
  const CountPoint& hi = points[k];
  const __int128 d_hi = gap(hi);
  if (d_hi == 0) {
    result.eer = static_cast<double>(hi.false_rejects) / static_cast<double>(positives.size());
    result.threshold = lo.threshold + 0.5 * (hi.threshold - lo.threshold);
    return result;
  }
  const __int128 d_lo = gap(lo);
  const double alpha = static_cast<double>(-d_lo) / static_cast<double>(d_hi - d_lo);
  const double frr_lo = static_cast<double>(lo.false_rejects);
  const double frr_hi = static_cast<double>(hi.false_rejects);
  result.eer = (frr_lo + alpha * (frr_hi - frr_lo)) / static_cast<double>(positives.size());
  result.threshold = lo.threshold + alpha * (hi.threshold - lo.threshold);
  return result;
}

double eer_oracle(std::span<const double> positives, std::span<const double> negatives) {
  check_scores(positives, negatives);
  std::vector<double> sorted(positives.begin(), positives.end());
  sorted.insert(sorted.end(), negatives.begin(), negatives.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<double> thresholds{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
    thresholds.push_back(sorted[i] + 0.5 * (sorted[i + 1] - sorted[i]));
  thresholds.push_back(std::numeric_limits<double>::infinity());

  double best_gap = std::numeric_limits<double>::infinity();
  double best = 0.0;
  for (double t : thresholds) {
    std::size_t fr = 0, fa = 0;
    for (double s : positives) fr += s < t;
    for (double s : negatives) fa += s >= t;
    const double frr = static_cast<double>(fr) / static_cast<double>(positives.size());
    const double far = static_cast<double>(fa) / static_cast<double>(negatives.size());
    const double g = std::abs(far - frr);
    if (g < best_gap) {
      best_gap = g;
      best = 0.5 * (far + frr);
    }
  }
  return best;
}

SplitScores split_scores(const ScoreSet& scores, Subset which, std::string_view attack) {
  SplitScores out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Trial& t = scores.trials[i];
    if (!in_subset(t, which)) continue;
    if (t.key.kind() == TrialKind::Target) {
      out.positives.push_back(scores.scores[i]);
    } else if (attack.empty() || (t.key.is_spoof() && t.key.attack_id() == attack)) {
      out.negatives.push_back(scores.scores[i]);
    }
  }
  return out;
}

EvalReport evaluate(const ScoreSet& scores) {
  scores.validate();
  EvalReport report;
  std::vector<std::string> attacks;
  for (const Trial& t : scores.trials) {
    switch (t.key.kind()) {
      case TrialKind::Target:
        ++report.n_target;
        break;
      case TrialKind::NonTarget:
        ++report.n_nontarget;
        break;
      case TrialKind::Spoof:
        ++report.n_spoof;
        attacks.push_back(t.key.attack_id());
        break;
    }
  }
  if (report.n_target == 0) throw InputError("evaluate: score set has no target trials");
  std::sort(attacks.begin(), attacks.end());
  attacks.erase(std::unique(attacks.begin(), attacks.end()), attacks.end());

  auto subset_eer = [&](Subset which) -> std::optional<EerResult> {
    SplitScores s = split_scores(scores, which);
    if (s.negatives.empty()) return std::nullopt;
    return eer(s.positives, s.negatives);
  };
  report.sv = subset_eer(Subset::SV);
  report.spf = subset_eer(Subset::SPF);
  report.sasv = subset_eer(Subset::SASV);
  report.pooled_spf = report.spf;

  std::vector<EerResult> per(attacks.size());
  const auto n_attacks = static_cast<std::ptrdiff_t>(attacks.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t a = 0; a < n_attacks; ++a) {
    SplitScores s = split_scores(scores, Subset::SPF, attacks[a]);
    per[a] = eer(s.positives, s.negatives);
  }
  for (std::size_t a = 0; a < attacks.size(); ++a) report.per_attack.emplace(attacks[a], per[a]);
  return report;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

namespace {

std::string cell(const std::optional<EerResult>& r) { return r ? format_percent(r->eer) : "-"; }

void put_result(std::ostream& out, const std::string& name, const std::string& suffix,
                const std::optional<EerResult>& r) {
  if (!r) {
    out << name << "_eer" << suffix << "=NA\n";
    return;
  }
  out << name << "_eer" << suffix << '=' << format_score(r->eer) << '\n';
  out << "threshold_" << name << suffix << '=' << format_score(r->threshold) << '\n';
}

void put_counts(std::ostream& out, const EvalReport& report) {
  out << "n_target=" << report.n_target << '\n'
      << "n_nontarget=" << report.n_nontarget << '\n'
      << "n_spoof=" << report.n_spoof << '\n';
}

void put_attacks(std::ostream& out, const EvalReport& report) {
  for (const auto& [attack, r] : report.per_attack)
    put_result(out, "spf", "_" + attack, r);
  put_result(out, "pooled_spf", "", report.pooled_spf);
}

}  // namespace

void write_report(std::ostream& out, const EvalReport& report, std::string_view system_name) {
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %10s %10s %10s\n", "System", "SV-EER", "SPF-EER",
                "SASV-EER");
  out << line;
  std::snprintf(line, sizeof line, "%-24s %10s %10s %10s\n", std::string(system_name).c_str(),
                cell(report.sv).c_str(), cell(report.spf).c_str(), cell(report.sasv).c_str());
  out << line;
  out << "(EERs in %)\n\n";
  put_counts(out, report);
  put_result(out, "sv", "", report.sv);
  put_result(out, "spf", "", report.spf);
  put_result(out, "sasv", "", report.sasv);
  put_attacks(out, report);
}

void write_breakdown(std::ostream& out, const EvalReport& report, std::string_view system_name) {
  char line[160];
  out << "SPF-EER breakdown (%) for " << system_name << '\n';
  std::snprintf(line, sizeof line, "%-10s %10s %10s %16s\n", "Attack", "SPF-EER", "n_spoof",
                "threshold");
  out << line;
  for (const auto& [attack, r] : report.per_attack) {
    std::snprintf(line, sizeof line, "%-10s %10s %10zu %16.6g\n", attack.c_str(),
                  format_percent(r.eer).c_str(), r.n_negative, r.threshold);
    out << line;
  }
  if (report.pooled_spf) {
    const EerResult& p = *report.pooled_spf;
    std::snprintf(line, sizeof line, "%-10s %10s %10zu %16.6g\n", "P", format_percent(p.eer).c_str(),
                  p.n_negative, p.threshold);
    out << line;
  }
  out << '\n';
  put_counts(out, report);
  put_attacks(out, report);
}

}  // namespace sasv
