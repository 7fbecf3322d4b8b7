#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sasv/error.hpp"
#include "sasv/metrics.hpp"
#include "sasv/rng.hpp"
#include "test_util.hpp"

using namespace sasv;
using namespace sasv::testing;

namespace {

using Scores = std::vector<double>;

// Test-side sweep over midpoints written independently of the library: the
// minimum over thresholds of max(FAR, FRR) bounds the EER from above and the
// matching min of min(FAR, FRR) bounds it from below.
struct Bracket {
  double lo = 1.0;
  double hi = 1.0;
};

Bracket sweep_bracket(const Scores& pos, const Scores& neg) {
  Scores all(pos);
  all.insert(all.end(), neg.begin(), neg.end());
  std::sort(all.begin(), all.end());
  Scores cands{-INFINITY, INFINITY};
  for (std::size_t i = 0; i + 1 < all.size(); ++i)
    if (all[i] < all[i + 1]) cands.push_back(0.5 * (all[i] + all[i + 1]));
  Bracket b;
  double best_gap = 2.0;
  for (double t : cands) {
    const double frr = double(std::count_if(pos.begin(), pos.end(), [&](double s) { return s < t; })) / pos.size();
    const double far = double(std::count_if(neg.begin(), neg.end(), [&](double s) { return s >= t; })) / neg.size();
    if (std::abs(far - frr) < best_gap) {
      best_gap = std::abs(far - frr);
      b = {std::min(far, frr), std::max(far, frr)};
    }
  }
  return b;
}

Scores random_scores(Rng& rng, std::size_t n, double shift, bool quantize) {
  Scores s(n);
  for (auto& x : s) {
    x = rng.normal() + shift;
    if (quantize) x = std::round(x * 4.0) / 4.0;
  }
  return s;
}

ScoreSet make_set(const std::vector<std::pair<Trial, double>>& rows) {
  ScoreSet s;
  s.kind = ScoreKind::Fused;
  for (const auto& [t, v] : rows) {
    s.trials.push_back(t);
    s.scores.push_back(v);
  }
  return s;
}

}  // namespace

TEST_CASE("eer examples") {
  CHECK(eer(Scores{2, 3}, Scores{0, 1}).eer == 0.0);
  CHECK(eer(Scores{0, 1}, Scores{2, 3}).eer == 1.0);

  const Scores p{0.9, 0.8, 0.3}, n{0.6, 0.2, 0.1};
  const Bracket b = sweep_bracket(p, n);
  CHECK(b.lo == doctest::Approx(1.0 / 3));
  CHECK(b.hi == doctest::Approx(1.0 / 3));
  const EerResult r = eer(p, n);
  CHECK(r.eer == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(r.threshold > 0.3);
  CHECK(r.threshold <= 0.6);
  CHECK(r.n_positive == 3);
  CHECK(r.n_negative == 3);

  const Scores same{0.1, 0.4, 0.4, 0.7};
  CHECK(eer(same, same).eer == 0.5);
  CHECK(eer_oracle(same, same) == 0.5);
  CHECK(eer(Scores{5}, Scores{5}).eer == 0.5);
}

TEST_CASE("eer errors") {
  CHECK_THROWS_AS(eer(Scores{}, Scores{1}), InputError);
  CHECK_THROWS_AS(eer(Scores{1}, Scores{}), InputError);
  CHECK_THROWS_AS(eer(Scores{NAN}, Scores{1}), InputError);
  CHECK_THROWS_AS(eer(Scores{1}, Scores{INFINITY}), InputError);
  CHECK_THROWS_AS(eer_oracle(Scores{}, Scores{1}), InputError);
}

TEST_CASE("operating points follow the rejection convention") {
  const auto pts = operating_points(Scores{1, 2}, Scores{1, 0});
  REQUIRE(pts.size() == 4);
  CHECK(pts[0].threshold == 0.0);
  CHECK(pts[0].far == 1.0);
  CHECK(pts[0].frr == 0.0);
  CHECK(pts[1].threshold == 1.0);
  CHECK(pts[1].false_accepts == 1);  // negative at 1 is accepted at t = 1
  CHECK(pts[1].false_rejects == 0);
  CHECK(pts[2].threshold == 2.0);
  CHECK(pts[2].false_rejects == 1);
  CHECK(pts[3].threshold > 2.0);
  CHECK(pts[3].frr == 1.0);
  CHECK(pts[3].far == 0.0);
}

TEST_CASE("property: eer agrees with the brute-force oracle") {
  Rng rng(101);
  for (int i = 0; i < 200; ++i) {
    const std::size_t np = 1 + rng.below(40), nn = 1 + rng.below(40);
    const double shift = 2.0 * rng.uniform();
    const Scores p = random_scores(rng, np, shift, false);
    const Scores n = random_scores(rng, nn, 0.0, false);
    const EerResult r = eer(p, n);
    const double bound = 1.0 / double(std::min(np, nn));
    CHECK(std::abs(r.eer - eer_oracle(p, n)) <= bound + 1e-12);
    const Bracket b = sweep_bracket(p, n);
    CHECK(r.eer >= b.lo - 1e-12);
    CHECK(r.eer <= b.hi + 1e-12);
    CHECK(std::isfinite(r.threshold));
  }
}

TEST_CASE("property: tied scores widen the oracle gap by the tie multiplicity") {
  Rng rng(102);
  for (int i = 0; i < 200; ++i) {
    const std::size_t np = 1 + rng.below(40), nn = 1 + rng.below(40);
    const Scores p = random_scores(rng, np, 2.0 * rng.uniform(), true);
    const Scores n = random_scores(rng, nn, 0.0, true);
    // One step of the sweep moves FRR and FAR by at most the largest tie group.
    std::size_t widest = 1;
    for (double v : p) widest = std::max<std::size_t>(widest, std::count(p.begin(), p.end(), v));
    for (double v : n) widest = std::max<std::size_t>(widest, std::count(n.begin(), n.end(), v));
    const EerResult r = eer(p, n);
    CHECK(std::abs(r.eer - eer_oracle(p, n)) <= double(widest) / double(std::min(np, nn)) + 1e-12);
    const Bracket b = sweep_bracket(p, n);
    CHECK(r.eer >= b.lo - 1e-12);
    CHECK(r.eer <= b.hi + 1e-12);
    CHECK(r.eer >= 0.0);
    CHECK(r.eer <= 1.0);
  }
}

TEST_CASE("property: exact crossings are returned exactly") {
  Rng rng(103);
  for (int i = 0; i < 100; ++i) {
    // Interleave so that some midpoint gives FAR == FRR exactly.
    const std::size_t n = 2 + rng.below(20);
    const std::size_t k = rng.below(n + 1);
    Scores p, neg;
    for (std::size_t j = 0; j < n; ++j) {
      p.push_back(j < k ? -1.0 - rng.uniform() : 10.0 + rng.uniform());
      neg.push_back(j < k ? 1.0 + rng.uniform() : -10.0 - rng.uniform());
    }
    // k positives below every negative above the low ones: FRR = FAR = k/n.
    const double expected = double(k) / double(n);
    CHECK(eer(p, neg).eer == doctest::Approx(expected).epsilon(1e-15));
    CHECK(eer_oracle(p, neg) == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("property: monotone transforms and negation leave the eer unchanged") {
  Rng rng(107);
  for (int i = 0; i < 200; ++i) {
    const bool ties = i % 3 == 0;
    const Scores p = random_scores(rng, 1 + rng.below(50), 1.0, ties);
    const Scores n = random_scores(rng, 1 + rng.below(50), 0.0, ties);
    const double base = eer(p, n).eer;

    Scores pt(p), nt(n);
    auto f = [](double x) { return std::exp(x) + 3.0 * x * x * x; };
    std::transform(pt.begin(), pt.end(), pt.begin(), f);
    std::transform(nt.begin(), nt.end(), nt.begin(), f);
    CHECK(std::abs(eer(pt, nt).eer - base) <= 1e-12);

    if (!ties) {
      Scores np(n.size()), pn(p.size());
      std::transform(n.begin(), n.end(), np.begin(), [](double x) { return -x; });
      std::transform(p.begin(), p.end(), pn.begin(), [](double x) { return -x; });
      CHECK(std::abs(eer(np, pn).eer - base) <= 1e-12);
    }
  }
}

TEST_CASE("evaluate on a perfect score set") {
  std::vector<std::pair<Trial, double>> rows;
  for (int i = 0; i < 4; ++i) rows.emplace_back(target("M", "t" + std::to_string(i)), 1.0);
  for (int i = 0; i < 3; ++i) rows.emplace_back(nontarget("M", "n" + std::to_string(i)), 0.0);
  for (int i = 0; i < 5; ++i) rows.emplace_back(spoof("M", "s" + std::to_string(i), i % 2 ? "A07" : "A08"), 0.0);
  const EvalReport r = evaluate(make_set(rows));
  CHECK(r.n_target == 4);
  CHECK(r.n_nontarget == 3);
  CHECK(r.n_spoof == 5);
  REQUIRE(r.sv);
  REQUIRE(r.spf);
  REQUIRE(r.sasv);
  REQUIRE(r.pooled_spf);
  CHECK(r.sv->eer == 0.0);
  CHECK(r.spf->eer == 0.0);
  CHECK(r.sasv->eer == 0.0);
  CHECK(r.per_attack.size() == 2);
  CHECK(r.per_attack.at("A07").eer == 0.0);
  CHECK(r.per_attack.at("A07").n_negative == 2);
  CHECK(r.per_attack.at("A08").n_negative == 3);
}

TEST_CASE("evaluate per-attack breakdown") {
  const ScoreSet s = make_set({{target("M", "t1"), 0.9},
                               {target("M", "t2"), 0.8},
                               {spoof("M", "s1", "A01"), 0.1},
                               {spoof("M", "s2", "A02"), 0.95}});
  const EvalReport r = evaluate(s);
  CHECK(r.per_attack.at("A01").eer == 0.0);
  // A02 outscores both targets; the sweep puts FAR = FRR = 1 at the crossing.
  const Bracket b = sweep_bracket({0.9, 0.8}, {0.95});
  CHECK(b.lo == 1.0);
  CHECK(r.per_attack.at("A02").eer == 1.0);
  CHECK(eer_oracle(Scores{0.9, 0.8}, Scores{0.95}) == 1.0);
  CHECK_FALSE(r.sv.has_value());
  REQUIRE(r.sasv);
  CHECK(r.sasv->eer == r.spf->eer);
}

TEST_CASE("evaluate requires targets and marks empty subsets absent") {
  CHECK_THROWS_AS(evaluate(make_set({{nontarget("M", "n"), 0.1}, {spoof("M", "s", "A01"), 0.2}})),
                  InputError);
  const EvalReport r = evaluate(make_set({{target("M", "t"), 0.9}, {nontarget("M", "n"), 0.1}}));
  CHECK(r.sv);
  CHECK_FALSE(r.spf);
  CHECK_FALSE(r.pooled_spf);
  CHECK(r.per_attack.empty());
  std::ostringstream out;
  write_report(out, r, "sys");
  CHECK(out.str().find("spf_eer=NA") != std::string::npos);
}

TEST_CASE("property: subset composition") {
  Rng rng(109);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<std::pair<Trial, double>> rows;
    const int n = 5 + int(rng.below(60));
    const int n_attacks = 1 + int(rng.below(3));
    for (int i = 0; i < n; ++i) {
      const std::string u = "u" + std::to_string(i);
      const int kind = i == 0 ? 0 : int(rng.below(3));
      const double v = rng.normal();
      if (kind == 0) rows.emplace_back(target("M", u), v);
      else if (kind == 1) rows.emplace_back(nontarget("M", u), v);
      else rows.emplace_back(spoof("M", u, "A0" + std::to_string(1 + rng.below(n_attacks))), v);
    }
    const ScoreSet s = make_set(rows);
    const SplitScores sv = split_scores(s, Subset::SV);
    const SplitScores spf = split_scores(s, Subset::SPF);
    const SplitScores sasv = split_scores(s, Subset::SASV);
    CHECK(sv.positives == spf.positives);
    CHECK(sv.positives == sasv.positives);
    Scores joined(sv.negatives);
    joined.insert(joined.end(), spf.negatives.begin(), spf.negatives.end());
    Scores both(sasv.negatives);
    std::sort(joined.begin(), joined.end());
    std::sort(both.begin(), both.end());
    CHECK(joined == both);

    if (spf.negatives.empty()) continue;
    const EvalReport r = evaluate(s);
    std::size_t per_attack_total = 0;
    for (const auto& [a, res] : r.per_attack) {
      per_attack_total += res.n_negative;
      CHECK(res.eer == eer(split_scores(s, Subset::SPF, a).positives,
                           split_scores(s, Subset::SPF, a).negatives).eer);
    }
    CHECK(per_attack_total == spf.negatives.size());
    CHECK(r.pooled_spf->eer == r.spf->eer);
    if (r.per_attack.size() == 1) CHECK(r.per_attack.begin()->second.eer == r.pooled_spf->eer);
  }
}

TEST_CASE("report and breakdown layout") {
  const ScoreSet s = make_set({{target("M", "t1"), 0.9},
                               {target("M", "t2"), 0.7},
                               {nontarget("M", "n1"), 0.8},
                               {nontarget("M", "n2"), 0.1},
                               {spoof("M", "s1", "A07"), 0.2},
                               {spoof("M", "s2", "A19"), 0.3}});
  const EvalReport r = evaluate(s);
  std::ostringstream rep, brk;
  write_report(rep, r, "B1");
  write_breakdown(brk, r, "B1");
  for (const char* key : {"sv_eer=", "spf_eer=", "sasv_eer=", "threshold_sv=", "threshold_spf=",
                          "threshold_sasv=", "spf_eer_A07=", "spf_eer_A19=", "pooled_spf_eer=",
                          "n_target=2", "n_nontarget=2", "n_spoof=2", "SV-EER", "SASV-EER"})
    CHECK_MESSAGE(rep.str().find(key) != std::string::npos, key);
  CHECK(rep.str().find("sv_eer=0.5\n") != std::string::npos);
  CHECK(rep.str().find("50.00") != std::string::npos);
  CHECK(brk.str().find("\nA07 ") != std::string::npos);
  CHECK(brk.str().find("\nA19 ") != std::string::npos);
  CHECK(brk.str().find("\nP ") != std::string::npos);
  CHECK(format_percent(0.0171) == "1.71");
  CHECK(format_percent(1.0) == "100.00");
}
