#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sasv/error.hpp"
#include "sasv/rng.hpp"
#include "sasv/scoring.hpp"
#include "test_util.hpp"

using namespace sasv;
using namespace sasv::testing;

namespace {

struct Fixture {
  ProtocolSet protocol;
  EmbeddingStore spk{3};
  EmbeddingStore cm{2};

  Fixture() {
    protocol.enrolments.emplace("A", EnrolmentModel{"A", {"a1", "a2"}});
    protocol.enrolments.emplace("B", EnrolmentModel{"B", {"b1"}});
    protocol.trials = {target("A", "a3"), nontarget("A", "b2"), spoof("B", "s1", "A07")};
    auto put = [&](const char* id, std::vector<double> v, std::vector<double> logits) {
      spk.add(id, std::span<const double>(v));
      cm.add(id, std::span<const double>(logits));
    };
    put("a1", {1, 0, 0}, {2, 0});
    put("a2", {0.8, 0.2, 0}, {2, 0});
    put("a3", {0.9, 0.1, 0.1}, {3, 0});
    put("b1", {0, 1, 0}, {1, 0});
    put("b2", {0.1, 1, 0.2}, {2, 1});
    put("s1", {0.1, 0.9, 0}, {-3, 0});
  }
};

}  // namespace

TEST_CASE("cosine_score") {
  const std::vector<double> v{0.3, -1.2, 4.0};
  CHECK(cosine_score(v, v) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_score(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);

  // Independent route: dot product and norms written out by hand.
  const double dot = 1.0 * 1.0 + 0.0 * 1.0;
  const double expected = dot / (std::sqrt(1.0) * std::sqrt(1.0 * 1.0 + 1.0 * 1.0));
  const double got = cosine_score(std::vector<double>{1, 0}, std::vector<double>{1, 1});
  CHECK(got == doctest::Approx(expected).epsilon(1e-15));
  CHECK(got == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));

  CHECK_THROWS_WITH_AS(cosine_score(std::vector<double>{0, 0}, std::vector<double>{1, 1}),
                       doctest::Contains("enrolment"), InputError);
  CHECK_THROWS_WITH_AS(cosine_score(std::vector<double>{1, 1}, std::vector<double>{0, 0}),
                       doctest::Contains("test"), InputError);
  CHECK_THROWS_AS(cosine_score(std::vector<double>{1, 1}, std::vector<double>{1, 1, 1}), InputError);
}

TEST_CASE("cm_score softmax") {
  CHECK(cm_score(0.0, 0.0) == 0.5);
  CHECK(cm_score(std::log(3.0), 0.0) == doctest::Approx(0.75).epsilon(1e-15));
  // Extended-precision oracle for the saturated case.
  const long double oracle = 1.0L / (1.0L + std::exp(-1000.0L));
  const double big = cm_score(1000.0, 0.0);
  CHECK(std::isfinite(big));
  CHECK(std::abs(static_cast<long double>(big) - oracle) <= 1e-12L);
  CHECK(cm_score(-1000.0, 0.0) >= 0.0);
  CHECK_THROWS_AS(cm_score(NAN, 0.0), InputError);
  CHECK_THROWS_AS(cm_score(0.0, INFINITY), InputError);
}

TEST_CASE("cm_record_score accepts scalars and logit pairs") {
  const float scalar[] = {0.25f};
  const float logits[] = {0.0f, 0.0f};
  const float three[] = {0.0f, 0.0f, 0.0f};
  const float out_of_range[] = {1.5f};
  CHECK(cm_record_score(scalar) == 0.25);
  CHECK(cm_record_score(logits) == 0.5);
  CHECK_THROWS_WITH_AS(cm_record_score(three), doctest::Contains("bad CM record"), InputError);
  CHECK_THROWS_AS(cm_record_score(out_of_range), InputError);
}

TEST_CASE("score_sum") {
  CHECK(score_sum(0.8, 0.9) == doctest::Approx(1.7));
  CHECK(score_sum(-1.0, 0.0) == -1.0);
  CHECK(score_sum(1.0, 1.0) == 2.0);
  CHECK(score_sum(0.5, 0.5, 2.0) == 1.5);
  CHECK_THROWS_AS(score_sum(1.2, 0.5), InputError);
  CHECK_THROWS_AS(score_sum(0.5, -0.1), InputError);
  CHECK_THROWS_AS(score_sum(0.5, 0.5, -1.0), InputError);
}

TEST_CASE("property: scoring invariants") {
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> u(8), v(8);
    for (auto& x : u) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    const double a = std::exp(3.0 * rng.normal());
    const double b = std::exp(3.0 * rng.normal());
    std::vector<double> au(u), bv(v);
    for (auto& x : au) x *= a;
    for (auto& x : bv) x *= b;
    const double c = cosine_score(u, v);
    CHECK(std::abs(cosine_score(au, bv) - c) <= 1e-12);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);

    const double l1 = 20.0 * rng.normal(), l2 = 20.0 * rng.normal();
    CHECK(std::abs(cm_score(l1, l2) + cm_score(l2, l1) - 1.0) <= 1e-12);

    const double asv = 2.0 * rng.uniform() - 1.0, cm = rng.uniform();
    const double d = 1e-3 * (rng.uniform() + 0.01);
    if (asv + d <= 1.0) CHECK(score_sum(asv + d, cm) > score_sum(asv, cm));
    if (cm + d <= 1.0) CHECK(score_sum(asv, cm + d) > score_sum(asv, cm));
  }
}

TEST_CASE("score_protocol modes") {
  Fixture f;
  const ScoringInputs in{&f.spk, &f.cm};
  const ScoreSet b1 = score_protocol(f.protocol, in, ScoreMode::B1);
  CHECK(b1.size() == 3);
  CHECK(b1.kind == ScoreKind::Fused);
  CHECK(b1.trials == f.protocol.trials);

  const ScoreSet asv = score_protocol(f.protocol, in, ScoreMode::ASV);
  const ScoreSet cm = score_protocol(f.protocol, in, ScoreMode::CM);
  CHECK_NOTHROW(asv.validate());
  CHECK_NOTHROW(cm.validate());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(b1.scores[i] == asv.scores[i] + cm.scores[i]);
    CHECK(b1.scores[i] >= -1.0);
    CHECK(b1.scores[i] <= 2.0);
  }
  // Trial 1 uses the mean of a1 and a2.
  const Embedding mean = mean_enrolment(f.spk, f.protocol.enrolments.at("A"));
  CHECK(asv.scores[0] == cosine_score(mean, f.spk.embedding("a3")));
  CHECK(cm.scores[2] == cm_score(-3.0, 0.0));

  // CM mode ignores enrolment entirely.
  ProtocolSet bare{f.protocol.trials, {}, 0};
  CHECK(score_protocol(bare, ScoringInputs{nullptr, &f.cm}, ScoreMode::CM).scores == cm.scores);
}

TEST_CASE("score_protocol errors name the trial") {
  Fixture f;
  f.protocol.trials[1] = nontarget("A", "missing");
  const ScoringInputs in{&f.spk, &f.cm};
  CHECK_THROWS_WITH_AS(score_protocol(f.protocol, in, ScoreMode::ASV), doctest::Contains("trial 2"),
                       LookupError);
  CHECK_THROWS_WITH_AS(reference::score_protocol(f.protocol, in, ScoreMode::ASV),
                       doctest::Contains("trial 2"), LookupError);

  Fixture g;
  EmbeddingStore bad_cm(3);
  const double rec[] = {0.0, 0.0, 0.0};
  for (const char* id : {"a3", "b2", "s1"}) bad_cm.add(id, std::span<const double>(rec));
  CHECK_THROWS_WITH_AS(score_protocol(g.protocol, ScoringInputs{&g.spk, &bad_cm}, ScoreMode::B1),
                       doctest::Contains("bad CM record"), InputError);
  CHECK_THROWS_AS(score_protocol(g.protocol, ScoringInputs{nullptr, &g.cm}, ScoreMode::B1),
                  InputError);

  Fixture z;
  const double zero[] = {0.0, 0.0, 0.0};
  EmbeddingStore spk(3);
  for (std::size_t i = 0; i < z.spk.size(); ++i)
    spk.add(z.spk.id(i), z.spk.id(i) == "b2" ? std::span<const double>(zero)
                                             : std::span<const double>(z.spk.embedding(z.spk.id(i))));
  CHECK_THROWS_WITH_AS(score_protocol(z.protocol, ScoringInputs{&spk, &z.cm}, ScoreMode::ASV),
                       doctest::Contains("test embedding has zero norm"), InputError);
}

TEST_CASE("parallel scoring matches the serial reference bit for bit") {
  Rng rng(41);
  ProtocolSet p;
  EmbeddingStore spk(24), cm(2);
  std::vector<double> v(24);
  for (int u = 0; u < 300; ++u) {
    for (auto& x : v) x = rng.normal();
    const std::string id = "u" + std::to_string(u);
    spk.add(id, std::span<const double>(v));
    const double l[] = {2 * rng.normal(), rng.normal()};
    cm.add(id, std::span<const double>(l));
  }
  for (int m = 0; m < 20; ++m) {
    EnrolmentModel model{"M" + std::to_string(m), {}};
    for (int k = 0; k < 3; ++k) model.enrol_utts.push_back("u" + std::to_string(m * 3 + k));
    p.enrolments.emplace(model.speaker_model, model);
  }
  for (int i = 0; i < 2000; ++i)
    p.trials.push_back(target("M" + std::to_string(rng.below(20)), "u" + std::to_string(rng.below(300))));
  const ScoringInputs in{&spk, &cm};
  for (ScoreMode mode : {ScoreMode::ASV, ScoreMode::CM, ScoreMode::B1})
    CHECK(score_protocol(p, in, mode) == reference::score_protocol(p, in, mode));
  ScoringOptions opt{1.0, true};
  CHECK(score_protocol(p, in, ScoreMode::ASV, opt) == reference::score_protocol(p, in, ScoreMode::ASV, opt));
}

TEST_CASE("score file round-trip keeps every digit") {
  Rng rng(43);
  ScoreSet s;
  s.kind = ScoreKind::Fused;
  for (int i = 0; i < 200; ++i) {
    s.trials.push_back(i % 3 == 0 ? spoof("M", "u" + std::to_string(i), "A1" + std::to_string(i % 10))
                                  : target("M", "u" + std::to_string(i)));
    s.scores.push_back(rng.normal() * std::pow(10.0, 6 * rng.normal()));
  }
  s.scores[0] = 0.1;
  s.scores[1] = -0.0;
  s.scores[2] = 5e-324;
  std::ostringstream out;
  write_scores(out, s);
  std::istringstream in(out.str());
  const ScoreSet back = read_scores(in, "s", ScoreKind::Fused);
  CHECK(back.trials == s.trials);
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(std::bit_cast<std::uint64_t>(back.scores[i]) == std::bit_cast<std::uint64_t>(s.scores[i]));
  CHECK(out.str().substr(0, out.str().find('\n')) == "M u0 A10 spoof 0.10000000000000001");
}

TEST_CASE("score file parse errors") {
  auto parse = [](const std::string& text, ScoreKind kind = ScoreKind::Fused) {
    std::istringstream in(text);
    return read_scores(in, "scores", kind);
  };
  CHECK_THROWS_AS(parse("m u bonafide target\n"), ParseError);
  CHECK_THROWS_AS(parse("m u bonafide target abc\n"), ParseError);
  CHECK_THROWS_AS(parse("m u bonafide target nan\n"), ParseError);
  CHECK_THROWS_WITH_AS(parse("m u bonafide target 1\nm v A01 target 0.5\n"),
                       doctest::Contains("scores:2"), ParseError);
  CHECK_THROWS_AS(parse("m u bonafide target 1.5\n", ScoreKind::CM), InputError);
  CHECK_NOTHROW(parse("m u bonafide target 1.5\n", ScoreKind::Fused));
}
