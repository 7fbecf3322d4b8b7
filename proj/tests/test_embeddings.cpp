#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "binary_io_helpers.hpp"
#include "sasv/embeddings.hpp"
#include "sasv/error.hpp"
#include "sasv/rng.hpp"
#include "test_util.hpp"

using namespace sasv;

namespace {

EmbeddingStore random_store(Rng& rng, std::size_t dim, std::size_t n) {
  EmbeddingStore s(dim);
  std::vector<float> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (float& x : v) x = static_cast<float>(rng.normal() * std::pow(10.0, rng.normal()));
    s.add("utt_" + std::to_string(i), std::span<const float>(v));
  }
  return s;
}

}  // namespace

TEST_CASE("text store: dimension comes from the first row") {
  std::ostringstream text;
  Rng rng(3);
  for (int r = 0; r < 4; ++r) {
    text << "u" << r;
    for (int k = 0; k < 192; ++k) text << ' ' << rng.normal();
    text << '\n';
  }
  std::istringstream in(text.str());
  const EmbeddingStore s = read_text_store(in, "t");
  CHECK(s.dim() == 192);
  CHECK(s.size() == 4);
  CHECK(s.contains("u3"));
}

TEST_CASE("text store parsing is locale independent and accepts exponents") {
  std::istringstream in("a 1.5e-3 -2E+2 0.25\nb 0 0 0\n");
  const EmbeddingStore s = read_text_store(in, "t");
  CHECK(s.at("a")[0] == doctest::Approx(1.5e-3f));
  CHECK(s.at("a")[1] == -200.0f);
  CHECK(s.at("b")[2] == 0.0f);  // zero vectors are legal at load time
}

TEST_CASE("text store errors") {
  auto load = [](const std::string& text) {
    std::istringstream in(text);
    return read_text_store(in, "t");
  };
  CHECK_THROWS_AS(load(""), InputError);
  CHECK_THROWS_AS(load("a 1 2\nb 1 2 3\n"), ParseError);
  CHECK_THROWS_AS(load("a 1 nan\n"), ParseError);
  CHECK_THROWS_AS(load("a 1 inf\n"), ParseError);
  CHECK_THROWS_AS(load("a 1 2\na 3 4\n"), ParseError);
  CHECK_THROWS_AS(load("a 1 2,5\n"), ParseError);
  CHECK_THROWS_AS(load("a\n"), ParseError);
}

TEST_CASE("binary store header and records") {
  Rng rng(5);
  const EmbeddingStore s = random_store(rng, 160, 3);
  std::ostringstream out;
  write_binary_store(out, s);
  const std::string bytes = out.str();
  // magic, version, dim (LE u32), count (LE u64)
  CHECK(bytes.substr(0, 4) == "SASV");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[5]) == 160);
  CHECK(bytes[6] == 0);
  CHECK(static_cast<unsigned char>(bytes[9]) == 3);
  const std::size_t record = 2 + 5 + 160 * 4;  // "utt_0" ids
  CHECK(bytes.size() == 17 + 3 * record);
}

TEST_CASE("binary store: truncated record is rejected") {
  // Header declares dim 160 but the only record carries 159 floats.
  std::string bytes = sasv::testing::store_header(160, 1);
  bytes += sasv::testing::record("x", std::vector<float>(159, 1.0f));
  std::istringstream in(bytes);
  CHECK_THROWS_WITH_AS(read_binary_store(in, "b"), doctest::Contains("corrupt record"), InputError);
}

TEST_CASE("binary store: header-only file is an empty store") {
  std::istringstream in(sasv::testing::store_header(160, 0));
  const EmbeddingStore s = read_binary_store(in, "b");
  CHECK(s.empty());
  CHECK(s.dim() == 160);
}

TEST_CASE("binary store: corrupt headers") {
  std::istringstream empty("");
  CHECK_THROWS_AS(read_binary_store(empty, "b"), InputError);
  std::istringstream bad_magic("SASX\x01");
  CHECK_THROWS_AS(read_binary_store(bad_magic, "b"), InputError);
  std::string trailing = sasv::testing::store_header(2, 1) +
                         sasv::testing::record("x", {1.0f, 2.0f}) + "junk";
  std::istringstream tr(trailing);
  CHECK_THROWS_AS(read_binary_store(tr, "b"), InputError);
  std::string dup = sasv::testing::store_header(1, 2) + sasv::testing::record("x", {1.0f}) +
                    sasv::testing::record("x", {2.0f});
  std::istringstream d(dup);
  CHECK_THROWS_WITH_AS(read_binary_store(d, "b"), doctest::Contains("record 1"), InputError);
  std::string nan = sasv::testing::store_header(1, 1) +
                    sasv::testing::record("x", {std::numeric_limits<float>::quiet_NaN()});
  std::istringstream n(nan);
  CHECK_THROWS_AS(read_binary_store(n, "b"), InputError);
}

TEST_CASE("property: binary and text stores round-trip bit-exactly") {
  Rng rng(17);
  const auto dir = sasv::testing::temp_dir("embeddings");
  for (int iter = 0; iter < 10; ++iter) {
    const EmbeddingStore s = random_store(rng, 1 + rng.below(40), rng.below(30) + 1);
    for (StoreFormat f : {StoreFormat::Binary, StoreFormat::Text}) {
      save_store(dir / "s", s, f);
      const EmbeddingStore back = load_store(dir / "s", f);
      REQUIRE(back.size() == s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(back.id(i) == s.id(i));
        auto a = s.row(i);
        auto b = back.row(i);
        CHECK(std::equal(a.begin(), a.end(), b.begin(), [](float x, float y) {
          return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
        }));
      }
    }
  }
}

TEST_CASE("mean_enrolment") {
  EmbeddingStore s(2);
  const float e1[] = {1.0f, 0.0f}, e2[] = {0.0f, 1.0f}, e3[] = {3.0f, -4.0f}, e4[] = {-3.0f, 4.0f};
  s.add("a", std::span<const float>(e1));
  s.add("b", std::span<const float>(e2));
  s.add("c", std::span<const float>(e3));
  s.add("d", std::span<const float>(e4));

  CHECK(mean_enrolment(s, {"m", {"c"}}) == Embedding{3.0, -4.0});
  CHECK(mean_enrolment(s, {"m", {"a", "b"}}) == Embedding{0.5, 0.5});
  CHECK(mean_enrolment(s, {"m", {"c", "d"}}) == Embedding{0.0, 0.0});

  CHECK_THROWS_WITH_AS(mean_enrolment(s, {"m", {"a", "zz"}}), doctest::Contains("zz"), LookupError);

  const Embedding n = mean_enrolment(s, {"m", {"a", "c"}}, MeanOptions{true});
  CHECK(n[0] == doctest::Approx(0.8));
  CHECK(n[1] == doctest::Approx(-0.4));
}

TEST_CASE("property: mean is permutation invariant and bounded component-wise") {
  Rng rng(23);
  const EmbeddingStore s = random_store(rng, 16, 12);
  for (int iter = 0; iter < 100; ++iter) {
    EnrolmentModel m{"m", {}};
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (rng.below(2)) ids.push_back(s.id(i));
    if (ids.empty()) ids.push_back(s.id(0));
    m.enrol_utts = ids;
    const Embedding mean = mean_enrolment(s, m);
    rng.shuffle(m.enrol_utts);
    CHECK(mean_enrolment(s, m) == mean);
    for (std::size_t k = 0; k < s.dim(); ++k) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& id : ids) {
        lo = std::min(lo, static_cast<double>(s.at(id)[k]));
        hi = std::max(hi, static_cast<double>(s.at(id)[k]));
      }
      CHECK(mean[k] >= lo);
      CHECK(mean[k] <= hi);
    }
  }
}
