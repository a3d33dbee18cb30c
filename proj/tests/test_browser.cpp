#include <catch_amalgamated.hpp>

#include "agentfp/browser.hpp"
#include "oracles.hpp"

using namespace agentfp;
using Catch::Matchers::WithinAbs;

namespace {

FingerprintDigest digest(const std::string& s) { return canonicalize_fingerprint({{"platform", s}}); }

std::vector<FingerprintDigest> repeat(const FingerprintDigest& d, std::size_t n) { return std::vector(n, d); }

}  // namespace

TEST_CASE("canonicalize_fingerprint") {
  AttrMap a{{"platform", std::string("MacIntel")}, {"cores", 8.0}, {"fonts", AttrList{"Arial", "Menlo"}}};
  AttrMap b;
  b["fonts"] = AttrList{"Menlo", "Arial"};
  b["cores"] = 8.0;
  b["platform"] = std::string("MacIntel");
  CHECK(canonicalize_fingerprint(a) == canonicalize_fingerprint(b));
  CHECK(canonicalize_fingerprint(a).hash.size() == 64);

  auto c = a;
  c["cores"] = 6.0;
  CHECK(canonicalize_fingerprint(a) != canonicalize_fingerprint(c));

  // ordered lists keep their order
  AttrMap l1{{"languages", AttrList{"en-US", "fr"}}}, l2{{"languages", AttrList{"fr", "en-US"}}};
  CHECK(canonicalize_fingerprint(l1) != canonicalize_fingerprint(l2));

  // value types are distinguished
  AttrMap s{{"cores", std::string("8")}};
  CHECK(canonicalize_fingerprint(s) != canonicalize_fingerprint(AttrMap{{"cores", 8.0}}));
}

TEST_CASE("build_encoder") {
  SECTION("empty input") { CHECK_THROWS_AS(build_encoder({}), EncoderError); }
  SECTION("categorical vocab in first-seen order") {
    auto enc = build_encoder({{{"platform", std::string("MacIntel")}},
                              {{"platform", std::string("Linux x86_64")}},
                              {{"platform", std::string("MacIntel")}}});
    auto vocab = enc.categorical_vocab().at("platform");
    CHECK(vocab == std::vector<std::string>{"MacIntel", "Linux x86_64"});
    CHECK(enc.total_width() == 3);
  }
  SECTION("numbers are numeric") {
    auto enc = build_encoder({{{"cores", 8.0}}, {{"cores", 6.0}}, {{"cores", 13.0}}});
    CHECK(enc.categorical_vocab().empty());
    CHECK(enc.numeric_attrs() == std::vector<std::string>{"cores"});
    CHECK(enc.total_width() == 1);
  }
  SECTION("dimension pairs split into two slots") {
    auto enc = build_encoder({{{"resolution", std::string("1280x960")}}});
    CHECK(enc.total_width() == 2);
    auto v = enc.encode({{"resolution", std::string("1280x960")}});
    CHECK(v == std::vector<double>{1280.0, 960.0});
  }
  SECTION("layout sorted by name, width matches invariant") {
    auto enc = build_encoder({{{"z", std::string("a")}, {"a", 1.0}, {"m", std::string("640x480")}},
                              {{"z", std::string("b")}, {"fonts", AttrList{"Arial", "Menlo"}}}});
    std::vector<std::string> names;
    for (const auto& a : enc.attributes()) names.push_back(a.name);
    CHECK(names == std::vector<std::string>{"a", "fonts", "m", "z"});
    std::size_t expected = 0;
    for (const auto& [n, v] : enc.categorical_vocab()) expected += v.size() + 1;
    expected += enc.numeric_attrs().size();
    CHECK(enc.total_width() == expected);
    CHECK(enc.feature_names().size() == enc.total_width());
  }
  SECTION("mixed types fall back to categorical") {
    auto enc = build_encoder({{{"x", 1.0}}, {{"x", std::string("one")}}});
    CHECK(enc.categorical_vocab().at("x").size() == 2);
  }
}

TEST_CASE("encode_browser") {
  const auto enc = build_encoder({{{"platform", std::string("MacIntel")}, {"cores", 8.0}, {"memory", 8.0}},
                                  {{"platform", std::string("Linux x86_64")}, {"cores", 6.0}, {"memory", 4.0}}});
  // layout: cores, memory, platform=MacIntel, platform=Linux, platform=<unknown>
  SECTION("unseen category hits the unknown slot") {
    auto v = encode_browser({{"platform", std::string("Win32")}}, enc);
    CHECK(v[2] == 0);
    CHECK(v[3] == 0);
    CHECK(v[4] == 1);
  }
  SECTION("numeric slots are copied") {
    auto v = encode_browser({{"platform", std::string("Linux x86_64")}, {"cores", 6.0}, {"memory", 4.0}}, enc);
    CHECK(v == std::vector<double>{6.0, 4.0, 0.0, 1.0, 0.0});
  }
  SECTION("empty attrs") {
    auto v = encode_browser({}, enc);
    CHECK(v == std::vector<double>{-1.0, -1.0, 0.0, 0.0, 1.0});
  }
  SECTION("one-hot property and constant width") {
    for (const auto& attrs : std::vector<AttrMap>{{}, {{"platform", std::string("MacIntel")}}, {{"cores", 2.0}}}) {
      auto v = encode_browser(attrs, enc);
      REQUIRE(v.size() == enc.total_width());
      CHECK(v[2] + v[3] + v[4] == 1.0);
    }
  }
  SECTION("list membership") {
    auto le = build_encoder({{{"fonts", AttrList{"Arial", "Menlo"}}}, {{"fonts", AttrList{"Gill Sans"}}}});
    CHECK(le.encode({{"fonts", AttrList{"Gill Sans", "Arial"}}}) == std::vector<double>{1, 0, 1});
    CHECK(le.encode({}) == std::vector<double>{-1, -1, -1});
  }
}

TEST_CASE("encoder serialization round-trips") {
  auto enc = build_encoder({{{"platform", std::string("MacIntel")}, {"cores", 8.0}, {"hdr", true}},
                            {{"resolution", std::string("1440x900")}, {"fonts", AttrList{"a", "b"}}}});
  auto text = enc.serialize();
  auto back = AttributeEncoder::deserialize(text);
  CHECK(back == enc);
  CHECK(back.serialize() == text);
  CHECK_THROWS_AS(AttributeEncoder::deserialize("{}"), EncoderError);
  CHECK_THROWS_AS(AttributeEncoder::deserialize("nope"), EncoderError);
  auto bumped = nlohmann::json::parse(text);
  bumped["version"] = 99;
  CHECK_THROWS_AS(AttributeEncoder::deserialize(bumped.dump()), EncoderError);
}

TEST_CASE("fingerprint_stats") {
  const auto a = digest("a"), b = digest("b"), c = digest("c"), d = digest("d"), e = digest("e");

  SECTION("single digest") {
    auto st = fingerprint_stats({{ClassLabel::atlas, repeat(a, 1000)}}).at(ClassLabel::atlas);
    CHECK(st.unique_count == 1);
    CHECK(st.top1_coverage == 1.0);
    CHECK(st.normalized_entropy == 0.0);
    CHECK(st.shared_with.empty());
  }
  SECTION("near-even split") {
    auto v = repeat(a, 512);
    auto w = repeat(b, 488);
    v.insert(v.end(), w.begin(), w.end());
    auto st = fingerprint_stats({{ClassLabel::comet, v}}).at(ClassLabel::comet);
    CHECK_THAT(st.top1_coverage, WithinAbs(0.512, 1e-12));
    CHECK_THAT(st.normalized_entropy, WithinAbs(oracle::normalized_entropy({512, 488}), 1e-12));
    CHECK_THAT(st.normalized_entropy, WithinAbs(1.0, 0.01));
  }
  SECTION("dominant digest with an even tail") {
    std::vector<FingerprintDigest> v = repeat(a, 9656);
    for (const auto& x : {b, c, d, e}) {
      auto t = repeat(x, 86);
      v.insert(v.end(), t.begin(), t.end());
    }
    auto st = fingerprint_stats({{ClassLabel::manus, v}}).at(ClassLabel::manus);
    CHECK(st.unique_count == 5);
    CHECK_THAT(st.normalized_entropy, WithinAbs(oracle::normalized_entropy({9656, 86, 86, 86, 86}), 1e-12));
    CHECK_THAT(st.normalized_entropy, WithinAbs(0.12, 0.02));
  }
  SECTION("sharing is symmetric") {
    auto st = fingerprint_stats({{ClassLabel::atlas, {a}},
                                 {ClassLabel::browser_use, {a, b}},
                                 {ClassLabel::claude, {a, c}},
                                 {ClassLabel::manus, {d}}});
    CHECK(st.at(ClassLabel::atlas).shared_with == std::set{ClassLabel::browser_use, ClassLabel::claude});
    CHECK(st.at(ClassLabel::browser_use).shared_with == std::set{ClassLabel::atlas, ClassLabel::claude});
    CHECK(st.at(ClassLabel::manus).shared_with.empty());
    CHECK(st.at(ClassLabel::claude).shared_count == 1);
    for (const auto& [x, sx] : st)
      for (auto y : sx.shared_with) CHECK(st.at(y).shared_with.contains(x));
  }
  SECTION("empty class") {
    CHECK_THROWS_AS(fingerprint_stats({{ClassLabel::human, {}}}), StatsError);
  }
  SECTION("entropy equals one iff uniform") {
    CHECK(normalized_entropy({3, 3, 3}) == Catch::Approx(1.0));
    CHECK(normalized_entropy({3, 3, 4}) < 1.0);
    CHECK(normalized_entropy({7}) == 0.0);
  }
}
