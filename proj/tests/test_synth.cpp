#include <catch_amalgamated.hpp>

#include "agentfp/behavior.hpp"
#include "agentfp/browser.hpp"
#include "agentfp/stats.hpp"
#include "agentfp/synth.hpp"
#include "oracles.hpp"

using namespace agentfp;
using namespace agentfp::synth;

namespace {

const std::map<ClassLabel, ClassProfile>& profiles() {
  static const auto p = default_profiles();
  return p;
}

const std::vector<SessionLog>& corpus() {
  static const auto c = generate_corpus(profiles(), 12, 77);
  return c;
}

bool is_field(const TaskScript& s, const std::string& target) {
  for (const auto& f : s.fields_to_fill)
    if (f.target == target) return true;
  return false;
}

std::size_t field_changes(const SessionLog& s, const TaskScript& script) {
  std::size_t n = 0;
  for (const auto& e : s.events)
    if (e.kind == EventKind::change && e.target && is_field(script, *e.target)) ++n;
  return n;
}

}  // namespace

TEST_CASE("default profiles carry the published latency parameters") {
  const auto& p = profiles();
  CHECK(p.size() == 8);
  const auto& manus = p.at(ClassLabel::manus).typing.latency;
  CHECK(manus.hold_mean == 52.92);
  CHECK(manus.hold_sd == 0.53);
  const auto& human = p.at(ClassLabel::human).typing.latency;
  CHECK(human.interkey_mean == 120.43);
  CHECK(human.interkey_sd == 78.74);
  CHECK(p.at(ClassLabel::skyvern).typing.keystroke_tail == 20);
  CHECK(p.at(ClassLabel::browser_use).double_change_events);
  CHECK(p.at(ClassLabel::claude).typing_for(Task::forums).kind == TypingKind::keystroke);
  CHECK(p.at(ClassLabel::claude).typing_for(Task::flights).kind == TypingKind::change_fill);
  CHECK(p.at(ClassLabel::chatgpt_agent).typing.modifier_hold_mean == 66.58);
  for (const auto& [cls, prof] : p) {
    CHECK(prof.label == cls);
    CHECK_FALSE(prof.browser_attr_templates.empty());
    CHECK((prof.mouse == MouseStyle::human_path) == (cls == ClassLabel::human));
  }
}

TEST_CASE("atlas sessions contain no key events") {
  for (const auto& s : corpus()) {
    if (s.label != ClassLabel::atlas) continue;
    for (const auto& e : s.events) {
      CHECK(e.kind != EventKind::keydown);
      CHECK(e.kind != EventKind::keyup);
    }
  }
}

TEST_CASE("skyvern types only the final 20 characters") {
  auto prof = profiles().at(ClassLabel::skyvern);
  prof.delete_rate = 0.0;
  TaskScript script{Task::forums, {{"reply", 60}}, 0, 0, 0};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto s = generate_session(prof, script, seed);
    std::size_t downs = 0, inputs = 0;
    for (const auto& e : s.events) {
      downs += e.kind == EventKind::keydown;
      inputs += e.kind == EventKind::input;
    }
    CHECK(downs == 20);
    CHECK(inputs == 21);  // programmatic prefix plus one per key
  }
}

TEST_CASE("browser_use fills emit twice the field change events of claude") {
  const auto script = default_script(Task::flights);
  const auto f = script.fields_to_fill.size();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto bu = generate_session(profiles().at(ClassLabel::browser_use), script, seed);
    auto cl = generate_session(profiles().at(ClassLabel::claude), script, seed);
    CHECK(field_changes(bu, script) == 2 * f);
    CHECK(field_changes(cl, script) == f);
  }
}

TEST_CASE("generation is deterministic") {
  for (auto cls : kAllClasses) {
    auto a = generate_session(profiles().at(cls), default_script(Task::shop), 42);
    auto b = generate_session(profiles().at(cls), default_script(Task::shop), 42);
    CHECK(a == b);
    CHECK(a.label == cls);
  }
  CHECK(generate_corpus(profiles(), 2, 9) == generate_corpus(profiles(), 2, 9));
}

TEST_CASE("corpus shape and validity") {
  const auto& c = corpus();
  CHECK(c.size() == 12 * 8 * 3);
  CHECK(generate_corpus(profiles(), 40, 1).size() == 960);
  CHECK_THROWS_AS(generate_corpus(profiles(), 0, 1), ConfigError);
  std::set<std::string> ids;
  for (const auto& s : c) {
    CHECK(validate_session(s).empty());
    ids.insert(s.visitor_id);
  }
  CHECK(ids.size() == c.size());
}

TEST_CASE("atlas, browser_use and claude share a fingerprint") {
  std::map<ClassLabel, std::vector<FingerprintDigest>> per;
  for (const auto& s : generate_corpus(profiles(), 20, 5)) per[*s.label].push_back(canonicalize_fingerprint(s.browser_attrs));
  auto st = fingerprint_stats(per);
  CHECK(st.at(ClassLabel::atlas).shared_with.contains(ClassLabel::browser_use));
  CHECK(st.at(ClassLabel::atlas).shared_with.contains(ClassLabel::claude));
  CHECK(st.at(ClassLabel::atlas).unique_count == 1);
}

TEST_CASE("keystroke latencies match the profile parameters") {
  const auto big = generate_corpus(profiles(), 15, 123);
  for (auto cls : {ClassLabel::manus, ClassLabel::skyvern, ClassLabel::browser_use, ClassLabel::human}) {
    const auto& lat = profiles().at(cls).typing.latency;
    std::vector<double> hold, interkey;
    for (const auto& s : big) {
      if (s.label != cls) continue;
      // programmatic Delete runs use their own cadence
      std::vector<RawEvent> letters;
      for (const auto& e : s.events)
        if ((e.kind == EventKind::keydown || e.kind == EventKind::keyup) && e.key != "Delete") letters.push_back(e);
      auto lats = keystroke_latencies(pair_keystrokes(letters).keystrokes);
      hold.insert(hold.end(), lats.hold.begin(), lats.hold.end());
      // gaps spanning fields include think time; keep those inside a burst
      for (double g : lats.interkey)
        if (g < lat.interkey_mean + 6 * lat.interkey_sd + 50) interkey.push_back(g);
    }
    INFO(to_string(cls) << " holds " << hold.size());
    REQUIRE(hold.size() >= 500);
    const double se_hold = lat.hold_sd / std::sqrt(static_cast<double>(hold.size()));
    // event timestamps are integer milliseconds; allow half a tick of rounding bias
    CHECK(std::abs(oracle::mean(hold) - lat.hold_mean) <= 3 * se_hold + 0.5);
    if (cls == ClassLabel::manus) CHECK(std::abs(oracle::mean(hold) - 52.92) <= 1.0);
    const double se_ik = lat.interkey_sd / std::sqrt(static_cast<double>(interkey.size()));
    CHECK(std::abs(oracle::mean(interkey) - lat.interkey_mean) <= 3 * se_ik + 0.5);
  }
}

TEST_CASE("agent sessions have no mouse geometry") {
  for (const auto& s : corpus()) {
    auto f = featurize_behavior(s);
    if (s.label == ClassLabel::human) {
      CHECK(f[slot::direction_mean] != kSentinel);
    } else {
      CHECK(f[slot::direction_mean] == kSentinel);
      CHECK(f[slot::angle_mean] == kSentinel);
      CHECK(f[slot::curvature_mean] == kSentinel);
    }
  }
}

TEST_CASE("profiles are pairwise separable on some behavioral feature") {
  const auto c = generate_corpus(profiles(), 10, 31);  // 30 per class
  std::map<ClassLabel, std::vector<BehaviorVector>> by;
  for (const auto& s : c) by[*s.label].push_back(featurize_behavior(s));
  for (auto a : kAllClasses)
    for (auto b : kAllClasses) {
      if (a >= b) continue;
      bool separated = false;
      for (std::size_t f = 0; f < kBehaviorWidth && !separated; ++f) {
        std::vector<double> xa, xb;
        for (const auto& v : by[a]) xa.push_back(v[f]);
        for (const auto& v : by[b]) xb.push_back(v[f]);
        separated = stats::mann_whitney(xa, xb).p_two_sided < stats::kSignificance;
      }
      INFO(to_string(a) << " vs " << to_string(b));
      CHECK(separated);
    }
}

TEST_CASE("profile overrides") {
  auto p = default_profiles();
  apply_profile_overrides(p, R"({"manus": {"hold_mean": 40, "delete_rate": 0.1}})");
  CHECK(p.at(ClassLabel::manus).typing.latency.hold_mean == 40);
  CHECK(p.at(ClassLabel::manus).delete_rate == 0.1);
  CHECK_THROWS_AS(apply_profile_overrides(p, "{"), ConfigError);
  CHECK_THROWS_AS(apply_profile_overrides(p, R"({"robot": {}})"), ConfigError);
  CHECK_THROWS_AS(apply_profile_overrides(p, R"({"manus": {"colour": 1}})"), ConfigError);
  CHECK_THROWS_AS(apply_profile_overrides(p, R"({"manus": {"hold_mean": "x"}})"), ConfigError);
  CHECK_THROWS_AS(apply_profile_overrides(p, R"({"manus": {"delete_rate": 1.5}})"), ConfigError);
}
