#pragma once

// Synthetic session generator. Each class profile reproduces the documented
// typing mode, latency distribution, scroll style, mouse style and browser
// fingerprint multiplicities of one visitor class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agentfp/browser.hpp"
#include "agentfp/error.hpp"
#include "agentfp/session.hpp"
#include "json.hpp"

namespace agentfp::synth {

struct LatencyParams {
  double interkey_mean = 0.0, interkey_sd = 0.0;
  double hold_mean = 0.0, hold_sd = 0.0;
};

enum class TypingKind { paste_event, shortcut_paste, keystroke, change_fill };

struct TypingStyle {
  TypingKind kind = TypingKind::paste_event;
  LatencyParams latency;        // keystroke mode
  double modifier_hold_mean = 0.0, modifier_hold_sd = 0.0;  // shortcut keys
  int keystroke_tail = 0;       // >0: only the last N characters are typed, the prefix is set programmatically
  bool select_all_on_windows = false;  // Ctrl+A before pasting when the template reports Win32
};

enum class ScrollKind { instant_clusters, multi_burst, human_continuous, mixed };

struct BurstParams {
  double dist_mean = 0.0, dist_sd = 0.0;
  double dur_mean = 0.0, dur_sd = 0.0;
};

struct ScrollStyle {
  ScrollKind kind = ScrollKind::multi_burst;
  std::map<Task, std::vector<double>> positions;  // instant_clusters / mixed
  BurstParams burst;                              // multi_burst / mixed
  std::map<Task, BurstParams> burst_by_task;      // per-task override of `burst`
  double instant_fraction = 0.5;                  // mixed

  const BurstParams& burst_for(Task t) const {
    auto it = burst_by_task.find(t);
    return it == burst_by_task.end() ? burst : it->second;
  }
};

enum class MouseStyle { teleport, human_path };

struct BrowserTemplate {
  AttrMap attrs;
  double weight = 1.0;
};

struct ClassProfile {
  ClassLabel label = ClassLabel::human;
  TypingStyle typing;
  std::map<Task, TypingStyle> typing_by_task;  // per-task override ("mixed" mode)
  double delete_rate = 0.0;
  bool double_change_events = false;
  double overlap_probability = 0.0;  // chance the next key goes down before the current one is released
  ScrollStyle scroll;
  MouseStyle mouse = MouseStyle::teleport;
  double think_mean = 2000.0, think_sd = 500.0;  // ms between actions
  std::vector<BrowserTemplate> browser_attr_templates;

  const TypingStyle& typing_for(Task t) const {
    auto it = typing_by_task.find(t);
    return it == typing_by_task.end() ? typing : it->second;
  }
};

struct FieldSpec {
  std::string target;
  int length = 0;
};

struct TaskScript {
  Task task = Task::flights;
  std::vector<FieldSpec> fields_to_fill;
  int clicks = 0;         // non-text controls clicked
  int change_clicks = 0;  // of those, how many toggle a form value (input + change)
  int scroll_targets = 0;
};

inline TaskScript default_script(Task t) {
  switch (t) {
    case Task::flights:
      return {t,
              {{"origin", 9}, {"destination", 11}, {"depart_date", 10}, {"passenger_name", 15}, {"email", 22}},
              5, 4, 3};
    case Task::shop:
      return {t, {{"search", 14}}, 6, 2, 4};
    case Task::forums:
      return {t, {{"reply", 160}}, 2, 0, 5};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Browser templates

namespace templates {

inline const AttrList kPdfPlugins = {"PDF Viewer", "Chrome PDF Viewer", "Chromium PDF Viewer",
                                     "Microsoft Edge PDF Viewer", "WebKit built-in PDF"};
inline const AttrList kMacFonts = {"Arial Unicode MS", "Gill Sans", "Helvetica Neue", "Menlo"};
inline const AttrList kWinFonts = {"Calibri", "Franklin Gothic", "MS UI Gothic", "Segoe UI Light"};
inline const AttrList kLinuxFonts = {"Arimo", "Cousine", "Liberation Mono", "Ubuntu"};

inline void set_font_prefs(AttrMap& m, double scale, bool windows) {
  m["font_pref_default"] = 149.3125 * scale;
  m["font_pref_apple"] = 149.3125 * scale;
  m["font_pref_serif"] = 149.3125 * scale;
  m["font_pref_sans"] = 144.015625 * scale;
  m["font_pref_mono"] = (windows ? 132.0625 : 121.59375) * scale;
  m["font_pref_min"] = 9.234375 * scale;
  m["font_pref_system"] = (windows ? 146.09375 : 147.859375) * scale;
}

inline AttrMap base(std::string platform, std::string resolution, double cores, double memory, std::string tz,
                    std::string gamut, bool hdr, double touch, AttrList plugins, AttrList fonts, double font_scale) {
  AttrMap m;
  m["platform"] = std::move(platform);
  m["screen_resolution"] = std::move(resolution);
  m["hardware_concurrency"] = cores;
  m["device_memory"] = memory;
  m["timezone"] = std::move(tz);
  m["color_gamut"] = std::move(gamut);
  m["hdr"] = hdr;
  m["max_touch_points"] = touch;
  m["plugins"] = std::move(plugins);
  bool windows = std::get<std::string>(m["platform"]) == "Win32";
  m["fonts"] = std::move(fonts);
  m["color_depth"] = 24.0;
  m["vendor"] = std::string("Google Inc.");
  m["language"] = std::string("en-US");
  set_font_prefs(m, font_scale, windows);
  return m;
}

// The macOS and Windows environments shared by several local agents.
inline AttrMap shared_mac() {
  return base("MacIntel", "1440x900", 8, 8, "America/Los_Angeles", "p3", true, 0, kPdfPlugins, kMacFonts, 1.0);
}
inline AttrMap shared_windows() {
  return base("Win32", "1536x864", 8, 8, "America/Los_Angeles", "srgb", false, 0, kPdfPlugins, kWinFonts, 1.0);
}

}  // namespace templates

// ---------------------------------------------------------------------------
// Default profiles

inline std::vector<BrowserTemplate> human_templates(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](const auto& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
  const std::vector<std::string> platforms = {"MacIntel", "Win32", "Win32", "MacIntel", "Linux x86_64"};
  const std::vector<std::string> mac_res = {"1470x956", "1512x982", "1728x1117", "1280x800", "1680x1050"};
  const std::vector<std::string> win_res = {"1920x1080", "1366x768", "2560x1440", "1600x900", "1280x720"};
  const std::vector<std::string> linux_res = {"1920x1080", "2560x1440", "1920x1200"};
  const std::vector<double> cores = {4, 6, 10, 12, 16, 20};
  const std::vector<double> memory = {4, 8};
  const std::vector<std::string> zones = {"America/Los_Angeles", "America/Los_Angeles", "America/Denver",
                                          "America/Chicago", "Asia/Seoul", "Asia/Shanghai"};
  const AttrList extra_fonts = {"Roboto", "Source Code Pro", "Fira Code", "Noto Sans CJK", "Lato", "Open Sans",
                                "Montserrat", "Inter"};
  std::vector<BrowserTemplate> out;
  std::set<std::string> seen;
  while (out.size() < count) {
    const auto platform = pick(platforms);
    const bool win = platform == "Win32", mac = platform == "MacIntel";
    AttrList fonts = mac ? templates::kMacFonts : win ? templates::kWinFonts : templates::kLinuxFonts;
    for (const auto& f : extra_fonts)
      if (std::bernoulli_distribution(0.3)(rng)) fonts.push_back(f);
    const double zoom = std::uniform_real_distribution<double>(0.95, 1.12)(rng);
    auto m = templates::base(platform, mac ? pick(mac_res) : win ? pick(win_res) : pick(linux_res), pick(cores),
                             pick(memory), pick(zones), mac ? "p3" : "srgb", mac, win ? pick(std::vector<double>{0, 0, 10}) : 0,
                             std::bernoulli_distribution(0.9)(rng) ? templates::kPdfPlugins : AttrList{}, fonts,
                             std::round(zoom * 64.0) / 64.0);
    m["browser"] = std::string(pick(std::vector<std::string>{"Chrome", "Chrome", "Firefox", "Safari", "Edge"}));
    if (!seen.insert(canonicalize_fingerprint(m).hash).second) continue;
    out.push_back({std::move(m), 0.0});
  }
  // One dominant template, the rest equally likely.
  out[0].weight = 0.125;
  for (std::size_t i = 1; i < out.size(); ++i) out[i].weight = 0.875 / static_cast<double>(out.size() - 1);
  return out;
}

inline std::map<ClassLabel, ClassProfile> default_profiles() {
  using namespace templates;
  std::map<ClassLabel, ClassProfile> p;

  auto teleport_agent = [](ClassLabel l) {
    ClassProfile c;
    c.label = l;
    c.mouse = MouseStyle::teleport;
    return c;
  };

  {  // Atlas: programmatic paste events, multi-burst scrolling, macOS only.
    auto c = teleport_agent(ClassLabel::atlas);
    c.typing.kind = TypingKind::paste_event;
    c.scroll.kind = ScrollKind::multi_burst;
    c.scroll.burst = {420, 60, 180, 40};
    // Burst size grows with page length; Comet sits one step above Atlas on every task.
    c.scroll.burst_by_task = {{Task::flights, {300, 45, 100, 25}},
                              {Task::shop, {420, 60, 180, 40}},
                              {Task::forums, {560, 70, 320, 60}}};
    c.think_mean = 2500;
    c.think_sd = 700;
    c.browser_attr_templates = {{shared_mac(), 1.0}};
    p[c.label] = c;
  }
  {  // Browser Use: fast keystrokes, clears fields with an extra input+change.
    auto c = teleport_agent(ClassLabel::browser_use);
    c.typing.kind = TypingKind::keystroke;
    c.typing.latency = {5.31, 0.19, 10.19, 0.90};
    c.double_change_events = true;
    c.scroll.kind = ScrollKind::mixed;
    c.scroll.burst = {260, 40, 110, 30};
    c.scroll.positions = {{Task::flights, {640, 1320, 1960}},
                          {Task::shop, {380, 1100, 1650, 2400}},
                          {Task::forums, {900, 1750, 2550, 3300, 4100}}};
    c.think_mean = 1800;
    c.think_sd = 500;
    auto linux_a = base("Linux x86_64", "1920x1080", 16, 8, "America/Los_Angeles", "srgb", false, 0, kPdfPlugins,
                        kLinuxFonts, 1.0);
    auto linux_b = linux_a;
    linux_b["device_memory"] = 4.0;
    c.browser_attr_templates = {{shared_mac(), 0.4144}, {shared_windows(), 0.4056}, {linux_a, 0.12}, {linux_b, 0.06}};
    p[c.label] = c;
  }
  {  // Claude: change-event fills, near-zero-latency keystrokes when told to type.
    auto c = teleport_agent(ClassLabel::claude);
    c.typing.kind = TypingKind::change_fill;
    TypingStyle typed;
    typed.kind = TypingKind::keystroke;
    typed.latency = {0.56, 0.17, 0.94, 0.24};
    c.typing_by_task[Task::forums] = typed;
    c.scroll.kind = ScrollKind::multi_burst;
    c.scroll.burst = {350, 90, 0, 0};
    c.think_mean = 2200;
    c.think_sd = 600;
    c.browser_attr_templates = {{shared_mac(), 0.5}, {shared_windows(), 0.5}};
    p[c.label] = c;
  }
  {  // Comet: paste events; Ctrl+A first on Windows; larger font preferences on macOS.
    auto c = teleport_agent(ClassLabel::comet);
    c.typing.kind = TypingKind::paste_event;
    c.typing.select_all_on_windows = true;
    c.typing.modifier_hold_mean = 2.97;
    c.typing.modifier_hold_sd = 1.66;
    c.scroll.kind = ScrollKind::multi_burst;
    c.scroll.burst = {560, 70, 320, 60};
    c.scroll.burst_by_task = {{Task::flights, {420, 60, 180, 40}},
                              {Task::shop, {560, 70, 320, 60}},
                              {Task::forums, {700, 80, 450, 70}}};
    c.think_mean = 2000;
    c.think_sd = 600;
    auto mac = shared_mac();
    set_font_prefs(mac, 1.25, false);
    auto win = shared_windows();
    auto fonts = kWinFonts;
    fonts.push_back("Gill Sans");
    win["fonts"] = fonts;
    c.browser_attr_templates = {{mac, 0.5117}, {win, 0.4883}};
    p[c.label] = c;
  }
  {  // Skyvern: programmatic prefix then the last 20 characters as keystrokes.
    auto c = teleport_agent(ClassLabel::skyvern);
    c.typing.kind = TypingKind::keystroke;
    c.typing.latency = {9.52, 0.81, 11.33, 0.56};
    c.typing.keystroke_tail = 20;
    c.delete_rate = 0.02;
    c.scroll.kind = ScrollKind::instant_clusters;
    c.scroll.positions = {{Task::flights, {600, 1400, 2200}},
                          {Task::shop, {450, 1250, 1800, 2600}},
                          {Task::forums, {800, 1600, 2400, 3200, 4000}}};
    c.think_mean = 4000;
    c.think_sd = 1000;
    auto mac = base("MacIntel", "1920x1080", 8, 8, "America/New_York", "srgb", false, 0, {}, kMacFonts, 1.0);
    auto lin = mac;
    lin["platform"] = std::string("Linux x86_64");
    c.browser_attr_templates = {{mac, 0.5131}, {lin, 0.4869}};
    p[c.label] = c;
  }
  {  // ChatGPT Agent: Ctrl+V with long modifier holds, large scroll bursts, remote environments.
    auto c = teleport_agent(ClassLabel::chatgpt_agent);
    c.typing.kind = TypingKind::shortcut_paste;
    c.typing.modifier_hold_mean = 66.58;
    c.typing.modifier_hold_sd = 34.46;
    c.scroll.kind = ScrollKind::multi_burst;
    c.scroll.burst = {1400, 300, 900, 200};
    c.think_mean = 3000;
    c.think_sd = 900;
    std::vector<AttrMap> envs;
    for (const char* platform : {"Linux x86_64", "MacIntel"})
      for (bool plugins : {false, true}) {
        auto m = base(platform, "1280x960", 13, 8, "America/Los_Angeles", "srgb", false, 0,
                      plugins ? kPdfPlugins : AttrList{}, {"Calibri"}, 1.6);
        envs.push_back(m);
      }
    for (const char* tz : {"UTC", "America/Chicago", "Europe/London"}) {
      auto m = envs[0];
      m["timezone"] = std::string(tz);
      envs.push_back(m);
    }
    c.browser_attr_templates.push_back({envs[0], 0.6432});
    for (std::size_t i = 1; i < envs.size(); ++i) c.browser_attr_templates.push_back({envs[i], (1.0 - 0.6432) / 6.0});
    p[c.label] = c;
  }
  {  // Manus: slow holds, fast interkey, deletes before filling, lightweight Linux environment.
    auto c = teleport_agent(ClassLabel::manus);
    c.typing.kind = TypingKind::keystroke;
    c.typing.latency = {1.39, 0.21, 52.92, 0.53};
    c.delete_rate = 0.07;
    c.scroll.kind = ScrollKind::instant_clusters;
    c.scroll.positions = {{Task::flights, {520, 1180, 2050}},
                          {Task::shop, {700, 1500, 2300, 2900}},
                          {Task::forums, {1000, 1900, 2700, 3500, 4300}}};
    c.think_mean = 2600;
    c.think_sd = 700;
    auto main = base("Linux x86_64", "1280x1100", 6, 4, "UTC", "srgb", false, 10, kPdfPlugins, {}, 1.0);
    c.browser_attr_templates.push_back({main, 0.9656});
    const std::vector<std::pair<std::string, AttrValue>> tweaks = {{"timezone", std::string("America/New_York")},
                                                                   {"screen_resolution", std::string("1280x720")},
                                                                   {"plugins", AttrList{}},
                                                                   {"device_memory", 8.0}};
    for (const auto& [k, v] : tweaks) {
      auto m = main;
      m[k] = v;
      c.browser_attr_templates.push_back({m, (1.0 - 0.9656) / 4.0});
    }
    p[c.label] = c;
  }
  {  // Human: slow, variable, overlapping keystrokes; continuous scroll and pointer paths.
    ClassProfile c;
    c.label = ClassLabel::human;
    c.typing.kind = TypingKind::keystroke;
    c.typing.latency = {120.43, 78.74, 97.48, 27.13};
    c.overlap_probability = 0.15;
    c.delete_rate = 0.05;
    c.scroll.kind = ScrollKind::human_continuous;
    c.mouse = MouseStyle::human_path;
    c.think_mean = 1500;
    c.think_sd = 800;
    c.browser_attr_templates = human_templates(57, 0x5eed'0057);
    p[c.label] = c;
  }
  return p;
}

// Applies a JSON object of per-class overrides, e.g.
//   {"manus": {"hold_mean": 50, "delete_rate": 0.1, "think_mean": 3000}}
inline void apply_profile_overrides(std::map<ClassLabel, ClassProfile>& profiles, std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed profile overrides: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("profile overrides must be an object keyed by class");
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto cls = class_from_string(it.key());
    if (!cls) throw ConfigError("unknown class '" + it.key() + "' in profile overrides");
    auto& p = profiles.at(*cls);
    for (auto f = it.value().begin(); f != it.value().end(); ++f) {
      const auto& k = f.key();
      if (!f.value().is_number()) throw ConfigError("override '" + k + "' must be a number");
      const double v = f.value().get<double>();
      if (k == "interkey_mean") p.typing.latency.interkey_mean = v;
      else if (k == "interkey_sd") p.typing.latency.interkey_sd = v;
      else if (k == "hold_mean") p.typing.latency.hold_mean = v;
      else if (k == "hold_sd") p.typing.latency.hold_sd = v;
      else if (k == "modifier_hold_mean") p.typing.modifier_hold_mean = v;
      else if (k == "modifier_hold_sd") p.typing.modifier_hold_sd = v;
      else if (k == "delete_rate") p.delete_rate = v;
      else if (k == "overlap_probability") p.overlap_probability = v;
      else if (k == "think_mean") p.think_mean = v;
      else if (k == "think_sd") p.think_sd = v;
      else if (k == "scroll_dist_mean") p.scroll.burst.dist_mean = v;
      else if (k == "scroll_dist_sd") p.scroll.burst.dist_sd = v;
      else if (k == "scroll_dur_mean") p.scroll.burst.dur_mean = v;
      else if (k == "scroll_dur_sd") p.scroll.burst.dur_sd = v;
      else throw ConfigError("unknown override '" + k + "' for class '" + it.key() + "'");
    }
    if (p.delete_rate < 0.0 || p.delete_rate >= 1.0) throw ConfigError("delete_rate must be in [0, 1)");
  }
}

// ---------------------------------------------------------------------------
// Session generation

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t name_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

struct TimedEvent {
  double t;
  RawEvent e;
};

class SessionBuilder {
 public:
  SessionBuilder(const ClassProfile& profile, const TaskScript& script, std::uint64_t seed)
      : p_(profile), script_(script), rng_(seed) {}

  SessionLog build() {
    SessionLog s;
    s.task = script_.task;
    s.label = p_.label;
    s.visitor_id = random_id();
    s.browser_attrs = pick_template();
    windows_ = [&] {
      auto it = s.browser_attrs.find("platform");
      return it != s.browser_attrs.end() && std::holds_alternative<std::string>(it->second) &&
             std::get<std::string>(it->second) == "Win32";
    }();

    t_ = uniform(200.0, 800.0);
    mouse_x_ = uniform(300.0, 900.0);
    mouse_y_ = uniform(200.0, 500.0);
    for (const auto& action : plan()) {
      t_ += std::max(150.0, normal_trunc(p_.think_mean, p_.think_sd, 0.0));
      flush_blur();
      switch (action.kind) {
        case Action::field: fill_field(script_.fields_to_fill[action.index]); break;
        case Action::control: click_control(action.index); break;
        case Action::scroll: scroll_target(action.index); break;
      }
    }
    t_ += uniform(300.0, 900.0);
    flush_blur();

    std::stable_sort(events_.begin(), events_.end(), [](const TimedEvent& a, const TimedEvent& b) { return a.t < b.t; });
    s.events.reserve(events_.size());
    for (auto& te : events_) {
      te.e.ts = std::llround(te.t);
      s.events.push_back(std::move(te.e));
    }
    return s;
  }

 private:
  struct Action {
    enum Kind { field, control, scroll } kind;
    std::size_t index;
  };

  // Forums reading happens before replying; other tasks interleave actions evenly.
  std::vector<Action> plan() const {
    const auto nf = script_.fields_to_fill.size();
    const auto nc = static_cast<std::size_t>(std::max(0, script_.clicks));
    const auto ns = static_cast<std::size_t>(std::max(0, script_.scroll_targets));
    std::vector<std::pair<double, Action>> keyed;
    if (script_.task == Task::forums) {
      for (std::size_t i = 0; i < ns; ++i) keyed.push_back({static_cast<double>(i), {Action::scroll, i}});
      if (nc > 0) keyed.push_back({0.5, {Action::control, 0}});
      for (std::size_t i = 0; i < nf; ++i) keyed.push_back({1e6 + static_cast<double>(i), {Action::field, i}});
      for (std::size_t i = 1; i < nc; ++i) keyed.push_back({2e6 + static_cast<double>(i), {Action::control, i}});
    } else {
      auto spread = [&](std::size_t count, Action::Kind kind, double bias) {
        for (std::size_t i = 0; i < count; ++i)
          keyed.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(count) + bias, {kind, i}});
      };
      spread(nf, Action::field, 0.0);
      spread(nc, Action::control, 1e-6);
      spread(ns, Action::scroll, 2e-6);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Action> out;
    for (const auto& k : keyed) out.push_back(k.second);
    return out;
  }

  // --- sampling helpers
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  bool chance(double p) { return p > 0.0 && std::bernoulli_distribution(std::min(1.0, p))(rng_); }

  double normal_trunc(double mean, double sd, double lower) {
    if (sd <= 0.0) return std::max(mean, lower);
    std::normal_distribution<double> d(mean, sd);
    for (int i = 0; i < 1000; ++i) {
      double v = d(rng_);
      if (v >= lower) return v;
    }
    return std::max(mean, lower);
  }

  std::string random_id() {
    static constexpr char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string id(10, 'a');
    std::uniform_int_distribution<int> d(0, 35);
    for (auto& c : id) c = alphabet[d(rng_)];
    return id;
  }

  AttrMap pick_template() {
    const auto& ts = p_.browser_attr_templates;
    if (ts.empty()) return {};
    std::vector<double> w;
    for (const auto& t : ts) w.push_back(t.weight);
    std::discrete_distribution<std::size_t> d(w.begin(), w.end());
    return ts[d(rng_)].attrs;
  }

  static std::pair<double, double> layout_position(std::string_view target) {
    auto h = name_hash(target);
    return {120.0 + static_cast<double>(h % 1100), 120.0 + static_cast<double>((h >> 20) % 640)};
  }

  // --- emission
  void emit(double t, RawEvent e) { events_.push_back({t, std::move(e)}); }
  void emit_simple(double t, EventKind k, const std::string& target) {
    RawEvent e;
    e.kind = k;
    e.target = target;
    emit(t, std::move(e));
  }
  void emit_key(double t, EventKind k, const std::string& key) {
    RawEvent e;
    e.kind = k;
    e.key = key;
    emit(t, std::move(e));
  }
  void emit_mouse(double t, EventKind k, double x, double y, std::optional<int> button = std::nullopt) {
    RawEvent e;
    e.kind = k;
    e.x = std::round(x * 10.0) / 10.0;
    e.y = std::round(y * 10.0) / 10.0;
    e.button = button;
    emit(t, std::move(e));
  }
  void emit_scroll(double t, double y) {
    RawEvent e;
    e.kind = EventKind::scroll;
    e.scroll_x = 0.0;
    e.scroll_y = std::round(y);
    emit(t, std::move(e));
  }

  // Text fields fire change when they lose focus, i.e. at the next action.
  void flush_blur() {
    if (!pending_change_) return;
    emit_simple(t_, EventKind::change, *pending_change_);
    pending_change_.reset();
    t_ += 1.0;
  }

  void click(const std::string& target) {
    auto [tx, ty] = layout_position(target);
    if (p_.mouse == MouseStyle::teleport) {
      emit_mouse(t_, EventKind::mousemove, tx, ty);
      t_ += uniform(0.0, 3.0);
      emit_mouse(t_, EventKind::mousedown, tx, ty, 0);
      t_ += uniform(1.0, 60.0);
      emit_mouse(t_, EventKind::mouseup, tx, ty, 0);
    } else {
      tx += uniform(-8.0, 8.0);
      ty += uniform(-5.0, 5.0);
      human_path_to(tx, ty);
      t_ += uniform(60.0, 200.0);
      emit_mouse(t_, EventKind::mousedown, tx, ty, 0);
      t_ += uniform(60.0, 140.0);
      emit_mouse(t_, EventKind::mouseup, tx, ty, 0);
    }
    t_ += uniform(5.0, 40.0);
  }

  // Smooth curved path with jitter, 10-20 ms between samples, and an
  // occasional mid-path pause long enough to split the movement.
  void human_path_to(double tx, double ty) {
    const double sx = mouse_x_, sy = mouse_y_;
    const double dx = tx - sx, dy = ty - sy;
    const double dist = std::hypot(dx, dy);
    const double bend = uniform(0.1, 0.35) * (chance(0.5) ? 1.0 : -1.0);
    const double cx = sx + dx / 2.0 - dy * bend, cy = sy + dy / 2.0 + dx * bend;
    const double duration = std::max(150.0, normal_trunc(350.0 + dist * 0.6, 120.0, 0.0));
    const bool pause = chance(0.2);
    const double pause_at = uniform(0.3, 0.7);
    double elapsed = 0.0;
    bool paused = false;
    std::normal_distribution<double> jitter(0.0, 1.2);
    while (elapsed < duration) {
      const double u = elapsed / duration;
      const double s = u * u * (3.0 - 2.0 * u);  // ease in/out
      const double x = (1 - s) * (1 - s) * sx + 2 * (1 - s) * s * cx + s * s * tx + jitter(rng_);
      const double y = (1 - s) * (1 - s) * sy + 2 * (1 - s) * s * cy + s * s * ty + jitter(rng_);
      emit_mouse(t_, EventKind::mousemove, x, y);
      const double step = uniform(10.0, 20.0);
      t_ += step;
      elapsed += step;
      if (pause && !paused && u >= pause_at) {
        t_ += uniform(300.0, 900.0);
        paused = true;
      }
    }
    emit_mouse(t_, EventKind::mousemove, tx, ty);
    t_ += uniform(10.0, 20.0);
    mouse_x_ = tx;
    mouse_y_ = ty;
  }

  void click_control(std::size_t index) {
    const std::string target = "control_" + std::to_string(index);
    click(target);
    if (static_cast<int>(index) < script_.change_clicks) {
      emit_simple(t_, EventKind::input, target);
      t_ += uniform(0.5, 2.0);
      emit_simple(t_, EventKind::change, target);
      t_ += 1.0;
    }
  }

  // Two-key modifier shortcut (modifier down, key down, key up, modifier up).
  void shortcut(const std::string& key, double hold_mean, double hold_sd) {
    const double mod_down = t_;
    const double key_down = mod_down + uniform(1.0, 4.0);
    const double key_hold = normal_trunc(hold_mean, hold_sd, 0.0);
    const double mod_hold = normal_trunc(hold_mean, hold_sd, 0.0);
    const double key_up = key_down + key_hold;
    const double mod_up = std::max(mod_down + mod_hold, key_up + uniform(0.2, 2.0));
    emit_key(mod_down, EventKind::keydown, "Control");
    emit_key(key_down, EventKind::keydown, key);
    emit_key(key_up, EventKind::keyup, key);
    emit_key(mod_up, EventKind::keyup, "Control");
    t_ = mod_up + uniform(1.0, 5.0);
  }

  char random_char() {
    static constexpr char letters[] = "etaoinshrdlucmfwypvbgkjqxz ";
    std::uniform_int_distribution<int> d(0, 26);
    return letters[d(rng_)];
  }

  // Non-overlap interkey component chosen so the mixture with overlapping
  // presses keeps the profile's interkey mean and standard deviation.
  std::pair<double, double> interkey_component(const LatencyParams& lat) const {
    const double q = p_.overlap_probability;
    if (q <= 0.0) return {lat.interkey_mean, lat.interkey_sd};
    // Overlap amounts are uniform on [5, 40] ms, entered as negative interkey.
    const double om = -22.5, o2 = (5.0 * 5.0 + 5.0 * 40.0 + 40.0 * 40.0) / 3.0;
    const double m = (lat.interkey_mean - q * om) / (1.0 - q);
    const double second = (lat.interkey_mean * lat.interkey_mean + lat.interkey_sd * lat.interkey_sd - q * o2) / (1.0 - q);
    const double var = second - m * m;
    if (var <= 0.0) throw ConfigError("overlap probability incompatible with interkey mean/sd");
    return {m, std::sqrt(var)};
  }

  void type_keys(const std::string& target, int count, const LatencyParams& lat, bool human_typos) {
    const auto [ik_mean, ik_sd] = interkey_component(lat);
    double down = t_;
    double last_up = t_;
    auto press = [&](const std::string& key) {
      const double hold = normal_trunc(lat.hold_mean, lat.hold_sd, 0.0);
      emit_key(down, EventKind::keydown, key);
      emit_simple(down + 0.01, EventKind::input, target);
      emit_key(down + hold, EventKind::keyup, key);
      last_up = std::max(last_up, down + hold);
      double gap;
      if (chance(p_.overlap_probability)) {
        gap = -std::min(uniform(5.0, 40.0), 0.8 * hold);
      } else {
        gap = normal_trunc(ik_mean, ik_sd, 0.0);
      }
      down = down + hold + gap;
    };
    for (int i = 0; i < count; ++i) {
      if (human_typos && chance(p_.delete_rate)) {
        press(std::string(1, random_char()));
        press("Backspace");
      }
      press(std::string(1, random_char()));
    }
    t_ = std::max(down, last_up);
  }

  void fill_field(const FieldSpec& field) {
    const auto& style = p_.typing_for(script_.task);
    const int length = std::max(1, static_cast<int>(std::lround(field.length * uniform(0.8, 1.2))));
    click(field.target);
    switch (style.kind) {
      case TypingKind::paste_event:
        if (style.select_all_on_windows && windows_) shortcut("a", style.modifier_hold_mean, style.modifier_hold_sd);
        emit_simple(t_, EventKind::paste, field.target);
        t_ += uniform(0.5, 3.0);
        emit_simple(t_, EventKind::input, field.target);
        pending_change_ = field.target;
        break;
      case TypingKind::shortcut_paste:
        shortcut("v", style.modifier_hold_mean, style.modifier_hold_sd);
        emit_simple(t_, EventKind::paste, field.target);
        t_ += uniform(0.5, 3.0);
        emit_simple(t_, EventKind::input, field.target);
        pending_change_ = field.target;
        break;
      case TypingKind::change_fill:
        t_ += uniform(5.0, 30.0);
        emit_simple(t_, EventKind::change, field.target);
        break;
      case TypingKind::keystroke: {
        if (p_.double_change_events) {
          emit_simple(t_, EventKind::input, field.target);
          t_ += uniform(0.5, 2.0);
          emit_simple(t_, EventKind::change, field.target);
          t_ += uniform(5.0, 20.0);
        }
        const bool human = p_.mouse == MouseStyle::human_path;
        if (!human && p_.delete_rate > 0.0) {
          std::binomial_distribution<int> deletes(length, p_.delete_rate / (1.0 - p_.delete_rate));
          if (int k = deletes(rng_); k > 0) type_keys_named(field.target, k, style.latency, "Delete");
        }
        int typed = length;
        if (style.keystroke_tail > 0 && length > style.keystroke_tail) {
          emit_simple(t_, EventKind::input, field.target);
          t_ += uniform(2.0, 10.0);
          typed = style.keystroke_tail;
        }
        type_keys(field.target, typed, style.latency, human);
        pending_change_ = field.target;
        break;
      }
    }
  }

  void type_keys_named(const std::string& target, int count, const LatencyParams& lat, const std::string& key) {
    double down = t_;
    for (int i = 0; i < count; ++i) {
      const double hold = normal_trunc(lat.hold_mean, lat.hold_sd, 0.0);
      emit_key(down, EventKind::keydown, key);
      emit_simple(down + 0.01, EventKind::input, target);
      emit_key(down + hold, EventKind::keyup, key);
      down += hold + normal_trunc(lat.interkey_mean, lat.interkey_sd, 0.0);
    }
    t_ = down;
  }

  void scroll_to(double target_y) {
    emit_scroll(t_, target_y);
    scroll_y_ = std::round(target_y);
    t_ += uniform(0.0, 2.0);
    RawEvent end;
    end.kind = EventKind::scrollend;
    emit(t_, std::move(end));
    t_ += 1.0;
  }

  void burst(double distance, double duration, double spacing_lo, double spacing_hi) {
    const double dir = scroll_y_ + distance > kPageHeight ? -1.0 : 1.0;
    const double start_y = scroll_y_;
    if (duration < 1.0) {
      emit_scroll(t_, start_y + dir * distance);
      scroll_y_ = std::round(start_y + dir * distance);
    } else {
      const int steps = std::max(2, static_cast<int>(std::ceil(duration / uniform(spacing_lo, spacing_hi))) + 1);
      for (int i = 1; i <= steps; ++i) {
        const double u = static_cast<double>(i) / steps;
        const double when = t_ + duration * (static_cast<double>(i - 1) / (steps - 1));
        emit_scroll(when, start_y + dir * distance * u);
      }
      scroll_y_ = std::round(start_y + dir * distance);
      t_ += duration;
    }
    t_ += uniform(30.0, 120.0);
    RawEvent end;
    end.kind = EventKind::scrollend;
    emit(t_, std::move(end));
  }

  void scroll_target(std::size_t index) {
    const auto& sc = p_.scroll;
    auto instant = [&] {
      const auto it = sc.positions.find(script_.task);
      if (it == sc.positions.end() || it->second.empty()) return;
      scroll_to(it->second[index % it->second.size()]);
    };
    auto multi = [&] {
      const int bursts = std::uniform_int_distribution<int>(1, 3)(rng_);
      for (int b = 0; b < bursts; ++b) {
        if (b > 0) t_ += uniform(400.0, 1500.0);
        const auto& bp = sc.burst_for(script_.task);
        const double dist = normal_trunc(bp.dist_mean, bp.dist_sd, 20.0);
        const double dur = bp.dur_mean > 0.0 ? normal_trunc(bp.dur_mean, bp.dur_sd, 0.0) : 0.0;
        burst(dist, dur, 60.0, 200.0);
      }
    };
    switch (sc.kind) {
      case ScrollKind::instant_clusters: instant(); break;
      case ScrollKind::multi_burst: multi(); break;
      case ScrollKind::mixed:
        if (chance(sc.instant_fraction)) instant();
        else multi();
        break;
      case ScrollKind::human_continuous: {
        const int bursts = std::uniform_int_distribution<int>(1, 3)(rng_);
        for (int b = 0; b < bursts; ++b) {
          if (b > 0) t_ += uniform(300.0, 2000.0);
          const double dist = normal_trunc(900.0, 450.0, 100.0);
          const double dur = normal_trunc(900.0, 400.0, 150.0);
          burst(dist, dur, 14.0, 18.0);
        }
        break;
      }
    }
  }

  static constexpr double kPageHeight = 5000.0;

  const ClassProfile& p_;
  const TaskScript& script_;
  std::mt19937_64 rng_;
  std::vector<TimedEvent> events_;
  std::optional<std::string> pending_change_;
  double t_ = 0.0;
  double mouse_x_ = 0.0, mouse_y_ = 0.0;
  double scroll_y_ = 0.0;
  bool windows_ = false;
};

}  // namespace detail

inline SessionLog generate_session(const ClassProfile& profile, const TaskScript& script, std::uint64_t seed) {
  return detail::SessionBuilder(profile, script, seed).build();
}

inline std::uint64_t session_seed(std::uint64_t corpus_seed, ClassLabel c, Task t, std::size_t i) {
  std::uint64_t x = detail::splitmix64(corpus_seed);
  x = detail::splitmix64(x ^ (static_cast<std::uint64_t>(c) + 1) * 0x100000001b3ULL);
  x = detail::splitmix64(x ^ (static_cast<std::uint64_t>(t) + 1) * 0xc2b2ae3d27d4eb4fULL);
  return detail::splitmix64(x ^ static_cast<std::uint64_t>(i));
}

// n sessions for every (class, task), classes and tasks in enum order.
inline std::vector<SessionLog> generate_corpus(const std::map<ClassLabel, ClassProfile>& profiles, std::size_t n,
                                               std::uint64_t seed) {
  if (n == 0) throw ConfigError("sessions per class and task must be at least 1");
  std::vector<SessionLog> out;
  out.reserve(profiles.size() * kAllTasks.size() * n);
  std::set<std::string> ids;
  for (const auto& [cls, profile] : profiles)
    for (auto task : kAllTasks) {
      const auto script = default_script(task);
      for (std::size_t i = 0; i < n; ++i) {
        auto s = generate_session(profile, script, session_seed(seed, cls, task, i));
        // Visitor ids are random; disambiguate the astronomically unlikely clash.
        while (!ids.insert(s.visitor_id).second) s.visitor_id += "x";
        out.push_back(std::move(s));
      }
    }
  return out;
}

}  // namespace agentfp::synth
