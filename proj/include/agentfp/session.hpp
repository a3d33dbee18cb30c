#pragma once

// Event and session data model plus the line-delimited session file format.
//
// A session file is UTF-8 text. Line 1 is a header object
//   {"visitor_id": ..., "task": ..., "label": ..., "browser_attrs": {...}}
// and every following non-empty line is one event object
//   {"kind": "keydown", "ts": 120, "key": "a"}.
// Unknown fields are ignored on read.

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "agentfp/error.hpp"
#include "json.hpp"

namespace agentfp {

enum class EventKind {
  keydown,
  keyup,
  paste,
  input,
  change,
  scroll,
  scrollend,
  mousemove,
  mousedown,
  mouseup,
};

enum class Task { flights, shop, forums };

enum class ClassLabel {
  atlas,
  browser_use,
  claude,
  comet,
  skyvern,
  chatgpt_agent,
  manus,
  human,
};

inline constexpr std::array<EventKind, 10> kAllEventKinds = {
    EventKind::keydown,   EventKind::keyup,     EventKind::paste,
    EventKind::input,     EventKind::change,    EventKind::scroll,
    EventKind::scrollend, EventKind::mousemove, EventKind::mousedown,
    EventKind::mouseup};

inline constexpr std::array<Task, 3> kAllTasks = {Task::flights, Task::shop,
                                                  Task::forums};

inline constexpr std::array<ClassLabel, 8> kAllClasses = {
    ClassLabel::atlas,         ClassLabel::browser_use, ClassLabel::claude,
    ClassLabel::comet,         ClassLabel::skyvern,     ClassLabel::chatgpt_agent,
    ClassLabel::manus,         ClassLabel::human};

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::keydown: return "keydown";
    case EventKind::keyup: return "keyup";
    case EventKind::paste: return "paste";
    case EventKind::input: return "input";
    case EventKind::change: return "change";
    case EventKind::scroll: return "scroll";
    case EventKind::scrollend: return "scrollend";
    case EventKind::mousemove: return "mousemove";
    case EventKind::mousedown: return "mousedown";
    case EventKind::mouseup: return "mouseup";
  }
  return "?";
}

constexpr std::string_view to_string(Task t) {
  switch (t) {
    case Task::flights: return "flights";
    case Task::shop: return "shop";
    case Task::forums: return "forums";
  }
  return "?";
}

constexpr std::string_view to_string(ClassLabel c) {
  switch (c) {
    case ClassLabel::atlas: return "atlas";
    case ClassLabel::browser_use: return "browser_use";
    case ClassLabel::claude: return "claude";
    case ClassLabel::comet: return "comet";
    case ClassLabel::skyvern: return "skyvern";
    case ClassLabel::chatgpt_agent: return "chatgpt_agent";
    case ClassLabel::manus: return "manus";
    case ClassLabel::human: return "human";
  }
  return "?";
}

inline std::optional<EventKind> event_kind_from_string(std::string_view s) {
  for (auto k : kAllEventKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::optional<Task> task_from_string(std::string_view s) {
  for (auto t : kAllTasks)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

inline std::optional<ClassLabel> class_from_string(std::string_view s) {
  for (auto c : kAllClasses)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

constexpr bool is_key_event(EventKind k) {
  return k == EventKind::keydown || k == EventKind::keyup;
}
constexpr bool is_button_event(EventKind k) {
  return k == EventKind::mousedown || k == EventKind::mouseup;
}
constexpr bool is_mouse_event(EventKind k) {
  return k == EventKind::mousemove || is_button_event(k);
}
constexpr bool is_scroll_position_event(EventKind k) {
  return k == EventKind::scroll;
}

struct RawEvent {
  EventKind kind = EventKind::input;
  std::int64_t ts = 0;  // ms since page load
  std::optional<std::string> key;
  std::optional<int> button;
  std::optional<double> x, y;
  std::optional<double> scroll_x, scroll_y;
  std::optional<std::string> target;

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

using AttrList = std::vector<std::string>;
using AttrValue = std::variant<std::string, double, bool, AttrList>;
using AttrMap = std::map<std::string, AttrValue>;

struct SessionLog {
  std::string visitor_id;
  Task task = Task::flights;
  std::optional<ClassLabel> label;
  AttrMap browser_attrs;
  std::vector<RawEvent> events;

  friend bool operator==(const SessionLog&, const SessionLog&) = default;
};

inline void sort_events(std::vector<RawEvent>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.ts < b.ts; });
}

// ---------------------------------------------------------------------------
// JSON conversion

namespace detail {

using ojson = nlohmann::ordered_json;

inline AttrValue attr_from_json(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number()) return v.get<double>();
  if (v.is_array()) {
    bool all_strings = std::all_of(v.begin(), v.end(),
                                   [](const nlohmann::json& e) { return e.is_string(); });
    if (all_strings) {
      AttrList out;
      for (const auto& e : v) out.push_back(e.get<std::string>());
      return out;
    }
  }
  // Anything else (objects, null, mixed arrays) is kept as its JSON text.
  return v.dump();
}

inline ojson attr_to_json(const AttrValue& v) {
  return std::visit([](const auto& x) -> ojson { return ojson(x); }, v);
}

inline ojson event_to_json(const RawEvent& e) {
  ojson j;
  j["kind"] = std::string(to_string(e.kind));
  j["ts"] = e.ts;
  if (e.key) j["key"] = *e.key;
  if (e.button) j["button"] = *e.button;
  if (e.x) j["x"] = *e.x;
  if (e.y) j["y"] = *e.y;
  if (e.scroll_x) j["scroll_x"] = *e.scroll_x;
  if (e.scroll_y) j["scroll_y"] = *e.scroll_y;
  if (e.target) j["target"] = *e.target;
  return j;
}

// Throws std::invalid_argument with a short reason; callers attach position.
inline RawEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("event record is not an object");
  auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string())
    throw std::invalid_argument("missing event kind");
  auto kind = event_kind_from_string(kind_it->get<std::string>());
  if (!kind)
    throw std::invalid_argument("unknown event kind '" + kind_it->get<std::string>() + "'");

  RawEvent e;
  e.kind = *kind;
  auto ts_it = j.find("ts");
  if (ts_it == j.end() || !ts_it->is_number_integer())
    throw std::invalid_argument("missing or non-integer ts");
  e.ts = ts_it->get<std::int64_t>();

  auto opt_string = [&](const char* name, std::optional<std::string>& out) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return;
    if (!it->is_string()) throw std::invalid_argument(std::string(name) + " must be a string");
    out = it->get<std::string>();
  };
  auto opt_number = [&](const char* name, std::optional<double>& out) {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return;
    if (!it->is_number()) throw std::invalid_argument(std::string(name) + " must be a number");
    out = it->get<double>();
  };
  opt_string("key", e.key);
  opt_string("target", e.target);
  opt_number("x", e.x);
  opt_number("y", e.y);
  opt_number("scroll_x", e.scroll_x);
  opt_number("scroll_y", e.scroll_y);
  if (auto it = j.find("button"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw std::invalid_argument("button must be an integer");
    e.button = it->get<int>();
  }
  return e;
}

inline AttrMap attrs_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("browser_attrs must be an object");
  AttrMap out;
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = attr_from_json(it.value());
  return out;
}

inline ojson attrs_to_json(const AttrMap& attrs) {
  ojson j = ojson::object();
  for (const auto& [k, v] : attrs) j[k] = attr_to_json(v);
  return j;
}

}  // namespace detail

inline std::string serialize_event(const RawEvent& e) { return detail::event_to_json(e).dump(); }

inline std::string serialize_header(const SessionLog& s) {
  detail::ojson h;
  h["visitor_id"] = s.visitor_id;
  h["task"] = std::string(to_string(s.task));
  if (s.label) h["label"] = std::string(to_string(*s.label));
  h["browser_attrs"] = detail::attrs_to_json(s.browser_attrs);
  return h.dump();
}

inline void write_session(std::ostream& os, const SessionLog& s) {
  os << serialize_header(s) << '\n';
  for (const auto& e : s.events) os << serialize_event(e) << '\n';
}

inline std::string serialize_session(const SessionLog& s) {
  std::ostringstream os;
  write_session(os, s);
  return os.str();
}

inline SessionLog read_session(std::istream& is) {
  SessionLog s;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed record: ") + e.what());
    }
    if (!have_header) {
      try {
        if (!j.is_object()) throw std::invalid_argument("header is not an object");
        auto vid = j.find("visitor_id");
        if (vid == j.end() || !vid->is_string()) throw std::invalid_argument("missing visitor_id");
        s.visitor_id = vid->get<std::string>();
        auto task_it = j.find("task");
        if (task_it == j.end() || !task_it->is_string()) throw std::invalid_argument("missing task");
        auto task = task_from_string(task_it->get<std::string>());
        if (!task) throw std::invalid_argument("unknown task '" + task_it->get<std::string>() + "'");
        s.task = *task;
        if (auto l = j.find("label"); l != j.end() && !l->is_null()) {
          if (!l->is_string()) throw std::invalid_argument("label must be a string");
          auto c = class_from_string(l->get<std::string>());
          if (!c) throw std::invalid_argument("unknown label '" + l->get<std::string>() + "'");
          s.label = c;
        }
        if (auto a = j.find("browser_attrs"); a != j.end() && !a->is_null())
          s.browser_attrs = detail::attrs_from_json(*a);
      } catch (const std::invalid_argument& e) {
        throw ParseError(lineno, e.what());
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(lineno, e.what());
      }
      have_header = true;
      continue;
    }
    try {
      s.events.push_back(detail::event_from_json(j));
    } catch (const std::invalid_argument& e) {
      throw ParseError(lineno, e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (!have_header) throw ParseError(lineno == 0 ? 1 : lineno, "missing session header");
  sort_events(s.events);
  return s;
}

inline SessionLog parse_session(std::string_view bytes) {
  std::istringstream is{std::string(bytes)};
  return read_session(is);
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::optional<std::size_t> event_index;  // empty for session-level rules
  std::string rule;

  std::string describe() const {
    if (event_index) return "event " + std::to_string(*event_index) + ": " + rule;
    return "session: " + rule;
  }
};

inline void check_event(const RawEvent& e, std::optional<std::size_t> index,
                        std::vector<Violation>& out) {
  auto add = [&](std::string rule) { out.push_back({index, std::move(rule)}); };
  const auto kind = std::string(to_string(e.kind));
  if (e.ts < 0) add("ts must be non-negative");
  if (is_key_event(e.kind) != e.key.has_value())
    add(is_key_event(e.kind) ? kind + " requires key" : kind + " must not carry key");
  if (is_button_event(e.kind) != e.button.has_value())
    add(is_button_event(e.kind) ? kind + " requires button" : kind + " must not carry button");
  if (e.button && (*e.button < 0 || *e.button > 4)) add("button must be in 0..4");
  bool has_xy = e.x.has_value() && e.y.has_value();
  bool any_xy = e.x.has_value() || e.y.has_value();
  if (is_mouse_event(e.kind) ? !has_xy : any_xy)
    add(is_mouse_event(e.kind) ? kind + " requires x and y" : kind + " must not carry x/y");
  bool has_scroll = e.scroll_x.has_value() && e.scroll_y.has_value();
  bool any_scroll = e.scroll_x.has_value() || e.scroll_y.has_value();
  if (is_scroll_position_event(e.kind) ? !has_scroll : any_scroll)
    add(is_scroll_position_event(e.kind) ? kind + " requires scroll_x and scroll_y"
                                         : kind + " must not carry scroll offsets");
}

inline std::vector<Violation> validate_session(const SessionLog& s) {
  std::vector<Violation> out;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    check_event(s.events[i], i, out);
    if (i > 0 && s.events[i].ts < s.events[i - 1].ts)
      out.push_back({i, "events not sorted by ts"});
  }
  return out;
}

}  // namespace agentfp
