#pragma once

// Behavioral featurization: keystroke pairing, scroll-burst and mouse-movement
// segmentation, and the fixed 50-slot behavior vector.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agentfp/error.hpp"
#include "agentfp/session.hpp"

namespace agentfp {

inline constexpr double kSentinel = -1.0;
inline constexpr std::int64_t kMouseIdleThresholdMs = 250;
inline constexpr std::int64_t kScrollGapThresholdMs = 250;
inline constexpr std::size_t kBehaviorWidth = 50;

// Slot order of the behavior vector. Mouse block (24), typing block (16),
// scrolling block (10).
inline constexpr std::array<std::string_view, kBehaviorWidth> kBehaviorFeatureNames = {
    "Mouse movement angle of curvature range",
    "Number of mouse",
    "Presence of mouse button 0",
    "Mouse movement angle of curvature mean",
    "Mouse movement direction mean",
    "Mouse button 0 down/up ratio",
    "Mouse movement angle of curvature standard deviation",
    "Mouse movement curvature distance median",
    "Mouse movement direction range",
    "Mouse movement curvature distance mean",
    "Presence of mouse move events",
    "Mouse movement direction standard deviation",
    "Mouse movement direction median",
    "Mouse movement angle of curvature median",
    "Mouse movement curvature distance range",
    "Mouse movement curvature distance standard deviation",
    "Presence of mouse button 1",
    "Mouse button 1 down/up ratio",
    "Presence of mouse button 2",
    "Mouse button 2 down/up ratio",
    "Presence of mouse button 3",
    "Mouse button 3 down/up ratio",
    "Presence of mouse button 4",
    "Mouse button 4 down/up ratio",
    "Presence of paste event",
    "Hold latency median",
    "Inter-key latency median",
    "Hold latency mean",
    "Number of change events",
    "Number of input events",
    "Hold latency range",
    "Inter-key latency mean",
    "Dangling keydown event (keydown not paired with keyup)",
    "Inter-key latency range",
    "Hold latency standard deviation",
    "Inter-key latency standard deviation",
    "Number of backspace/delete keypresses",
    "Presence of keypresses (keydown and keyup)",
    "Dangling keyup event (keyup not paired with keydown)",
    "Ratio of backspace/delete to total keypresses",
    "Scroll distance standard deviation",
    "Scroll distance mean",
    "Scroll time median",
    "Scroll distance range",
    "Scroll time mean",
    "Scroll distance median",
    "Scroll time standard deviation",
    "Presence of scroll event",
    "Scroll time range",
    "Presence of scroll end event",
};

// Named slot indices, used by the featurizer and by tests.
namespace slot {
inline constexpr std::size_t angle_range = 0, mouse_movements = 1, button0_present = 2,
                             angle_mean = 3, direction_mean = 4, button0_ratio = 5,
                             angle_std = 6, curvature_median = 7, direction_range = 8,
                             curvature_mean = 9, mousemove_present = 10, direction_std = 11,
                             direction_median = 12, angle_median = 13, curvature_range = 14,
                             curvature_std = 15;
// Presence of button b is at button_present(b), its ratio right after.
constexpr std::size_t button_present(int b) { return b == 0 ? button0_present : 16 + 2 * (b - 1); }
constexpr std::size_t button_ratio(int b) { return b == 0 ? button0_ratio : 17 + 2 * (b - 1); }

inline constexpr std::size_t paste_present = 24, hold_median = 25, interkey_median = 26,
                             hold_mean = 27, change_count = 28, input_count = 29,
                             hold_range = 30, interkey_mean = 31, dangling_down = 32,
                             interkey_range = 33, hold_std = 34, interkey_std = 35,
                             backspace_count = 36, keypress_present = 37, dangling_up = 38,
                             backspace_ratio = 39;

inline constexpr std::size_t scroll_distance_std = 40, scroll_distance_mean = 41,
                             scroll_time_median = 42, scroll_distance_range = 43,
                             scroll_time_mean = 44, scroll_distance_median = 45,
                             scroll_time_std = 46, scroll_present = 47, scroll_time_range = 48,
                             scrollend_present = 49;
}  // namespace slot

// Boolean and count slots: never the sentinel.
inline bool is_presence_or_count_slot(std::size_t i) {
  using namespace slot;
  switch (i) {
    case mouse_movements: case mousemove_present: case paste_present: case change_count:
    case input_count: case dangling_down: case backspace_count: case keypress_present:
    case dangling_up: case scroll_present: case scrollend_present:
      return true;
    default:
      break;
  }
  for (int b = 0; b <= 4; ++b)
    if (i == button_present(b)) return true;
  return false;
}

using BehaviorVector = std::array<double, kBehaviorWidth>;

struct Keystroke {
  std::string key;
  std::int64_t down_ts = 0;
  std::int64_t up_ts = 0;

  friend bool operator==(const Keystroke&, const Keystroke&) = default;
};

struct KeystrokePairing {
  std::vector<Keystroke> keystrokes;
  bool dangling_down = false;
  bool dangling_up = false;
};

struct ScrollBurst {
  double distance = 0.0;
  std::int64_t duration = 0;
  std::int64_t start_ts = 0;

  friend bool operator==(const ScrollBurst&, const ScrollBurst&) = default;
};

struct MousePoint {
  double x = 0.0, y = 0.0;
  std::int64_t ts = 0;
};

enum class MovementEnd { click, idle, end_of_log };

struct MouseMovement {
  std::vector<MousePoint> points;
  MovementEnd terminator = MovementEnd::end_of_log;
};

struct MouseGeometry {
  std::vector<double> directions;
  std::vector<double> angles;
  std::vector<double> curvature_distances;
};

struct Latencies {
  std::vector<double> hold;
  std::vector<double> interkey;
};

// Each keydown pairs with the earliest later unmatched keyup of the same key.
inline KeystrokePairing pair_keystrokes(std::span<const RawEvent> events) {
  KeystrokePairing out;
  std::unordered_map<std::string, std::deque<std::size_t>> pending;  // key -> indices into keystrokes
  std::vector<bool> matched;
  for (const auto& e : events) {
    if (!is_key_event(e.kind) || !e.key) continue;
    if (e.kind == EventKind::keydown) {
      pending[*e.key].push_back(out.keystrokes.size());
      out.keystrokes.push_back({*e.key, e.ts, e.ts});
      matched.push_back(false);
    } else {
      auto it = pending.find(*e.key);
      if (it == pending.end() || it->second.empty()) {
        out.dangling_up = true;
        continue;
      }
      auto idx = it->second.front();
      it->second.pop_front();
      out.keystrokes[idx].up_ts = e.ts;
      matched[idx] = true;
    }
  }
  std::vector<Keystroke> paired;
  paired.reserve(out.keystrokes.size());
  for (std::size_t i = 0; i < out.keystrokes.size(); ++i) {
    if (matched[i])
      paired.push_back(std::move(out.keystrokes[i]));
    else
      out.dangling_down = true;
  }
  // Already in keydown order, which is down_ts order for sorted input.
  out.keystrokes = std::move(paired);
  return out;
}

// hold = up - down; interkey = next down - this up (release-to-press, may be negative).
inline Latencies keystroke_latencies(std::span<const Keystroke> keystrokes) {
  Latencies out;
  out.hold.reserve(keystrokes.size());
  for (std::size_t i = 0; i < keystrokes.size(); ++i) {
    out.hold.push_back(static_cast<double>(keystrokes[i].up_ts - keystrokes[i].down_ts));
    if (i + 1 < keystrokes.size())
      out.interkey.push_back(static_cast<double>(keystrokes[i + 1].down_ts - keystrokes[i].up_ts));
  }
  return out;
}

// A burst is a run of scroll events no more than gap_threshold ms apart; a
// scrollend closes it. Distance is measured against the last known scroll
// position, starting from the page origin.
inline std::vector<ScrollBurst> segment_scroll_bursts(std::span<const RawEvent> events,
                                                      std::int64_t gap_threshold = kScrollGapThresholdMs) {
  std::vector<ScrollBurst> out;
  double pos_x = 0.0, pos_y = 0.0;
  bool open = false;
  ScrollBurst cur;
  std::int64_t last_ts = 0;
  for (const auto& e : events) {
    if (e.kind == EventKind::scrollend) {
      if (open) out.push_back(cur);
      open = false;
      continue;
    }
    if (e.kind != EventKind::scroll) continue;
    double nx = e.scroll_x.value_or(pos_x), ny = e.scroll_y.value_or(pos_y);
    double step = std::abs(nx - pos_x) + std::abs(ny - pos_y);
    pos_x = nx;
    pos_y = ny;
    if (open && e.ts - last_ts <= gap_threshold) {
      cur.distance += step;
      cur.duration = e.ts - cur.start_ts;
    } else {
      if (open) out.push_back(cur);
      cur = ScrollBurst{step, 0, e.ts};
      open = true;
    }
    last_ts = e.ts;
  }
  if (open) out.push_back(cur);
  return out;
}

inline std::vector<MouseMovement> segment_mouse_movements(std::span<const RawEvent> events,
                                                          std::int64_t idle_threshold = kMouseIdleThresholdMs) {
  std::vector<MouseMovement> out;
  MouseMovement cur;
  auto close = [&](MovementEnd how) {
    if (cur.points.empty()) return;
    cur.terminator = how;
    out.push_back(std::move(cur));
    cur = MouseMovement{};
  };
  for (const auto& e : events) {
    if (e.kind == EventKind::mousemove) {
      if (!cur.points.empty() && e.ts - cur.points.back().ts > idle_threshold) close(MovementEnd::idle);
      cur.points.push_back({e.x.value_or(0.0), e.y.value_or(0.0), e.ts});
    } else if (e.kind == EventKind::mousedown) {
      if (!cur.points.empty())
        close(e.ts - cur.points.back().ts > idle_threshold ? MovementEnd::idle : MovementEnd::click);
    }
  }
  close(MovementEnd::end_of_log);
  return out;
}

inline constexpr double kDegenerateChord = 1e-9;

// Zero-length steps have no direction and are skipped, as are angles at a
// vertex that coincides with a neighbour.
inline MouseGeometry mouse_geometry(const MouseMovement& m) {
  MouseGeometry g;
  const auto& p = m.points;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    double dx = p[i + 1].x - p[i].x, dy = p[i + 1].y - p[i].y;
    if (dx == 0.0 && dy == 0.0) continue;
    double d = std::atan2(dy, dx);
    if (d <= -std::numbers::pi) d = std::numbers::pi;
    g.directions.push_back(d);
  }
  for (std::size_t i = 0; i + 2 < p.size(); ++i) {
    const auto &a = p[i], &b = p[i + 1], &c = p[i + 2];
    double bax = a.x - b.x, bay = a.y - b.y, bcx = c.x - b.x, bcy = c.y - b.y;
    double nba = std::hypot(bax, bay), nbc = std::hypot(bcx, bcy);
    if (nba > 0.0 && nbc > 0.0) {
      double cosv = std::clamp((bax * bcx + bay * bcy) / (nba * nbc), -1.0, 1.0);
      g.angles.push_back(std::acos(cosv));
    }
    double acx = c.x - a.x, acy = c.y - a.y;
    double chord = std::hypot(acx, acy);
    if (chord < kDegenerateChord) continue;
    double cross = std::abs(acx * (b.y - a.y) - acy * (b.x - a.x));
    g.curvature_distances.push_back(cross / chord / chord);
  }
  return g;
}

inline SessionLog truncate_window(const SessionLog& s, double window_seconds) {
  SessionLog out = s;
  if (s.events.empty()) return out;
  std::int64_t first = s.events.front().ts;
  for (const auto& e : s.events) first = std::min(first, e.ts);
  const double limit = static_cast<double>(first) + window_seconds * 1000.0;
  out.events.clear();
  for (const auto& e : s.events)
    if (static_cast<double>(e.ts) <= limit) out.events.push_back(e);
  return out;
}

struct Summary {
  double mean = kSentinel, median = kSentinel, std = kSentinel, range = kSentinel;
};

// Population std; all slots are the sentinel for an empty sample.
inline Summary summarize(std::vector<double> v) {
  Summary s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / n);
  std::sort(v.begin(), v.end());
  s.range = v.back() - v.front();
  const auto mid = v.size() / 2;
  s.median = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  return s;
}

inline BehaviorVector featurize_events(std::span<const RawEvent> events) {
  BehaviorVector f;
  f.fill(kSentinel);
  using namespace slot;

  // Mouse block.
  auto movements = segment_mouse_movements(events);
  std::vector<double> directions, angles, curvatures;
  for (const auto& m : movements) {
    auto g = mouse_geometry(m);
    directions.insert(directions.end(), g.directions.begin(), g.directions.end());
    angles.insert(angles.end(), g.angles.begin(), g.angles.end());
    curvatures.insert(curvatures.end(), g.curvature_distances.begin(), g.curvature_distances.end());
  }
  auto ang = summarize(std::move(angles));
  auto dir = summarize(std::move(directions));
  auto cur = summarize(std::move(curvatures));
  f[angle_mean] = ang.mean;
  f[angle_median] = ang.median;
  f[angle_std] = ang.std;
  f[angle_range] = ang.range;
  f[direction_mean] = dir.mean;
  f[direction_median] = dir.median;
  f[direction_std] = dir.std;
  f[direction_range] = dir.range;
  f[curvature_mean] = cur.mean;
  f[curvature_median] = cur.median;
  f[curvature_std] = cur.std;
  f[curvature_range] = cur.range;
  f[mouse_movements] = static_cast<double>(movements.size());

  std::array<int, 5> downs{}, ups{};
  bool any_move = false, any_paste = false, any_scroll = false, any_scrollend = false;
  int changes = 0, inputs = 0;
  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::mousemove: any_move = true; break;
      case EventKind::mousedown:
        if (e.button && *e.button >= 0 && *e.button <= 4) ++downs[*e.button];
        break;
      case EventKind::mouseup:
        if (e.button && *e.button >= 0 && *e.button <= 4) ++ups[*e.button];
        break;
      case EventKind::paste: any_paste = true; break;
      case EventKind::change: ++changes; break;
      case EventKind::input: ++inputs; break;
      case EventKind::scroll: any_scroll = true; break;
      case EventKind::scrollend: any_scrollend = true; break;
      default: break;
    }
  }
  f[mousemove_present] = any_move ? 1.0 : 0.0;
  for (int b = 0; b <= 4; ++b) {
    f[button_present(b)] = (downs[b] + ups[b]) > 0 ? 1.0 : 0.0;
    f[button_ratio(b)] = (downs[b] + ups[b]) == 0
                             ? kSentinel
                             : static_cast<double>(downs[b]) / std::max(1, ups[b]);
  }

  // Typing block.
  auto pairing = pair_keystrokes(events);
  auto lat = keystroke_latencies(pairing.keystrokes);
  auto hold = summarize(std::move(lat.hold));
  auto ik = summarize(std::move(lat.interkey));
  f[paste_present] = any_paste ? 1.0 : 0.0;
  f[hold_mean] = hold.mean;
  f[hold_median] = hold.median;
  f[hold_std] = hold.std;
  f[hold_range] = hold.range;
  f[interkey_mean] = ik.mean;
  f[interkey_median] = ik.median;
  f[interkey_std] = ik.std;
  f[interkey_range] = ik.range;
  f[change_count] = changes;
  f[input_count] = inputs;
  f[dangling_down] = pairing.dangling_down ? 1.0 : 0.0;
  f[dangling_up] = pairing.dangling_up ? 1.0 : 0.0;
  auto deletes = std::count_if(pairing.keystrokes.begin(), pairing.keystrokes.end(),
                               [](const Keystroke& k) { return k.key == "Backspace" || k.key == "Delete"; });
  f[backspace_count] = static_cast<double>(deletes);
  f[backspace_ratio] = pairing.keystrokes.empty()
                           ? kSentinel
                           : static_cast<double>(deletes) / static_cast<double>(pairing.keystrokes.size());
  f[keypress_present] = pairing.keystrokes.empty() ? 0.0 : 1.0;

  // Scrolling block.
  auto bursts = segment_scroll_bursts(events);
  std::vector<double> dist, dur;
  for (const auto& b : bursts) {
    dist.push_back(b.distance);
    dur.push_back(static_cast<double>(b.duration));
  }
  auto d = summarize(std::move(dist));
  auto t = summarize(std::move(dur));
  f[scroll_distance_mean] = d.mean;
  f[scroll_distance_median] = d.median;
  f[scroll_distance_std] = d.std;
  f[scroll_distance_range] = d.range;
  f[scroll_time_mean] = t.mean;
  f[scroll_time_median] = t.median;
  f[scroll_time_std] = t.std;
  f[scroll_time_range] = t.range;
  f[scroll_present] = any_scroll ? 1.0 : 0.0;
  f[scrollend_present] = any_scrollend ? 1.0 : 0.0;
  return f;
}

inline BehaviorVector featurize_behavior(const SessionLog& s) {
  if (auto v = validate_session(s); !v.empty())
    throw FeaturizationError("invalid session '" + s.visitor_id + "': " + v.front().describe());
  return featurize_events(s.events);
}

}  // namespace agentfp
