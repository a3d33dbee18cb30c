#pragma once

// Dataset assembly, experiments (in-distribution, held-out task, time
// windows), per-feature statistics and tab-separated report writers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agentfp/behavior.hpp"
#include "agentfp/browser.hpp"
#include "agentfp/classifier.hpp"
#include "agentfp/error.hpp"
#include "agentfp/session.hpp"
#include "agentfp/stats.hpp"

namespace agentfp {

enum class FeatureSet { browser, behavioral, combined };
enum class ClassSet { agents_only, agents_plus_human };

inline constexpr std::array<FeatureSet, 3> kAllFeatureSets = {FeatureSet::browser, FeatureSet::behavioral,
                                                              FeatureSet::combined};
inline constexpr std::array<ClassSet, 2> kAllClassSets = {ClassSet::agents_only, ClassSet::agents_plus_human};

inline std::string_view to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::browser: return "browser";
    case FeatureSet::behavioral: return "behavioral";
    case FeatureSet::combined: return "combined";
  }
  return "?";
}
inline std::string_view to_string(ClassSet c) {
  return c == ClassSet::agents_only ? "agents_only" : "agents_plus_human";
}
inline std::optional<FeatureSet> feature_set_from_string(std::string_view s) {
  for (auto f : kAllFeatureSets)
    if (to_string(f) == s) return f;
  return std::nullopt;
}
inline std::optional<ClassSet> class_set_from_string(std::string_view s) {
  for (auto c : kAllClassSets)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

inline bool uses_browser(FeatureSet f) { return f != FeatureSet::behavioral; }
inline bool uses_behavior(FeatureSet f) { return f != FeatureSet::browser; }

// Labeled sessions belonging to the class set, in input order.
inline std::vector<SessionLog> filter_sessions(const std::vector<SessionLog>& sessions, ClassSet cs) {
  std::vector<SessionLog> out;
  for (const auto& s : sessions) {
    if (!s.label) continue;
    if (cs == ClassSet::agents_only && *s.label == ClassLabel::human) continue;
    out.push_back(s);
  }
  return out;
}

inline std::vector<std::string> feature_names(FeatureSet fs, const AttributeEncoder* enc) {
  std::vector<std::string> names;
  if (uses_browser(fs)) {
    if (!enc) throw ModelError("browser features need an encoder");
    names = enc->feature_names();
  }
  if (uses_behavior(fs))
    for (auto n : kBehaviorFeatureNames) names.emplace_back(n);
  return names;
}

// Sessions are optionally truncated to the first `window_seconds` before the
// behavioral block is computed; browser attributes are window-independent.
inline Dataset build_dataset(const std::vector<SessionLog>& sessions, FeatureSet fs, const AttributeEncoder* enc,
                             std::optional<double> window_seconds = std::nullopt) {
  Dataset d;
  d.feature_names = feature_names(fs, enc);
  d.rows.reserve(sessions.size());
  for (const auto& s : sessions) {
    if (!s.label) throw ModelError("session '" + s.visitor_id + "' has no label");
    DatasetRow row;
    row.label = *s.label;
    row.task = s.task;
    row.visitor_id = s.visitor_id;
    if (uses_browser(fs)) row.features = enc->encode(s.browser_attrs);
    if (uses_behavior(fs)) {
      const auto b = window_seconds ? featurize_behavior(truncate_window(s, *window_seconds)) : featurize_behavior(s);
      row.features.insert(row.features.end(), b.begin(), b.end());
    }
    d.rows.push_back(std::move(row));
  }
  return d;
}

inline AttributeEncoder encoder_for(const std::vector<SessionLog>& train_sessions) {
  std::vector<AttrMap> attrs;
  attrs.reserve(train_sessions.size());
  for (const auto& s : train_sessions) attrs.push_back(s.browser_attrs);
  return build_encoder(attrs);
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

inline SplitIndices split_sessions(const std::vector<SessionLog>& sessions, double train_fraction,
                                   std::uint64_t seed) {
  std::vector<ClassLabel> labels;
  for (const auto& s : sessions) {
    if (!s.label) throw ModelError("session '" + s.visitor_id + "' has no label");
    labels.push_back(*s.label);
  }
  return stratified_split(labels, train_fraction, seed);
}

struct ExperimentConfig {
  FeatureSet feature_set = FeatureSet::combined;
  ClassSet class_set = ClassSet::agents_plus_human;
  TrainParams params;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  EvalReport report;
  EnsembleModel model;
  std::optional<AttributeEncoder> encoder;
  std::size_t train_rows = 0, test_rows = 0;
};

namespace detail {

inline ExperimentResult fit_and_score(const std::vector<SessionLog>& train_s, const std::vector<SessionLog>& test_s,
                                      FeatureSet fs, TrainParams params, std::uint64_t seed,
                                      std::optional<double> window = std::nullopt) {
  ExperimentResult res;
  if (uses_browser(fs)) res.encoder = encoder_for(train_s);
  const AttributeEncoder* enc = res.encoder ? &*res.encoder : nullptr;
  const auto train_d = build_dataset(train_s, fs, enc, window);
  const auto test_d = build_dataset(test_s, fs, enc, window);
  params.seed = seed;
  res.model = train(train_d, params);
  res.report = evaluate(res.model, test_d);
  res.train_rows = train_d.rows.size();
  res.test_rows = test_d.rows.size();
  return res;
}

}  // namespace detail

// Sessions are split before any encoding, so the browser encoder only ever
// sees training sessions.
inline ExperimentResult run_experiment(const std::vector<SessionLog>& sessions, const ExperimentConfig& cfg) {
  const auto selected = filter_sessions(sessions, cfg.class_set);
  const auto split = split_sessions(selected, cfg.train_fraction, cfg.seed);
  return detail::fit_and_score(pick(selected, split.train), pick(selected, split.test), cfg.feature_set, cfg.params,
                               cfg.seed);
}

// Train on the two other tasks, test on `held_out`.
inline ExperimentResult holdout_task_eval(const std::vector<SessionLog>& sessions, Task held_out,
                                          const ExperimentConfig& cfg) {
  const auto selected = filter_sessions(sessions, cfg.class_set);
  std::set<Task> present;
  for (const auto& s : selected) present.insert(s.task);
  for (auto t : kAllTasks)
    if (!present.contains(t)) throw ModelError("task '" + std::string(to_string(t)) + "' has no sessions");
  std::vector<SessionLog> train_s, test_s;
  for (const auto& s : selected) (s.task == held_out ? test_s : train_s).push_back(s);
  return detail::fit_and_score(train_s, test_s, cfg.feature_set, cfg.params, cfg.seed);
}

inline std::vector<double> default_windows() {
  std::vector<double> w;
  for (int s = 5; s <= 180; s += 5) w.push_back(s);
  return w;
}

inline void check_windows(const std::vector<double>& windows) {
  if (windows.empty()) throw ConfigError("window list is empty");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!(windows[i] > 0.0)) throw ConfigError("windows must be positive");
    if (i && !(windows[i] > windows[i - 1])) throw ConfigError("windows must be strictly increasing");
  }
}

struct WindowResult {
  double window_seconds = 0.0;
  EvalReport report;
};

// One split for all windows; the model is retrained on truncated sessions
// for every window.
inline std::vector<WindowResult> realtime_sweep(const std::vector<SessionLog>& sessions,
                                                const std::vector<double>& windows, const ExperimentConfig& cfg) {
  check_windows(windows);
  const auto selected = filter_sessions(sessions, cfg.class_set);
  const auto split = split_sessions(selected, cfg.train_fraction, cfg.seed);
  const auto train_s = pick(selected, split.train), test_s = pick(selected, split.test);
  std::vector<WindowResult> out;
  for (double w : windows)
    out.push_back({w, detail::fit_and_score(train_s, test_s, cfg.feature_set, cfg.params, cfg.seed, w).report});
  return out;
}

// ---------------------------------------------------------------------------
// Per-feature statistics

struct FeatureComparison {
  std::string feature;
  ClassLabel class_a = ClassLabel::human, class_b = ClassLabel::human;
  stats::MWUResult mwu;
  stats::BFResult bf;
  bool significant = false;  // MWU p below the significance level
};

inline std::vector<double> feature_values(const Dataset& d, std::size_t column, ClassLabel c) {
  std::vector<double> v;
  for (const auto& r : d.rows)
    if (r.label == c && r.features[column] != kSentinel) v.push_back(r.features[column]);
  return v;
}

inline std::size_t feature_column(const Dataset& d, std::string_view name) {
  auto it = std::find(d.feature_names.begin(), d.feature_names.end(), name);
  if (it == d.feature_names.end()) throw StatsError("unknown feature '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - d.feature_names.begin());
}

// Both tests on non-sentinel values only; each class needs two of them.
inline FeatureComparison compare_feature(const Dataset& d, std::string_view feature, ClassLabel a, ClassLabel b) {
  const auto col = feature_column(d, feature);
  const auto va = feature_values(d, col, a), vb = feature_values(d, col, b);
  for (const auto& [cls, v] : {std::pair{a, &va}, std::pair{b, &vb}})
    if (v->size() < 2)
      throw StatsError("class '" + std::string(to_string(cls)) + "' has fewer than two non-sentinel values for '" +
                       std::string(feature) + "'");
  FeatureComparison out;
  out.feature = std::string(feature);
  out.class_a = a;
  out.class_b = b;
  out.mwu = stats::mann_whitney(va, vb);
  out.bf = stats::brown_forsythe({va, vb});
  out.significant = out.mwu.p_two_sided < stats::kSignificance;
  return out;
}

struct StatsRow {
  std::string feature;
  ClassLabel class_a, class_b;
  std::optional<FeatureComparison> result;  // empty when data are insufficient
};

// Every feature against every unordered pair of classes present, in column
// and class order.
inline std::vector<StatsRow> compare_all_pairs(const Dataset& d) {
  std::set<ClassLabel> present;
  for (const auto& r : d.rows) present.insert(r.label);
  const std::vector<ClassLabel> cls(present.begin(), present.end());
  std::vector<StatsRow> out;
  for (const auto& name : d.feature_names)
    for (std::size_t i = 0; i < cls.size(); ++i)
      for (std::size_t j = i + 1; j < cls.size(); ++j) {
        StatsRow row{name, cls[i], cls[j], std::nullopt};
        try {
          row.result = compare_feature(d, name, cls[i], cls[j]);
        } catch (const StatsError&) {
        }
        out.push_back(std::move(row));
      }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus I/O

inline std::string session_file_name(const SessionLog& s) {
  return s.visitor_id + "_" + std::string(to_string(s.task)) + ".jsonl";
}

inline void write_corpus(const std::filesystem::path& dir, const std::vector<SessionLog>& sessions) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IngestionError("cannot create '" + dir.string() + "': " + ec.message());
  for (const auto& s : sessions) {
    std::ofstream f(dir / session_file_name(s), std::ios::binary | std::ios::trunc);
    write_session(f, s);
    if (!f) throw IngestionError("cannot write session file in '" + dir.string() + "'");
  }
}

// All *.jsonl files of a directory, in file-name order.
inline std::vector<SessionLog> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IngestionError("no session directory '" + dir.string() + "'");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<SessionLog> out;
  out.reserve(files.size());
  for (const auto& p : files) {
    std::ifstream f(p, std::ios::binary);
    try {
      out.push_back(read_session(f));
    } catch (const ParseError& e) {
      throw ParseError(e.line(), p.filename().string() + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports (tab-separated, fixed precision so reruns are byte-identical)

inline std::string fmt(double v, int digits = 4) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string fmt_p(double p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", p);
  return buf;
}

struct MetricsRow {
  ClassSet class_set;
  FeatureSet feature_set;
  double precision, recall, f1;
};

inline void write_metrics(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "classes\tfeature_set\tprecision\trecall\tf1\n";
  for (const auto& r : rows)
    os << to_string(r.class_set) << '\t' << to_string(r.feature_set) << '\t' << fmt(r.precision) << '\t'
       << fmt(r.recall) << '\t' << fmt(r.f1) << '\n';
}

inline void write_confusion(std::ostream& os, const EvalReport& rep) {
  os << "true\\predicted";
  for (auto c : rep.classes) os << '\t' << to_string(c);
  os << '\n';
  for (std::size_t i = 0; i < rep.classes.size(); ++i) {
    os << to_string(rep.classes[i]);
    for (auto n : rep.confusion[i]) os << '\t' << n;
    os << '\n';
  }
}

inline void write_per_class(std::ostream& os, const EvalReport& rep) {
  os << "class\tprecision\trecall\tf1\tsupport\n";
  for (std::size_t i = 0; i < rep.classes.size(); ++i) {
    const auto& m = rep.per_class[i];
    os << to_string(rep.classes[i]) << '\t' << fmt(m.precision) << '\t' << fmt(m.recall) << '\t' << fmt(m.f1) << '\t'
       << m.support << '\n';
  }
}

inline void write_importance(std::ostream& os, const EnsembleModel& m) {
  os << "rank\tfeature\ttotal_gain\n";
  std::size_t rank = 0;
  for (const auto& [name, gain] : feature_importance(m)) os << ++rank << '\t' << name << '\t' << fmt(gain) << '\n';
}

inline std::map<ClassLabel, std::vector<FingerprintDigest>> digests_by_class(const std::vector<SessionLog>& sessions) {
  std::map<ClassLabel, std::vector<FingerprintDigest>> out;
  for (const auto& s : sessions)
    if (s.label) out[*s.label].push_back(canonicalize_fingerprint(s.browser_attrs));
  return out;
}

inline void write_fpstats(std::ostream& os, const std::map<ClassLabel, FingerprintStats>& st) {
  os << "class\tsessions\tunique_fps\ttop1_coverage\tnormalized_entropy\tshared_fps\tshared_with\n";
  for (const auto& [cls, s] : st) {
    std::string with;
    for (auto o : s.shared_with) with += (with.empty() ? "" : ",") + std::string(to_string(o));
    os << to_string(cls) << '\t' << s.total << '\t' << s.unique_count << '\t' << fmt(s.top1_coverage) << '\t'
       << fmt(s.normalized_entropy) << '\t' << s.shared_count << '\t' << (with.empty() ? "-" : with) << '\n';
  }
}

inline void write_stats(std::ostream& os, const std::vector<StatsRow>& rows) {
  os << "feature\tclass_a\tclass_b\tU\tp\tr\tlabel\tw\tp_bf\tsd_ratio\tsignificant\n";
  for (const auto& row : rows) {
    os << row.feature << '\t' << to_string(row.class_a) << '\t' << to_string(row.class_b) << '\t';
    if (!row.result) {
      os << "NA\tNA\tNA\tNA\tNA\tNA\tNA\tinsufficient\n";
      continue;
    }
    const auto& c = *row.result;
    os << fmt(c.mwu.u, 1) << '\t' << fmt_p(c.mwu.p_two_sided) << '\t' << fmt(c.mwu.r) << '\t'
       << stats::to_string(stats::effect_label(c.mwu.r)) << '\t' << fmt(c.bf.w) << '\t' << fmt_p(c.bf.p) << '\t'
       << (c.bf.sd_ratio ? fmt(*c.bf.sd_ratio) : std::string("NA")) << '\t' << (c.significant ? "yes" : "no")
       << '\n';
  }
}

inline void write_realtime(std::ostream& os, const std::vector<WindowResult>& rows) {
  os << "window_seconds\tprecision\trecall\tf1\n";
  for (const auto& r : rows)
    os << fmt(r.window_seconds, 0) << '\t' << fmt(r.report.macro_precision) << '\t' << fmt(r.report.macro_recall)
       << '\t' << fmt(r.report.macro_f1) << '\n';
}

struct HoldoutRow {
  Task held_out;
  FeatureSet feature_set;
  EvalReport report;
  double in_distribution_f1;
};

inline void write_holdout(std::ostream& os, const std::vector<HoldoutRow>& rows) {
  os << "test_task\tfeature_set\tprecision\trecall\tf1\tin_distribution_f1\tf1_drop\n";
  for (const auto& r : rows)
    os << to_string(r.held_out) << '\t' << to_string(r.feature_set) << '\t' << fmt(r.report.macro_precision) << '\t'
       << fmt(r.report.macro_recall) << '\t' << fmt(r.report.macro_f1) << '\t' << fmt(r.in_distribution_f1) << '\t'
       << fmt(r.in_distribution_f1 - r.report.macro_f1) << '\n';
}

// Scatter points of scroll bursts: one row per burst.
inline void write_scroll_bursts(std::ostream& os, const std::vector<SessionLog>& sessions) {
  os << "class\ttask\tvisitor\tdistance_px\tduration_ms\n";
  for (const auto& s : sessions)
    for (const auto& b : segment_scroll_bursts(s.events))
      os << (s.label ? to_string(*s.label) : "unlabeled") << '\t' << to_string(s.task) << '\t' << s.visitor_id << '\t'
         << fmt(b.distance, 1) << '\t' << fmt(b.duration, 1) << '\n';
}

// Strip-plot data of per-session change and input counts.
inline void write_event_counts(std::ostream& os, const std::vector<SessionLog>& sessions) {
  os << "class\ttask\tvisitor\tchange_events\tinput_events\n";
  for (const auto& s : sessions) {
    std::size_t change = 0, input = 0;
    for (const auto& e : s.events) {
      change += e.kind == EventKind::change;
      input += e.kind == EventKind::input;
    }
    os << (s.label ? to_string(*s.label) : "unlabeled") << '\t' << to_string(s.task) << '\t' << s.visitor_id << '\t'
       << change << '\t' << input << '\n';
  }
}

}  // namespace agentfp
