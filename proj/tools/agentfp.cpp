// Command-line front end: serve the honey website, generate synthetic
// corpora, featurize, train/evaluate, and write report tables.
//
// Exit codes: 0 success, 2 argument or configuration error, 3 data error.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "agentfp/honeypot.hpp"
#include "agentfp/pipeline.hpp"
#include "agentfp/synth.hpp"

namespace fs = std::filesystem;
using namespace agentfp;

namespace {

constexpr int kExitArgs = 2;
constexpr int kExitData = 3;

struct ArgError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string data_dir = "data";
  std::uint64_t seed = 0;
  std::string feature_set, class_set;
  std::string out = "reports";
  TrainParams params;
};

void add_common(CLI::App* app, Common& c, bool model_flags) {
  app->add_option("--data-dir", c.data_dir, "Data directory (sessions live in <data-dir>/sessions)");
  app->add_option("--seed", c.seed, "Seed for splits, training and generation");
  app->add_option("--out", c.out, "Output directory for reports");
  if (!model_flags) return;
  app->add_option("--feature-set", c.feature_set, "browser, behavioral or combined")
      ->check(CLI::IsMember({"browser", "behavioral", "combined"}));
  app->add_option("--class-set", c.class_set, "agents_only or agents_plus_human")
      ->check(CLI::IsMember({"agents_only", "agents_plus_human"}));
  app->add_option("--rounds", c.params.rounds, "Boosting rounds")->check(CLI::NonNegativeNumber);
  app->add_option("--max-depth", c.params.max_depth, "Maximum tree depth")->check(CLI::PositiveNumber);
  app->add_option("--learning-rate", c.params.learning_rate, "Shrinkage")->check(CLI::PositiveNumber);
  app->add_option("--min-child-weight", c.params.min_child_weight, "Minimum hessian per child");
  app->add_option("--threads", c.params.threads, "Training threads (0 = all cores)");
}

std::vector<FeatureSet> feature_sets(const std::string& s, std::vector<FeatureSet> fallback) {
  if (s.empty()) return fallback;
  auto f = feature_set_from_string(s);
  if (!f) throw ArgError("unknown feature set '" + s + "'");
  return {*f};
}

std::vector<ClassSet> class_sets(const std::string& s, std::vector<ClassSet> fallback) {
  if (s.empty()) return fallback;
  auto c = class_set_from_string(s);
  if (!c) throw ArgError("unknown class set '" + s + "'");
  return {*c};
}

ClassLabel parse_class(const std::string& s) {
  auto c = class_from_string(s);
  if (!c) throw ArgError("unknown class '" + s + "'");
  return *c;
}

Task parse_task(const std::string& s) {
  auto t = task_from_string(s);
  if (!t) throw ArgError("unknown task '" + s + "'");
  return *t;
}

std::vector<SessionLog> load(const Common& c) {
  auto sessions = load_corpus(fs::path(c.data_dir) / "sessions");
  if (sessions.empty()) throw IngestionError("no sessions in '" + (fs::path(c.data_dir) / "sessions").string() + "'");
  return sessions;
}

std::ofstream open_out(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  std::ofstream f(fs::path(c.out) / name, std::ios::binary | std::ios::trunc);
  if (!f) throw IngestionError("cannot write '" + (fs::path(c.out) / name).string() + "'");
  return f;
}

std::string config_tag(ClassSet cs, FeatureSet fs) {
  return std::string(to_string(cs)) + "_" + std::string(to_string(fs));
}

honeypot::Server* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Browsing-agent fingerprinting toolkit"};
  app.require_subcommand(1);

  Common c;

  // serve
  auto* serve = app.add_subcommand("serve", "Run the honey website (config from AGENTFP_* environment)");
  std::string listen;
  serve->add_option("--data-dir", c.data_dir, "Data directory (overrides AGENTFP_DATA_DIR)");
  serve->add_option("--listen", listen, "host:port (overrides AGENTFP_LISTEN)");

  // visitor
  auto* visitor = app.add_subcommand("visitor", "Register a visitor and print its path");
  std::string label_hint;
  std::vector<std::string> tasks;
  visitor->add_option("--data-dir", c.data_dir, "Data directory");
  visitor->add_option("--seed", c.seed, "Path seed");
  visitor->add_option("--label", label_hint, "Optional class label hint");
  visitor->add_option("--task", tasks, "Enabled tasks (default: all)");

  // export
  auto* exp = app.add_subcommand("export", "Export ingested sessions to <data-dir>/sessions");
  exp->add_option("--data-dir", c.data_dir, "Data directory");

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a labeled synthetic corpus into <data-dir>/sessions");
  std::size_t per_cell = 40;
  std::string overrides;
  syn->add_option("--data-dir", c.data_dir, "Data directory");
  syn->add_option("--seed", c.seed, "Corpus seed");
  syn->add_option("-n,--sessions", per_cell, "Sessions per class and task")->check(CLI::PositiveNumber);
  syn->add_option("--profiles", overrides, "JSON file of per-class profile overrides")->check(CLI::ExistingFile);

  // featurize
  auto* feat = app.add_subcommand("featurize", "Write the feature matrix of all labeled sessions");
  add_common(feat, c, true);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Train and evaluate every requested feature/class set");
  add_common(pipe, c, true);

  // realtime
  auto* rt = app.add_subcommand("realtime", "F1 over increasing observation windows");
  std::vector<double> windows;
  add_common(rt, c, true);
  rt->add_option("--windows", windows, "Window lengths in seconds (default 5..180 step 5)")->delimiter(',');

  // holdout
  auto* ho = app.add_subcommand("holdout", "Train on two tasks, test on the third");
  std::string held_out;
  add_common(ho, c, true);
  ho->add_option("--task", held_out, "Held-out task (default: each in turn)");

  // stats
  auto* st = app.add_subcommand("stats", "Mann-Whitney U and Brown-Forsythe per feature");
  std::string feature, class_a, class_b;
  bool all_pairs = false;
  add_common(st, c, true);
  st->add_option("--feature", feature, "Behavioral feature name");
  st->add_option("--class-a", class_a, "First class");
  st->add_option("--class-b", class_b, "Second class");
  st->add_flag("--all-pairs", all_pairs, "Every feature against every pair of classes");

  // fpstats
  auto* fps = app.add_subcommand("fpstats", "Per-class browser fingerprint statistics");
  add_common(fps, c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitArgs;
  }

  try {
    if (*serve) {
      auto cfg = honeypot::ServeConfig::from_env();
      if (serve->count("--data-dir")) cfg.data_dir = c.data_dir;
      if (!listen.empty()) {
        const auto colon = listen.rfind(':');
        if (colon == std::string::npos) throw ArgError("--listen must be host:port");
        cfg.host = listen.substr(0, colon);
        cfg.port = std::stoi(listen.substr(colon + 1));
      }
      honeypot::Server server(cfg);
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << cfg.host << ":" << port << ", data in " << cfg.data_dir.string() << "\n";
      server.run();
      return 0;
    }

    if (*visitor) {
      honeypot::VisitorRegistry reg(c.data_dir);
      std::optional<ClassLabel> hint;
      if (!label_hint.empty()) hint = parse_class(label_hint);
      std::set<Task> enabled;
      for (const auto& t : tasks) enabled.insert(parse_task(t));
      std::cout << reg.create_visitor(hint, enabled, c.seed).path << "\n";
      return 0;
    }

    if (*exp) {
      honeypot::VisitorRegistry reg(c.data_dir);
      honeypot::SessionStore store(c.data_dir, reg);
      const auto sessions = store.export_all();
      std::size_t invalid = 0;
      for (const auto& s : sessions)
        if (!validate_session(s).empty()) ++invalid;
      write_corpus(fs::path(c.data_dir) / "sessions", sessions);
      std::cerr << "exported " << sessions.size() << " sessions";
      if (invalid) std::cerr << " (" << invalid << " with schema violations)";
      std::cerr << "\n";
      return 0;
    }

    if (*syn) {
      auto profiles = synth::default_profiles();
      if (!overrides.empty()) {
        std::ifstream f(overrides);
        std::stringstream ss;
        ss << f.rdbuf();
        synth::apply_profile_overrides(profiles, ss.str());
      }
      const auto corpus = synth::generate_corpus(profiles, per_cell, c.seed);
      write_corpus(fs::path(c.data_dir) / "sessions", corpus);
      std::cerr << "wrote " << corpus.size() << " sessions\n";
      return 0;
    }

    if (*feat) {
      const auto fsel = feature_sets(c.feature_set, {FeatureSet::combined});
      const auto csel = class_sets(c.class_set, {ClassSet::agents_plus_human});
      const auto sessions = filter_sessions(load(c), csel.front());
      std::optional<AttributeEncoder> enc;
      if (uses_browser(fsel.front())) enc = encoder_for(sessions);
      const auto d = build_dataset(sessions, fsel.front(), enc ? &*enc : nullptr);
      auto out = open_out(c, "features.tsv");
      out << "visitor\ttask\tlabel";
      for (const auto& n : d.feature_names) out << '\t' << n;
      out << '\n';
      for (const auto& r : d.rows) {
        out << r.visitor_id << '\t' << to_string(r.task) << '\t' << to_string(r.label);
        for (double v : r.features) out << '\t' << detail::format_double(v);
        out << '\n';
      }
      if (enc) open_out(c, "encoder.json") << enc->serialize() << '\n';
      return 0;
    }

    if (*pipe) {
      const auto sessions = load(c);
      std::vector<MetricsRow> rows;
      for (auto cs : class_sets(c.class_set, {kAllClassSets.begin(), kAllClassSets.end()}))
        for (auto fset : feature_sets(c.feature_set, {kAllFeatureSets.begin(), kAllFeatureSets.end()})) {
          ExperimentConfig cfg{fset, cs, c.params, 0.8, c.seed};
          const auto res = run_experiment(sessions, cfg);
          rows.push_back({cs, fset, res.report.macro_precision, res.report.macro_recall, res.report.macro_f1});
          const auto tag = config_tag(cs, fset);
          auto conf = open_out(c, "confusion_" + tag + ".tsv");
          write_confusion(conf, res.report);
          auto per = open_out(c, "per_class_" + tag + ".tsv");
          write_per_class(per, res.report);
          auto imp = open_out(c, "importance_" + tag + ".tsv");
          write_importance(imp, res.model);
          auto model = open_out(c, "model_" + tag + ".txt");
          res.model.save(model);
        }
      auto metrics = open_out(c, "metrics.tsv");
      write_metrics(metrics, rows);
      auto fp = open_out(c, "fpstats.tsv");
      write_fpstats(fp, fingerprint_stats(digests_by_class(sessions)));
      auto bursts = open_out(c, "scroll_bursts.tsv");
      write_scroll_bursts(bursts, sessions);
      auto counts = open_out(c, "event_counts.tsv");
      write_event_counts(counts, sessions);
      write_metrics(std::cout, rows);
      return 0;
    }

    if (*rt) {
      const auto fset = feature_sets(c.feature_set, {FeatureSet::combined}).front();
      const auto cs = class_sets(c.class_set, {ClassSet::agents_plus_human}).front();
      if (fset == FeatureSet::browser)
        std::cerr << "warning: browser features do not depend on the window; the curve is constant\n";
      if (windows.empty()) windows = default_windows();
      const auto rows = realtime_sweep(load(c), windows, {fset, cs, c.params, 0.8, c.seed});
      auto out = open_out(c, "realtime_" + config_tag(cs, fset) + ".tsv");
      write_realtime(out, rows);
      write_realtime(std::cout, rows);
      return 0;
    }

    if (*ho) {
      const auto cs = class_sets(c.class_set, {ClassSet::agents_plus_human}).front();
      std::vector<Task> targets(kAllTasks.begin(), kAllTasks.end());
      if (!held_out.empty()) targets = {parse_task(held_out)};
      const auto fsel = feature_sets(c.feature_set, {FeatureSet::behavioral, FeatureSet::combined});
      const auto sessions = load(c);
      std::vector<HoldoutRow> rows;
      for (auto fset : fsel) {
        ExperimentConfig cfg{fset, cs, c.params, 0.8, c.seed};
        const double base = run_experiment(sessions, cfg).report.macro_f1;
        for (auto t : targets) rows.push_back({t, fset, holdout_task_eval(sessions, t, cfg).report, base});
      }
      std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.held_out < b.held_out; });
      auto out = open_out(c, "holdout_" + std::string(to_string(cs)) + ".tsv");
      write_holdout(out, rows);
      write_holdout(std::cout, rows);
      return 0;
    }

    if (*st) {
      const auto cs = class_sets(c.class_set, {ClassSet::agents_plus_human}).front();
      const auto d = build_dataset(filter_sessions(load(c), cs), FeatureSet::behavioral, nullptr);
      std::vector<StatsRow> rows;
      if (all_pairs) {
        rows = compare_all_pairs(d);
      } else {
        if (feature.empty() || class_a.empty() || class_b.empty())
          throw ArgError("stats needs --feature, --class-a and --class-b, or --all-pairs");
        const auto a = parse_class(class_a), b = parse_class(class_b);
        rows.push_back({feature, a, b, compare_feature(d, feature, a, b)});
      }
      auto out = open_out(c, all_pairs ? "stats_all_pairs.tsv" : "stats.tsv");
      write_stats(out, rows);
      write_stats(std::cout, rows);
      return 0;
    }

    if (*fps) {
      const auto st_map = fingerprint_stats(digests_by_class(load(c)));
      auto out = open_out(c, "fpstats.tsv");
      write_fpstats(out, st_map);
      write_fpstats(std::cout, st_map);
      return 0;
    }
  } catch (const ArgError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitArgs;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitArgs;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
