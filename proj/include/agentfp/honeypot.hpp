#pragma once

// Honey-website service: visitor registry, routing, artifact ingestion into
// append-only per-visitor session files, keyed IP hashing and the HTTP front.

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "agentfp/browser.hpp"
#include "agentfp/error.hpp"
#include "agentfp/session.hpp"
#include "agentfp/synth.hpp"
#include "httplib.h"
#include "json.hpp"

namespace agentfp::honeypot {

namespace fs = std::filesystem;

inline constexpr std::size_t kPathLength = 10;
inline constexpr std::string_view kPathAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789";

inline bool valid_path(std::string_view p) {
  return p.size() == kPathLength && p.find_first_not_of(kPathAlphabet) == std::string_view::npos;
}

// ---------------------------------------------------------------------------
// IP hashing

inline std::string hash_ip(std::string_view ip, std::string_view salt) {
  if (salt.empty()) throw ConfigError("ip-hash salt must not be empty");
  unsigned char mac[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), salt.data(), static_cast<int>(salt.size()),
            reinterpret_cast<const unsigned char*>(ip.data()), ip.size(), mac, &len))
    throw Error("HMAC-SHA256 failed");
  return detail::to_hex(mac, len);
}

// ---------------------------------------------------------------------------
// Visitors

struct VisitorRecord {
  std::string path;
  std::int64_t created_at = 0;  // unix ms
  std::optional<ClassLabel> label_hint;
  std::set<Task> tasks_enabled;

  friend bool operator==(const VisitorRecord&, const VisitorRecord&) = default;
};

inline nlohmann::json to_json(const VisitorRecord& v) {
  nlohmann::json j;
  j["path"] = v.path;
  j["created_at"] = v.created_at;
  if (v.label_hint) j["label_hint"] = std::string(to_string(*v.label_hint));
  auto& tasks = j["tasks_enabled"] = nlohmann::json::array();
  for (auto t : v.tasks_enabled) tasks.push_back(std::string(to_string(t)));
  return j;
}

inline VisitorRecord visitor_from_json(const nlohmann::json& j) {
  VisitorRecord v;
  v.path = j.at("path").get<std::string>();
  if (!valid_path(v.path)) throw IngestionError("invalid visitor path '" + v.path + "'");
  v.created_at = j.value("created_at", std::int64_t{0});
  if (auto it = j.find("label_hint"); it != j.end() && it->is_string()) {
    v.label_hint = class_from_string(it->get<std::string>());
    if (!v.label_hint) throw IngestionError("unknown label hint '" + it->get<std::string>() + "'");
  }
  for (const auto& t : j.at("tasks_enabled")) {
    auto task = task_from_string(t.get<std::string>());
    if (!task) throw IngestionError("unknown task '" + t.get<std::string>() + "'");
    v.tasks_enabled.insert(*task);
  }
  return v;
}

// Visitors persisted as one JSON line each in `<data_dir>/visitors.jsonl`.
// Other processes may append; a lookup miss re-reads the file.
class VisitorRegistry {
 public:
  explicit VisitorRegistry(fs::path data_dir) : dir_(std::move(data_dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IngestionError("cannot create data directory '" + dir_.string() + "': " + ec.message());
    std::unique_lock lock(mu_);
    reload_locked();
  }

  // Paths come from a generator seeded with (seed, current registry size), so
  // fresh stores given the same seed hand out the same path sequence.
  VisitorRecord create_visitor(std::optional<ClassLabel> label_hint, std::set<Task> tasks, std::uint64_t seed) {
    std::unique_lock lock(mu_);
    reload_locked();
    std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(visitors_.size())};
    std::mt19937_64 rng(sq);
    std::uniform_int_distribution<std::size_t> pick(0, kPathAlphabet.size() - 1);
    VisitorRecord v;
    do {
      v.path.assign(kPathLength, 'a');
      for (auto& c : v.path) c = kPathAlphabet[pick(rng)];
    } while (visitors_.contains(v.path));
    v.created_at = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
    v.label_hint = label_hint;
    v.tasks_enabled = tasks.empty() ? std::set<Task>(kAllTasks.begin(), kAllTasks.end()) : std::move(tasks);
    std::ofstream f(file(), std::ios::app | std::ios::binary);
    f << to_json(v).dump() << '\n';
    f.flush();
    if (!f) throw IngestionError("cannot persist visitor to '" + file().string() + "'");
    visitors_[v.path] = v;
    return v;
  }

  std::optional<VisitorRecord> find(std::string_view path) {
    {
      std::shared_lock lock(mu_);
      if (auto it = visitors_.find(std::string(path)); it != visitors_.end()) return it->second;
    }
    if (!valid_path(path)) return std::nullopt;
    std::unique_lock lock(mu_);
    reload_locked();
    if (auto it = visitors_.find(std::string(path)); it != visitors_.end()) return it->second;
    return std::nullopt;
  }

  std::vector<VisitorRecord> all() {
    std::unique_lock lock(mu_);
    reload_locked();
    std::vector<VisitorRecord> out;
    for (const auto& [p, v] : visitors_) out.push_back(v);
    return out;
  }

  std::size_t size() {
    std::shared_lock lock(mu_);
    return visitors_.size();
  }

  const fs::path& data_dir() const { return dir_; }

 private:
  fs::path file() const { return dir_ / "visitors.jsonl"; }

  // Reads only lines appended since the last call; a torn final line from a
  // concurrent writer is left for the next call.
  void reload_locked() {
    std::ifstream f(file(), std::ios::binary);
    if (!f) return;
    f.seekg(static_cast<std::streamoff>(offset_));
    std::string line;
    while (std::getline(f, line)) {
      if (f.eof()) break;
      ++lines_;
      offset_ += line.size() + 1;
      if (line.empty()) continue;
      try {
        auto v = visitor_from_json(nlohmann::json::parse(line));
        visitors_[v.path] = std::move(v);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(lines_, std::string("visitors.jsonl: ") + e.what());
      }
    }
  }

  fs::path dir_;
  std::shared_mutex mu_;
  std::map<std::string, VisitorRecord> visitors_;
  std::size_t offset_ = 0, lines_ = 0;
};

// ---------------------------------------------------------------------------
// Routing

struct Route {
  enum Kind { page, collect_endpoint, not_found } kind = not_found;
  std::optional<Task> task;
  std::string visitor;
};

// "/{path}/{task}" and "/{path}/collect" for registered visitors; everything
// else is not_found.
inline Route route(std::string_view request_path, VisitorRegistry& registry) {
  Route r;
  if (request_path.size() < 2 || request_path.front() != '/') return r;
  const auto rest = request_path.substr(1);
  const auto slash = rest.find('/');
  if (slash == std::string_view::npos) return r;
  const auto visitor = rest.substr(0, slash), leaf = rest.substr(slash + 1);
  if (!valid_path(visitor) || leaf.empty() || leaf.find('/') != std::string_view::npos) return r;
  const auto rec = registry.find(visitor);
  if (!rec) return r;
  if (leaf == "collect") {
    r.kind = Route::collect_endpoint;
  } else {
    auto task = task_from_string(leaf);
    if (!task || !rec->tasks_enabled.contains(*task)) return r;
    r.kind = Route::page;
    r.task = task;
  }
  r.visitor = std::string(visitor);
  return r;
}

// ---------------------------------------------------------------------------
// Batches

// Wire format (JSON object):
//   path              visitor path
//   task              task of the page that produced the events
//   seq               optional client batch sequence number, for de-duplication
//   fingerprint       optional browser-attribute map
//   events            array of event records, sorted by ts
//   client_ip_digest  filled in by the server
struct ArtifactBatch {
  std::string path;
  Task task = Task::flights;
  std::optional<std::uint64_t> seq;
  std::optional<AttrMap> fingerprint;
  std::vector<RawEvent> events;
  std::string client_ip_digest;
};

class MalformedBatch : public IngestionError {
 public:
  MalformedBatch(std::optional<std::size_t> position, const std::string& what)
      : IngestionError(position ? "event " + std::to_string(*position) + ": " + what : what), position_(position) {}
  std::optional<std::size_t> position() const noexcept { return position_; }

 private:
  std::optional<std::size_t> position_;
};

inline std::string serialize_batch(const ArtifactBatch& b) {
  detail::ojson j;
  j["path"] = b.path;
  j["task"] = std::string(to_string(b.task));
  if (b.seq) j["seq"] = *b.seq;
  if (b.fingerprint) j["fingerprint"] = detail::attrs_to_json(*b.fingerprint);
  auto& ev = j["events"] = detail::ojson::array();
  for (const auto& e : b.events) ev.push_back(detail::event_to_json(e));
  if (!b.client_ip_digest.empty()) j["client_ip_digest"] = b.client_ip_digest;
  return j.dump();
}

// Every event must parse, satisfy the per-event schema rules and keep ts order.
inline ArtifactBatch parse_batch(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedBatch(std::nullopt, std::string("body is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw MalformedBatch(std::nullopt, "batch must be an object");
  ArtifactBatch b;
  auto str = [&](const char* k) -> std::string {
    auto it = j.find(k);
    if (it == j.end() || !it->is_string()) throw MalformedBatch(std::nullopt, std::string("missing ") + k);
    return it->get<std::string>();
  };
  b.path = str("path");
  const auto task = task_from_string(str("task"));
  if (!task) throw MalformedBatch(std::nullopt, "unknown task");
  b.task = *task;
  if (auto it = j.find("seq"); it != j.end() && !it->is_null()) {
    if (!it->is_number_unsigned()) throw MalformedBatch(std::nullopt, "seq must be a non-negative integer");
    b.seq = it->get<std::uint64_t>();
  }
  if (auto it = j.find("fingerprint"); it != j.end() && !it->is_null()) {
    try {
      b.fingerprint = detail::attrs_from_json(*it);
    } catch (const std::invalid_argument& e) {
      throw MalformedBatch(std::nullopt, e.what());
    }
  }
  if (auto it = j.find("client_ip_digest"); it != j.end() && it->is_string()) b.client_ip_digest = *it;
  auto ev = j.find("events");
  if (ev == j.end() || !ev->is_array()) throw MalformedBatch(std::nullopt, "missing events array");
  for (std::size_t i = 0; i < ev->size(); ++i) {
    try {
      b.events.push_back(detail::event_from_json((*ev)[i]));
    } catch (const std::exception& e) {
      throw MalformedBatch(i, e.what());
    }
    std::vector<Violation> v;
    check_event(b.events.back(), i, v);
    if (!v.empty()) throw MalformedBatch(i, v.front().rule);
    if (i && b.events[i].ts < b.events[i - 1].ts) throw MalformedBatch(i, "events not sorted by ts");
  }
  return b;
}

// ---------------------------------------------------------------------------
// Session store

struct Ack {
  std::size_t stored = 0;
  bool duplicate = false;
};

// `<data_dir>/store/<path>_<task>.jsonl` holds a header line followed by
// events in arrival order; `.fp.json` holds the latest fingerprint and IP
// digest; `.seq` lists acknowledged batch numbers with their counts.
class SessionStore {
 public:
  SessionStore(fs::path data_dir, VisitorRegistry& registry) : dir_(std::move(data_dir) / "store"), reg_(registry) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IngestionError("cannot create store '" + dir_.string() + "': " + ec.message());
  }

  Ack ingest(const ArtifactBatch& b) {
    const auto rec = reg_.find(b.path);
    if (!rec || !rec->tasks_enabled.contains(b.task)) throw IngestionError("unregistered visitor path");
    std::lock_guard lock(visitor_mutex(b.path));
    const auto base = stem(b.path, b.task);
    auto seen = read_seqs(base);
    if (b.seq) {
      if (auto it = seen.find(*b.seq); it != seen.end()) return {it->second, true};
    }
    const auto log = base.string() + ".jsonl";
    std::ostringstream out;
    if (!fs::exists(log)) {
      SessionLog header;
      header.visitor_id = b.path;
      header.task = b.task;
      header.label = rec->label_hint;
      out << serialize_header(header) << '\n';
    }
    for (const auto& e : b.events) out << serialize_event(e) << '\n';
    {
      std::ofstream f(log, std::ios::app | std::ios::binary);
      f << out.str();
      f.flush();
      if (!f) throw IngestionError("cannot append to session file");
    }
    if (b.fingerprint || !b.client_ip_digest.empty()) write_sidecar(base, b);
    if (b.seq) {
      std::ofstream f(base.string() + ".seq", std::ios::app);
      f << *b.seq << ' ' << b.events.size() << '\n';
    }
    return {b.events.size(), false};
  }

  std::size_t event_count(std::string_view path, Task task) {
    std::ifstream f(stem(path, task).string() + ".jsonl", std::ios::binary);
    std::size_t n = 0;
    std::string line;
    while (std::getline(f, line))
      if (!line.empty()) ++n;
    return n ? n - 1 : 0;
  }

  // Events sorted by ts, fingerprint merged from the sidecar.
  std::optional<SessionLog> export_session(std::string_view path, Task task) {
    const auto base = stem(path, task);
    std::ifstream f(base.string() + ".jsonl", std::ios::binary);
    if (!f) return std::nullopt;
    auto s = read_session(f);
    std::ifstream fp(base.string() + ".fp.json", std::ios::binary);
    if (fp) {
      auto j = nlohmann::json::parse(fp, nullptr, false);
      if (!j.is_discarded() && j.contains("fingerprint")) s.browser_attrs = detail::attrs_from_json(j["fingerprint"]);
    }
    return s;
  }

  std::vector<SessionLog> export_all() {
    std::vector<SessionLog> out;
    for (const auto& v : reg_.all())
      for (auto t : v.tasks_enabled)
        if (auto s = export_session(v.path, t)) out.push_back(std::move(*s));
    return out;
  }

 private:
  fs::path stem(std::string_view path, Task task) const {
    return dir_ / (std::string(path) + "_" + std::string(to_string(task)));
  }

  std::mutex& visitor_mutex(const std::string& path) {
    std::lock_guard lock(table_mu_);
    auto& m = locks_[path];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  static std::map<std::uint64_t, std::size_t> read_seqs(const fs::path& base) {
    std::map<std::uint64_t, std::size_t> out;
    std::ifstream f(base.string() + ".seq");
    std::uint64_t seq;
    std::size_t n;
    while (f >> seq >> n) out[seq] = n;
    return out;
  }

  // Last write wins; written to a temporary and renamed into place.
  static void write_sidecar(const fs::path& base, const ArtifactBatch& b) {
    const fs::path target = base.string() + ".fp.json", tmp = base.string() + ".fp.json.tmp";
    nlohmann::json j;
    {
      std::ifstream old(target, std::ios::binary);
      if (old) j = nlohmann::json::parse(old, nullptr, false);
      if (!j.is_object()) j = nlohmann::json::object();
    }
    if (b.fingerprint) j["fingerprint"] = nlohmann::json::parse(detail::attrs_to_json(*b.fingerprint).dump());
    if (!b.client_ip_digest.empty()) j["client_ip_digest"] = b.client_ip_digest;
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      f << j.dump() << '\n';
      if (!f) throw IngestionError("cannot write fingerprint sidecar");
    }
    fs::rename(tmp, target);
  }

  fs::path dir_;
  VisitorRegistry& reg_;
  std::mutex table_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

// ---------------------------------------------------------------------------
// HTTP front

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path data_dir = "data";
  std::string ip_salt;
  std::optional<fs::path> collector_script;  // bundled instrumentation client

  // AGENTFP_LISTEN ("host:port"), AGENTFP_DATA_DIR, AGENTFP_IP_SALT,
  // AGENTFP_COLLECTOR_JS.
  static ServeConfig from_env() {
    ServeConfig c;
    if (const char* l = std::getenv("AGENTFP_LISTEN"); l && *l) {
      std::string_view s(l);
      const auto colon = s.rfind(':');
      if (colon == std::string_view::npos) throw ConfigError("AGENTFP_LISTEN must be host:port");
      c.host = std::string(s.substr(0, colon));
      try {
        c.port = std::stoi(std::string(s.substr(colon + 1)));
      } catch (const std::exception&) {
        throw ConfigError("AGENTFP_LISTEN has an invalid port");
      }
    }
    if (const char* d = std::getenv("AGENTFP_DATA_DIR"); d && *d) c.data_dir = d;
    if (const char* salt = std::getenv("AGENTFP_IP_SALT"); salt) c.ip_salt = salt;
    if (const char* js = std::getenv("AGENTFP_COLLECTOR_JS"); js && *js) c.collector_script = js;
    return c;
  }
};

inline std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Task page with the form inventory of the task script and the collector
// configuration inlined ahead of the collector bundle.
inline std::string render_page(const VisitorRecord& v, Task task, std::string_view collector_js) {
  const auto script = synth::default_script(task);
  nlohmann::json cfg;
  cfg["collect_url"] = "/" + v.path + "/collect";
  cfg["path"] = v.path;
  cfg["task"] = std::string(to_string(task));
  cfg["flush_interval"] = 1000;
  cfg["max_batch"] = 200;
  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << to_string(task) << "</title></head><body>\n"
    << "<main id=\"task-" << to_string(task) << "\"><form onsubmit=\"return false\">\n";
  for (const auto& f : script.fields_to_fill) {
    const auto id = html_escape(f.target);
    if (f.length > 60)
      h << "<label>" << id << " <textarea id=\"" << id << "\" name=\"" << id << "\"></textarea></label>\n";
    else
      h << "<label>" << id << " <input type=\"text\" id=\"" << id << "\" name=\"" << id << "\"></label>\n";
  }
  for (int i = 0; i < script.clicks; ++i) {
    const auto id = "control_" + std::to_string(i);
    if (i < script.change_clicks)
      h << "<label><input type=\"checkbox\" id=\"" << id << "\"> " << id << "</label>\n";
    else
      h << "<button type=\"button\" id=\"" << id << "\">" << id << "</button>\n";
  }
  h << "</form><div style=\"height:5000px\"></div></main>\n"
    << "<script>window.AGENTFP_CONFIG=" << cfg.dump() << ";</script>\n"
    << "<script>" << collector_js << "</script>\n</body></html>\n";
  return h.str();
}

class Server {
 public:
  explicit Server(ServeConfig cfg)
      : cfg_(std::move(cfg)), registry_(cfg_.data_dir), store_(cfg_.data_dir, registry_) {
    if (cfg_.ip_salt.empty()) throw ConfigError("AGENTFP_IP_SALT is not set");
    if (cfg_.collector_script) {
      std::ifstream f(*cfg_.collector_script, std::ios::binary);
      if (!f) throw ConfigError("cannot read collector script '" + cfg_.collector_script->string() + "'");
      collector_ << f.rdbuf();
    }
    install_handlers();
  }

  VisitorRegistry& registry() { return registry_; }
  SessionStore& store() { return store_; }

  // Binds the listening socket; port 0 picks a free one. Returns the port.
  int bind() {
    int port = cfg_.port;
    if (port == 0) {
      port = http_.bind_to_any_port(cfg_.host);
      if (port < 0) throw ConfigError("cannot bind " + cfg_.host);
    } else if (!http_.bind_to_port(cfg_.host, port)) {
      throw ConfigError("cannot bind " + cfg_.host + ":" + std::to_string(port) + " (port busy?)");
    }
    port_ = port;
    return port;
  }

  // Blocks until stop().
  void run() {
    if (!port_) bind();
    http_.listen_after_bind();
  }

  void stop() { http_.stop(); }
  void wait_until_ready() const { http_.wait_until_ready(); }

 private:
  static void not_found(httplib::Response& res) {
    res.status = 404;
    res.body.clear();
    res.headers.clear();
  }

  void install_handlers() {
    http_.Get(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto r = route(req.path, registry_);
      if (r.kind != Route::page) return not_found(res);
      const auto rec = registry_.find(r.visitor);
      res.set_content(render_page(*rec, *r.task, collector_.str()), "text/html; charset=utf-8");
    });
    http_.Post(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto r = route(req.path, registry_);
      if (r.kind != Route::collect_endpoint) return not_found(res);
      try {
        auto batch = parse_batch(req.body);
        if (batch.path != r.visitor) return not_found(res);
        batch.client_ip_digest = hash_ip(req.remote_addr, cfg_.ip_salt);
        const auto ack = store_.ingest(batch);
        nlohmann::json body{{"stored", ack.stored}};
        if (ack.duplicate) body["duplicate"] = true;
        res.set_content(body.dump(), "application/json");
      } catch (const MalformedBatch& e) {
        nlohmann::json body{{"error", e.what()}};
        if (e.position()) body["position"] = *e.position();
        res.status = 400;
        res.set_content(body.dump(), "application/json");
      } catch (const IngestionError&) {
        not_found(res);
      }
    });
    http_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.status == 404) res.body.clear();
    });
  }

  ServeConfig cfg_;
  VisitorRegistry registry_;
  SessionStore store_;
  std::ostringstream collector_;
  httplib::Server http_;
  int port_ = 0;
};

}  // namespace agentfp::honeypot
