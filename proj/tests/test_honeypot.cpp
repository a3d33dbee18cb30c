#include <catch_amalgamated.hpp>

#include <filesystem>
#include <thread>

#include "agentfp/honeypot.hpp"

using namespace agentfp;
using namespace agentfp::honeypot;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("agentfp_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const std::set<Task> kTasks{Task::flights, Task::shop, Task::forums};

std::vector<RawEvent> inputs(std::size_t n, std::int64_t start) {
  std::vector<RawEvent> out;
  for (std::size_t i = 0; i < n; ++i) {
    RawEvent e;
    e.kind = EventKind::input;
    e.ts = start + static_cast<std::int64_t>(i) * 10;
    e.target = "search";
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("create_visitor") {
  TempDir a, b;
  VisitorRegistry ra(a.path), rb(b.path);
  auto v1 = ra.create_visitor(std::nullopt, kTasks, 1);
  CHECK(v1.path.size() == 10);
  CHECK(valid_path(v1.path));
  for (char c : v1.path) CHECK(kPathAlphabet.find(c) != std::string_view::npos);
  CHECK(rb.create_visitor(std::nullopt, kTasks, 1).path == v1.path);

  SECTION("persisted and reloadable") {
    VisitorRegistry again(a.path);
    auto found = again.find(v1.path);
    REQUIRE(found);
    CHECK(found->tasks_enabled == kTasks);
  }
  SECTION("ten thousand distinct paths") {
    TempDir c;
    VisitorRegistry rc(c.path);
    std::set<std::string> paths;
    for (std::uint64_t i = 0; i < 10000; ++i) paths.insert(rc.create_visitor(ClassLabel::human, {Task::shop}, i).path);
    CHECK(paths.size() == 10000);
    CHECK(rc.size() == 10000);
  }
}

TEST_CASE("route") {
  TempDir d;
  VisitorRegistry reg(d.path);
  auto v = reg.create_visitor(std::nullopt, {Task::flights, Task::shop}, 3);
  auto r = route("/" + v.path + "/flights", reg);
  CHECK(r.kind == Route::page);
  CHECK(r.task == Task::flights);
  CHECK(r.visitor == v.path);
  CHECK(route("/" + v.path + "/collect", reg).kind == Route::collect_endpoint);
  CHECK(route("/zzzzzzzzzz/flights", reg).kind == Route::not_found);
  CHECK(route("/" + v.path + "/banking", reg).kind == Route::not_found);
  CHECK(route("/" + v.path + "/forums", reg).kind == Route::not_found);  // not enabled
  CHECK(route("/" + v.path + "/flights/extra", reg).kind == Route::not_found);
  CHECK(route("/" + v.path, reg).kind == Route::not_found);
  CHECK(route("/", reg).kind == Route::not_found);
  CHECK(route("/favicon.ico", reg).kind == Route::not_found);
}

TEST_CASE("hash_ip") {
  auto a = hash_ip("203.0.113.7", "salt-one");
  CHECK(a == hash_ip("203.0.113.7", "salt-one"));
  CHECK(a != hash_ip("203.0.113.7", "salt-two"));
  CHECK(a.size() == 64);
  CHECK(hash_ip("::1", "s").size() == 64);
  CHECK(a.find("203") == std::string::npos);
  CHECK_THROWS_AS(hash_ip("1.2.3.4", ""), ConfigError);
}

TEST_CASE("batch wire format") {
  ArtifactBatch b;
  b.path = "abcdefghij";
  b.task = Task::forums;
  b.seq = 4;
  b.fingerprint = AttrMap{{"platform", std::string("MacIntel")}, {"cores", 8.0}};
  b.events = inputs(3, 100);
  auto back = parse_batch(serialize_batch(b));
  CHECK(back.path == b.path);
  CHECK(back.task == b.task);
  CHECK(back.seq == b.seq);
  CHECK(back.fingerprint == b.fingerprint);
  CHECK(back.events == b.events);

  SECTION("malformed event reports its position") {
    const std::string body =
        R"({"path":"abcdefghij","task":"shop","events":[{"kind":"input","ts":1},{"kind":"mousedown","ts":2,"x":1,"y":1}]})";
    try {
      parse_batch(body);
      FAIL("expected rejection");
    } catch (const MalformedBatch& e) {
      REQUIRE(e.position());
      CHECK(*e.position() == 1);
    }
  }
  SECTION("unsorted events are rejected") {
    CHECK_THROWS_AS(parse_batch(R"({"path":"abcdefghij","task":"shop","events":[{"kind":"input","ts":5},{"kind":"input","ts":1}]})"),
                    MalformedBatch);
  }
  SECTION("structural errors") {
    CHECK_THROWS_AS(parse_batch("[]"), MalformedBatch);
    CHECK_THROWS_AS(parse_batch("{"), MalformedBatch);
    CHECK_THROWS_AS(parse_batch(R"({"path":"abcdefghij","task":"mars","events":[]})"), MalformedBatch);
    CHECK_THROWS_AS(parse_batch(R"({"path":"abcdefghij","task":"shop"})"), MalformedBatch);
  }
}

TEST_CASE("session store") {
  TempDir d;
  VisitorRegistry reg(d.path);
  SessionStore store(d.path, reg);
  auto v = reg.create_visitor(ClassLabel::manus, kTasks, 8);

  SECTION("ingest and export") {
    ArtifactBatch b{v.path, Task::shop, std::nullopt, AttrMap{{"platform", std::string("Linux x86_64")}}, inputs(5, 0), ""};
    CHECK(store.ingest(b).stored == 5);
    CHECK(store.event_count(v.path, Task::shop) == 5);
    ArtifactBatch early{v.path, Task::shop, std::nullopt, std::nullopt, inputs(2, -1000 + 1000), ""};
    early.events[0].ts = 1;
    early.events[1].ts = 2;
    store.ingest(early);
    auto s = store.export_session(v.path, Task::shop);
    REQUIRE(s);
    CHECK(s->events.size() == 7);
    CHECK(validate_session(*s).empty());
    CHECK(s->label == ClassLabel::manus);
    CHECK(std::get<std::string>(s->browser_attrs.at("platform")) == "Linux x86_64");
    CHECK(store.export_all().size() == 1);
    CHECK_FALSE(store.export_session(v.path, Task::forums));
  }
  SECTION("unregistered path leaves the store unchanged") {
    ArtifactBatch b{"zzzzzzzzzz", Task::shop, std::nullopt, std::nullopt, inputs(5, 0), ""};
    CHECK_THROWS_AS(store.ingest(b), IngestionError);
    CHECK(store.event_count("zzzzzzzzzz", Task::shop) == 0);
  }
  SECTION("duplicate sequence numbers are acknowledged once") {
    ArtifactBatch b{v.path, Task::flights, 1, std::nullopt, inputs(3, 0), ""};
    CHECK_FALSE(store.ingest(b).duplicate);
    auto again = store.ingest(b);
    CHECK(again.duplicate);
    CHECK(again.stored == 3);
    CHECK(store.event_count(v.path, Task::flights) == 3);
  }
  SECTION("concurrent batches to one visitor") {
    for (int rep = 0; rep < 20; ++rep) {
      const auto before = store.event_count(v.path, Task::forums);
      std::thread t1([&] { store.ingest({v.path, Task::forums, std::nullopt, std::nullopt, inputs(3, 0), ""}); });
      std::thread t2([&] { store.ingest({v.path, Task::forums, std::nullopt, std::nullopt, inputs(4, 0), ""}); });
      t1.join();
      t2.join();
      CHECK(store.event_count(v.path, Task::forums) == before + 7);
    }
    auto s = store.export_session(v.path, Task::forums);
    REQUIRE(s);
    CHECK(s->events.size() == 140);
    CHECK(validate_session(*s).empty());
  }
}

TEST_CASE("http service") {
  TempDir d;
  ServeConfig cfg;
  cfg.port = 0;
  cfg.data_dir = d.path;
  SECTION("salt is required") { CHECK_THROWS_AS(Server(cfg), ConfigError); }

  cfg.ip_salt = "pepper";
  Server server(cfg);
  const int port = server.bind();
  std::thread th([&] { server.run(); });
  server.wait_until_ready();
  auto v = server.registry().create_visitor(std::nullopt, kTasks, 12);
  httplib::Client cli("127.0.0.1", port);

  auto page = cli.Get("/" + v.path + "/flights");
  REQUIRE(page);
  CHECK(page->status == 200);
  CHECK(page->body.find("<html") != std::string::npos);

  for (const std::string& p : std::vector<std::string>{"/zzzzzzzzzz/flights", "/" + v.path + "/banking", "/", "/robots.txt"}) {
    auto r = cli.Get(p);
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK(r->body.empty());
  }

  ArtifactBatch b{v.path, Task::flights, std::nullopt, AttrMap{{"cores", 4.0}}, inputs(5, 0), ""};
  auto post = cli.Post("/" + v.path + "/collect", serialize_batch(b), "application/json");
  REQUIRE(post);
  CHECK(post->status == 200);
  CHECK(nlohmann::json::parse(post->body).at("stored") == 5);
  CHECK(server.store().event_count(v.path, Task::flights) == 5);

  auto bad = cli.Post("/" + v.path + "/collect",
                      R"({"path":")" + v.path + R"(","task":"flights","events":[{"kind":"keydown","ts":1}]})",
                      "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(nlohmann::json::parse(bad->body).at("position") == 0);
  CHECK(server.store().event_count(v.path, Task::flights) == 5);

  auto stray = cli.Post("/zzzzzzzzzz/collect", serialize_batch(b), "application/json");
  REQUIRE(stray);
  CHECK(stray->status == 404);

  // the stored digest is keyed, never the raw address
  std::ifstream fp(d.path / "store" / (v.path + "_flights.fp.json"));
  std::string sidecar((std::istreambuf_iterator<char>(fp)), {});
  CHECK(sidecar.find(hash_ip("127.0.0.1", "pepper")) != std::string::npos);
  CHECK(sidecar.find("127.0.0.1") == std::string::npos);

  server.stop();
  th.join();
}
