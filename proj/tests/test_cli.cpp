#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Run {
  int rc = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(AGENTFP_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  while (auto n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

struct Workspace {
  fs::path root = fs::temp_directory_path() / ("agentfp_cli_" + std::to_string(::getpid()));
  std::string data = (root / "data").string();
  Workspace() {
    fs::remove_all(root);
    REQUIRE(run("synth --data-dir " + data + " -n 6 --seed 3").rc == 0);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string out(const std::string& name) const { return (root / name).string(); }
};

const std::string kFast = " --rounds 15 --max-depth 3 ";

}  // namespace

TEST_CASE("cli end to end") {
  Workspace ws;
  REQUIRE(std::distance(fs::directory_iterator(ws.data + "/sessions"), fs::directory_iterator{}) == 6 * 8 * 3);

  SECTION("pipeline writes six metric rows, deterministically") {
    auto a = run("pipeline --data-dir " + ws.data + " --out " + ws.out("r1") + kFast);
    REQUIRE(a.rc == 0);
    auto b = run("pipeline --data-dir " + ws.data + " --out " + ws.out("r2") + kFast);
    REQUIRE(b.rc == 0);
    const auto metrics = slurp(ws.out("r1") + "/metrics.tsv");
    CHECK(lines(metrics) == 7);
    for (const auto& e : fs::directory_iterator(ws.out("r1"))) {
      INFO(e.path().filename());
      CHECK(slurp(e.path()) == slurp(fs::path(ws.out("r2")) / e.path().filename()));
    }
    CHECK(fs::exists(ws.out("r1") + "/confusion_agents_plus_human_combined.tsv"));
    CHECK(fs::exists(ws.out("r1") + "/importance_agents_only_behavioral.tsv"));
    CHECK(fs::exists(ws.out("r1") + "/fpstats.tsv"));
    CHECK(fs::exists(ws.out("r1") + "/scroll_bursts.tsv"));
    CHECK(fs::exists(ws.out("r1") + "/event_counts.tsv"));
  }
  SECTION("realtime emits 36 windows") {
    auto r = run("realtime --data-dir " + ws.data + " --out " + ws.out("rt") + " --rounds 3 --max-depth 2");
    REQUIRE(r.rc == 0);
    CHECK(lines(r.out) == 37);
    CHECK(run("realtime --data-dir " + ws.data + " --windows 10,5").rc == 2);
  }
  SECTION("holdout emits six rows, rejects unknown tasks") {
    auto r = run("holdout --data-dir " + ws.data + " --out " + ws.out("ho") + kFast);
    REQUIRE(r.rc == 0);
    CHECK(lines(r.out) == 7);
    CHECK(run("holdout --data-dir " + ws.data + " --task banking").rc == 2);
  }
  SECTION("stats") {
    auto all = run("stats --all-pairs --data-dir " + ws.data + " --out " + ws.out("st"));
    REQUIRE(all.rc == 0);
    CHECK(lines(all.out) == 1 + 50 * 28);
    auto one = run("stats --data-dir " + ws.data + " --out " + ws.out("st") +
                   " --feature 'Number of change events' --class-a browser_use --class-b human");
    REQUIRE(one.rc == 0);
    CHECK(lines(one.out) == 2);
    CHECK(one.out.find("browser_use\thuman") != std::string::npos);
    CHECK(run("stats --data-dir " + ws.data + " --feature x").rc == 2);
  }
  SECTION("featurize and fpstats") {
    REQUIRE(run("featurize --data-dir " + ws.data + " --out " + ws.out("f")).rc == 0);
    CHECK(lines(slurp(ws.out("f") + "/features.tsv")) == 1 + 6 * 8 * 3);
    CHECK(fs::exists(ws.out("f") + "/encoder.json"));
    auto fp = run("fpstats --data-dir " + ws.data + " --out " + ws.out("f"));
    REQUIRE(fp.rc == 0);
    CHECK(lines(fp.out) == 9);
  }
}

TEST_CASE("cli errors") {
  CHECK(run("pipeline --data-dir /nonexistent/agentfp").rc == 3);
  CHECK(run("pipeline --feature-set audio --data-dir /tmp").rc == 2);
  CHECK(run("frobnicate").rc == 2);
  CHECK(run("synth -n 0 --data-dir /tmp/agentfp_never").rc == 2);
  CHECK(std::system(("env -u AGENTFP_IP_SALT " + std::string(AGENTFP_CLI_PATH) +
                     " serve --data-dir /tmp/agentfp_serve_test --listen 127.0.0.1:0 2>/dev/null")
                        .c_str()) >> 8 == 2);
  fs::remove_all("/tmp/agentfp_serve_test");
}
