#include <doctest.h>

#include "qcontrol/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace qcontrol;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qcontrol_test_" + name);
  fs::remove_all(p);
  return p;
}

bool any_contains(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

// exit status and stdout of a shell command
std::pair<int, std::string> shell(const std::string& cmd) {
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

}  // namespace

TEST_CASE("text config parsing") {
  const auto c = parse_config_text("# comment\nmethod = grape\n grid.T = 2.5  # inline\n\nqscan.values = 0.1:0.5:0.1\n");
  CHECK(c.get("method") == "grape");
  CHECK(c.get_double("grid.T") == 2.5);
  CHECK(c.get_double("grid.dt") == 0.05);  // schema default
  const auto v = c.get_list("qscan.values");
  REQUIRE(v.size() == 5);
  CHECK(v[4] == 0.5);
  CHECK(v[2] == 0.3);
  CHECK_THROWS_AS(parse_config_text("grid.T = 1\ngrid.T = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("no equals sign\n"), ConfigError);
  ExperimentConfig o;
  apply_override(o, "system.L=4");
  CHECK(o.get_int("system.L") == 4);
  CHECK_THROWS_AS(apply_override(o, "nothing"), ConfigError);
}

TEST_CASE("validation reports every problem") {
  CHECK(validate(ExperimentConfig{}).empty());  // defaults are valid

  auto c = parse_config_text("grid.T = 1\ngrid.dt = 2\n");
  CHECK(any_contains(validate(c), "grid empty"));

  c = parse_config_text("fields.initial = -4.5\n");
  CHECK(any_contains(validate(c), "bound error"));

  c = parse_config_text("bogus.key = 1\nsystem.L = x\n");
  const auto errs = validate(c);
  CHECK(errs.size() >= 2);
  CHECK(any_contains(errs, "bogus.key"));
  CHECK(any_contains(errs, "system.L"));

  c = parse_config_text("method = dos\nsystem.L = 4\ngrid.bins = 31\n");
  const auto cap = validate(c);
  REQUIRE_FALSE(cap.empty());
  CHECK(cap[0].rfind("resource cap", 0) == 0);
  try {
    run(c, scratch("cap"));
    FAIL("expected a resource cap error");
  } catch (const ConfigError& e) {
    CHECK(e.kind() == "resource_cap");
  }
  CHECK_FALSE(fs::exists(scratch("cap")));
}

TEST_CASE("same config and seed give byte-identical artifacts") {
  const auto c = parse_config_text("method = sd\nseed = 5\ngrid.T = 1\ngrid.dt = 0.05\nsd.restarts = 8\n");
  const auto a = run(c, scratch("a"));
  const auto b = run(c, scratch("b"));
  CHECK(a.artifacts == b.artifacts);
  for (const auto& name : a.artifacts) {
    if (name == "manifest.json") continue;
    CHECK(slurp(a.output_dir / name) == slurp(b.output_dir / name));
  }
  // everything stays inside the output directory
  for (const auto& e : fs::recursive_directory_iterator(a.output_dir)) {
    CHECK(std::find(a.artifacts.begin(), a.artifacts.end(), e.path().filename().string()) != a.artifacts.end());
  }
}

TEST_CASE("a manifest replays its run") {
  const auto c = parse_config_text("method = grape\nseed = 9\ngrid.T = 1\ngrid.dt = 0.1\ngrape.restarts = 2\n"
                                   "grape.max_iters = 40\n");
  const auto first = run(c, scratch("m1"));
  const auto manifest = nlohmann::json::parse(slurp(first.output_dir / "manifest.json"));
  CHECK(manifest["method"] == "grape");
  CHECK(manifest["seed"] == 9);
  CHECK(manifest["config"]["grid.T"] == "1");
  const auto replay = load_config(first.output_dir / "manifest.json");
  const auto second = run(replay, scratch("m2"));
  for (const auto& name : first.artifacts) {
    if (name == "manifest.json") continue;
    CHECK(slurp(first.output_dir / name) == slurp(second.output_dir / name));
  }
}

TEST_CASE("compare emits one row per duration with all four methods") {
  const auto c = parse_config_text(
      "method = compare\ncompare.times = 0.5,1\ngrid.dt = 0.1\nsd.restarts = 5\ngrape.restarts = 2\ngrape.max_iters = 50\n"
      "crab.restarts = 2\ncrab.max_iters = 100\nrl.seeds = 2\nrl.episodes = 80\n");
  const auto r = run(c, scratch("cmp"));
  std::istringstream csv(slurp(r.output_dir / "compare.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "T,N_T,rl,sd,grape,crab");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("command line exit codes and error JSON") {
  const std::string cli = QCONTROL_CLI;
  auto [code, out] = shell(cli + " validate --set grid.dt=2 --set grid.T=1");
  CHECK(code == 2);
  const auto j = nlohmann::json::parse(out);
  CHECK(j["error"]["kind"] == "invalid_config");

  std::tie(code, out) = shell(cli + " dos --set system.L=4 --set grid.bins=31 --out " + scratch("clicap").string());
  CHECK(code == 3);
  CHECK(nlohmann::json::parse(out)["error"]["kind"] == "resource_cap");

  std::tie(code, out) = shell(cli + " validate");
  CHECK(code == 0);

  const fs::path dir = scratch("cli");
  std::tie(code, out) = shell(cli + " sd --seed 3 --set grid.T=0.5 --set sd.restarts=4 --out " + dir.string());
  CHECK(code == 0);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "best_protocol.csv"));
}
