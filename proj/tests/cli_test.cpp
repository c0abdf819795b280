#include <doctest.h>

#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / ("smlab-cli-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const std::string& name, const json& doc) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code = -1;
  std::string output;
};

Run smlab(const std::string& args, const std::string& env = "") {
  const fs::path log = scratch() / "log.txt";
  const std::string cmd = env + " \"" SMLAB_BINARY "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

json small(const fs::path& out) {
  return {{"grid", {{"n", 31}}},
          {"noise", {{"m", 8}}},
          {"physics", {{"mu", 0.1}}},
          {"time", {{"dt", 1e-4}, {"T", 0.02}}},
          {"output", {{"directory", out.string()}, {"stride", 20}}}};
}

}  // namespace

TEST_CASE("configuration errors exit with 1") {
  CHECK(smlab("simulate \"" + (scratch() / "missing.json").string() + "\"").code == 1);
  json bad = small(scratch() / "bad");
  bad["grid"]["bogus"] = 3;
  const Run r = smlab("simulate \"" + write_config("bad.json", bad).string() + "\"");
  CHECK(r.code == 1);
  CHECK(r.output.find("grid.bogus") != std::string::npos);
  std::ofstream(scratch() / "broken.json") << "{ not json";
  CHECK(smlab("limit \"" + (scratch() / "broken.json").string() + "\"").code == 1);
  CHECK(smlab("frobnicate").code == 1);
  CHECK(smlab("").code == 1);
}

TEST_CASE("simulate, then rerun from the manifest") {
  const fs::path out = scratch() / "sim";
  fs::remove_all(out);
  REQUIRE(smlab("simulate \"" + write_config("sim.json", small(out)).string() + "\"").code == 0);
  REQUIRE(fs::exists(out / "trajectory.csv"));
  REQUIRE(fs::exists(out / "simulate.manifest.json"));
  const json manifest = json::parse(slurp(out / "simulate.manifest.json"));
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["seeds"].size() == 1);
  CHECK(manifest.contains("config_hash"));
  CHECK(manifest.contains("code_version"));

  const fs::path again = scratch() / "sim-again";
  fs::remove_all(again);
  const std::string env = std::string("SMLAB_OUTPUT_DIR=\"") + again.string() + "\"";
  REQUIRE(smlab("simulate \"" + (out / "simulate.manifest.json").string() + "\"", env).code == 0);
  CHECK(slurp(again / "trajectory.csv") == slurp(out / "trajectory.csv"));
  CHECK(json::parse(slurp(again / "simulate.manifest.json"))["config_hash"] == manifest["config_hash"]);
}

TEST_CASE("limit command") {
  const fs::path out = scratch() / "lim";
  json c = small(out);
  c["time"]["T"] = 0.05;
  REQUIRE(smlab("limit \"" + write_config("lim.json", c).string() + "\"").code == 0);
  CHECK(fs::exists(out / "limit.csv"));
  CHECK(json::parse(slurp(out / "limit.manifest.json"))["checks"][0]["passed"] == true);
}

TEST_CASE("numerical failure exits with 2") {
  json c = small(scratch() / "boom");
  c["initial_data"] = {{"velocity", {{{"k", 1}, {"component", 2}, {"coefficient", 1e200}}}}};
  const Run r = smlab("simulate \"" + write_config("boom.json", c).string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.output.find("blow-up") != std::string::npos);
}

TEST_CASE("study gates") {
  SUBCASE("a small study with a met trend passes") {
    const fs::path out = scratch() / "study-ok";
    const json c = {{"grid", {{"n", 31}}},
                    {"noise", {{"m", 8}}},
                    {"physics", {{"mu", {0.2, 0.05}}}},
                    {"time", {{"T", 0.25}, {"dt_scale", 2e-3}}},
                    {"study", {{"ensemble", 3}, {"outputs", 16}, {"trend_factor", 0.9}}},
                    {"output", {{"directory", out.string()}}}};
    const Run r = smlab("study --check \"" + write_config("study-ok.json", c).string() + "\"");
    INFO(r.output);
    CHECK(r.code == 0);
    CHECK(fs::exists(out / "study.json"));
    CHECK(fs::exists(out / "samples.csv"));
  }
  SUBCASE("an energy residual above the gate fails with 3") {
    const fs::path out = scratch() / "study-gate";
    const json c = {{"grid", {{"n", 31}}},
                    {"noise", {{"m", 8}}},
                    {"physics", {{"mu", {0.2, 0.05}}}},
                    {"time", {{"T", 0.25}, {"dt_scale", 2e-3}}},
                    {"study", {{"ensemble", 3}, {"outputs", 16}, {"trend_factor", 0.9}, {"energy_gate", 1e-9}}},
                    {"output", {{"directory", out.string()}}}};
    const Run r = smlab("study --check \"" + write_config("study-gate.json", c).string() + "\"");
    INFO(r.output);
    CHECK(r.code == 3);
    CHECK(r.output.find("check energy_residual_gate: FAIL") != std::string::npos);
    CHECK(r.output.find("check mean_error_ratio: PASS") != std::string::npos);
    const json manifest = json::parse(slurp(out / "study.manifest.json"));
    CHECK(manifest["checks"].size() == 4);
  }
}

TEST_CASE("invariant suite negative control exits with 3") {
  const fs::path report = scratch() / "mutated.json";
  const Run r = smlab("check --mutate-correction --report \"" + report.string() + "\"");
  CHECK(r.code == 3);
  CHECK(r.output.find("FAIL spde_sim.energy_identity") != std::string::npos);
  CHECK(json::parse(slurp(report))["passed"] == false);
}
