#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ck/scenario.hpp"
#include "ck/transport.hpp"

using namespace ck;
using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "ck-scenario-tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  fs::path p = dir / name;
  std::ofstream out(p);
  out << text;
  return p.string();
}

Json report_of(const RunResult& r) { return Json::parse(r.report_json); }

}  // namespace

TEST_CASE("scenario parsing rejects malformed input") {
  CHECK_THROWS_AS(parse_scenario("{"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario("[1, 2]"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(R"({"command": "pestov"})"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(R"({"version": 2, "command": "pestov"})"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario(R"({"version": 1, "command": "pestov", "extra": 3})"),
                  ScenarioError);
  CHECK_THROWS_AS(parse_scenario(R"({"version": 1, "command": "transmogrify"})"), ScenarioError);
  CHECK_THROWS_AS(
      parse_scenario(R"({"version": 1, "command": "pestov", "parameters": {"bogus": 1}})"),
      ScenarioError);
  CHECK_THROWS_AS(parse_scenario(R"({"version": 1, "command": "pestov",
                                     "parameters": {"draws": 0}})"),
                  ScenarioError);
  CHECK_THROWS_AS(parse_scenario(R"({"version": 1, "command": "santalo",
                                     "parameters": {"integrand": {"kind": "quadratic"}}})"),
                  ScenarioError);
  CHECK_THROWS_AS(parse_scenario(R"({"version": 1, "command": "geodesic",
                                     "parameters": {"manifold": "torus"}})"),
                  ScenarioError);
  CHECK_THROWS_AS(parse_scenario(R"({"version": 1, "command": "check-weight",
                                     "parameters": {"weight": {"family": "linear",
                                                               "x0": [0, 0, 0]}}})"),
                  ScenarioError);  // linear needs xi
  CHECK_THROWS_AS(parse_scenario(R"({"version": 1, "command": "check-weight",
                                     "parameters": {"weight": {"family": "arg-plane",
                                                               "x0": [0, 0, 0],
                                                               "omega1": [1, 0, 0],
                                                               "omega2": [2, 0, 0]}}})"),
                  ScenarioError);  // degenerate plane pair

  // Minimal valid text parses and defaults hold.
  auto sc = parse_scenario(R"({"version": 1, "command": "pestov", "seed": 7})");
  CHECK(sc.seed == 7);
  CHECK(std::get<PestovParams>(sc.params).draws == 200);
}

TEST_CASE("missing scenario file maps to a parse failure") {
  auto r = run_scenario(std::string("/nonexistent/scenario.json"), {});
  CHECK(r.status == 2);
  CHECK(!r.diagnostic.empty());
}

TEST_CASE("catalog pipeline runs and reports deterministically") {
  auto dir = fresh_dir("catalog");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "catalog-verify", "seed": 42,
    "parameters": {"draws": 2, "points": 10, "directions": 6, "dim": 3}
  })");

  RunOptions o1{(dir / "a").string(), 0, 1.0};
  auto r1 = run_scenario(scen, o1);
  CHECK(r1.status == 0);
  auto doc1 = report_of(r1);
  CHECK(doc1["report"]["pass"].get<bool>());
  CHECK(doc1["report"]["checks"].size() == 6);
  CHECK(doc1.contains("timing"));
  CHECK(fs::exists(dir / "a" / "report.json"));
  REQUIRE(r1.csv_paths.size() == 1);
  std::ifstream csv(r1.csv_paths[0]);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "family,draw,max_bracket");

  // Same scenario and seed: identical report content, timing aside.
  RunOptions o2{(dir / "b").string(), 0, 1.0};
  auto r2 = run_scenario(scen, o2);
  CHECK(report_of(r2)["report"].dump() == doc1["report"].dump());

  // A different seed moves the sampled values.
  std::string scen2 = write_file(dir, "scenario2.json", R"({
    "version": 1, "command": "catalog-verify", "seed": 43,
    "parameters": {"draws": 2, "points": 10, "directions": 6, "dim": 3}
  })");
  auto r3 = run_scenario(scen2, RunOptions{(dir / "c").string(), 0, 1.0});
  CHECK(r3.status == 0);
  CHECK(report_of(r3)["report"]["checks"].dump() != doc1["report"]["checks"].dump());
}

TEST_CASE("check-weight scenario validates a configured weight") {
  auto dir = fresh_dir("check-weight");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "check-weight", "seed": 1,
    "parameters": {"weight": {"family": "log", "a": 1.5, "x0": [0.1, -0.2, 0.3]},
                   "points": 30, "directions": 8}
  })");
  auto r = run_scenario(scen, RunOptions{dir.string(), 0, 1.0});
  CHECK(r.status == 0);
  auto rep = report_of(r)["report"];
  CHECK(rep["checks"][0]["name"] == "max_normalized_bracket");
  CHECK(rep.contains("worst_sample"));
}

TEST_CASE("geodesic scenario writes the path table") {
  auto dir = fresh_dir("geodesic");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "geodesic", "seed": 0,
    "parameters": {"manifold": "conformal-disc", "start": [0.3, -0.2], "angle": 1.1}
  })");
  auto r = run_scenario(scen, RunOptions{dir.string(), 0, 1.0});
  CHECK(r.status == 0);
  REQUIRE(r.csv_paths.size() == 1);
  std::ifstream csv(r.csv_paths[0]);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "t,x1,x2,v1,v2");
  auto rep = report_of(r)["report"];
  CHECK(rep["tau"].get<double>() > 0.1);

  // Starting outside the manifold is a configuration error.
  std::string bad = write_file(dir, "bad.json", R"({
    "version": 1, "command": "geodesic", "seed": 0,
    "parameters": {"start": [2.5, 0.0]}
  })");
  auto rb = run_scenario(bad, RunOptions{dir.string(), 0, 1.0});
  CHECK(rb.status == 2);
}

TEST_CASE("xray forward scenario checks step refinement") {
  auto dir = fresh_dir("xray-forward");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "xray-forward", "seed": 0,
    "parameters": {"attenuation": {"kind": "constant", "value": 0.25},
                   "fan_boundary": 12, "fan_angle": 8}
  })");
  auto r = run_scenario(scen, RunOptions{dir.string(), 0, 1.0});
  CHECK(r.status == 0);
  REQUIRE(r.csv_paths.size() == 1);
  std::ifstream csv(r.csv_paths[0]);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "s,alpha,x1,x2,v1,v2,re,im");
}

TEST_CASE("xray invert scenario reuses its matrix cache") {
  auto dir = fresh_dir("xray-invert");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "xray-invert", "seed": 0,
    "parameters": {"grid_n": 10, "fan_boundary": 24, "fan_angle": 24,
                   "max_rel_error": 0.25, "cache": "sys.xrtm"}
  })");
  RunOptions opt{dir.string(), 0, 1.0};

  auto r1 = run_scenario(scen, opt);
  CHECK(r1.status == 0);
  auto rep1 = report_of(r1)["report"];
  CHECK(!rep1["cache"]["hit"].get<bool>());
  CHECK(fs::exists(dir / "sys.xrtm"));

  auto r2 = run_scenario(scen, opt);
  CHECK(r2.status == 0);
  auto rep2 = report_of(r2)["report"];
  CHECK(rep2["cache"]["hit"].get<bool>());

  // Two cache-hit runs agree byte for byte outside the timing block.
  auto r3 = run_scenario(scen, opt);
  CHECK(report_of(r3)["report"].dump() == rep2.dump());

  // Corrupting the cache surfaces as a runtime failure, not a wrong answer.
  {
    std::fstream io(dir / "sys.xrtm", std::ios::binary | std::ios::in | std::ios::out);
    io.put('Y');
  }
  auto r4 = run_scenario(scen, opt);
  CHECK(r4.status == 3);
  CHECK(!r4.diagnostic.empty());
}

TEST_CASE("santalo scenario matches the constant closed form") {
  auto dir = fresh_dir("santalo");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "santalo", "seed": 0,
    "parameters": {"fan_boundary": 128, "fan_angle": 64}
  })");
  auto r = run_scenario(scen, RunOptions{dir.string(), 0, 1.0});
  CHECK(r.status == 0);
  auto rep = report_of(r)["report"];
  bool saw_lhs = false;
  for (const auto& row : rep["checks"])
    if (row["name"] == "lhs_vs_2pi2") saw_lhs = true;
  CHECK(saw_lhs);
}

TEST_CASE("pestov scenario passes on a small draw budget") {
  auto dir = fresh_dir("pestov");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "pestov", "seed": 5,
    "parameters": {"manifold": "conformal-disc", "draws": 15}
  })");
  auto r = run_scenario(scen, RunOptions{dir.string(), 0, 1.0});
  CHECK(r.status == 0);
  auto rep = report_of(r)["report"];
  CHECK(rep["checks"].size() == 2);  // residual bound + refinement order window
}

TEST_CASE("gauge check scenario runs both fixtures") {
  auto dir = fresh_dir("gauge");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "gauge-check", "seed": 11,
    "parameters": {"draws": 8}
  })");
  auto r = run_scenario(scen, RunOptions{dir.string(), 0, 1.0});
  CHECK(r.status == 0);
  CHECK(report_of(r)["report"]["checks"].size() == 2);
}

TEST_CASE("boundary recover scenario round-trips one coefficient set") {
  auto dir = fresh_dir("boundary");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "boundary-recover", "seed": 3,
    "parameters": {"sets": 1}
  })");
  auto r = run_scenario(scen, RunOptions{dir.string(), 0, 1.0});
  CHECK(r.status == 0);
  REQUIRE(r.csv_paths.size() == 1);
  std::ifstream csv(r.csv_paths[0]);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "set,field,rel_error");
}

TEST_CASE("cgo scan scenario on the flat product") {
  auto dir = fresh_dir("cgo");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "cgo-scan", "seed": 0,
    "parameters": {"grid_n": 6}
  })");
  auto r = run_scenario(scen, RunOptions{dir.string(), 0, 1.0});
  CHECK(r.status == 0);
  auto rep = report_of(r)["report"];
  double slope = rep["slope"].get<double>();
  CHECK(slope > 1.9);
  CHECK(slope < 2.1);
}

TEST_CASE("tolerance scale loosens failing checks") {
  auto dir = fresh_dir("tolscale");
  std::string scen = write_file(dir, "scenario.json", R"({
    "version": 1, "command": "santalo", "seed": 0,
    "parameters": {"fan_boundary": 32, "fan_angle": 16, "max_rel_error": 1e-12}
  })");
  auto strict = run_scenario(scen, RunOptions{(dir / "strict").string(), 0, 1.0});
  CHECK(strict.status == 1);  // report still written
  CHECK(fs::exists(dir / "strict" / "report.json"));
  CHECK(!report_of(strict)["report"]["pass"].get<bool>());

  auto loose = run_scenario(scen, RunOptions{(dir / "loose").string(), 0, 1e12});
  CHECK(loose.status == 0);
}

TEST_CASE("registry manifolds are certified simple") {
  for (const auto& name : manifold_names()) {
    auto M = make_manifold(name);
    auto diag = certify_simple(M, 24, 6, 4);
    INFO(name);
    CHECK(diag.simple);
  }
}
