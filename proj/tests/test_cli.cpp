#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "geostab/report.hpp"
#include "geostab/scenario.hpp"

using namespace geostab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("geostab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

}  // namespace

TEST_CASE("number formatting carries 17 significant digits") {
  CHECK(cli::format_g17(1.0 / 3.0) == "0.33333333333333331");
  CHECK(cli::format_g17(2.0) == "2");
  CHECK(cli::format_g17(-0.5) == "-0.5");
}

TEST_CASE("json writer emits valid ordered documents") {
  cli::Json j = cli::Json::object();
  j.set("schema_version", cli::Json::integer(1));
  j.set("empty", cli::Json::array());
  j.set("values", cli::Json::number_array(std::vector<double>{1.0, -1.0}.begin(),
                                          std::vector<double>{1.0, -1.0}.end()));
  std::string text = j.dump();
  auto parsed = nlohmann::json::parse(text);
  CHECK(parsed["schema_version"] == 1);
  CHECK(parsed["empty"].is_array());
  CHECK(parsed["empty"].empty());
  CHECK(parsed["values"][0] == 1.0);
}

TEST_CASE("csv tables carry a header row") {
  cli::CsvTable t({"index", "exponent"});
  t.add_row({0.0, 1.0});
  t.add_row({1.0, -1.0});
  std::string text = t.dump();
  CHECK(text.substr(0, 15) == "index,exponent\n");
  CHECK(text.find("\n1,-1\n") != std::string::npos);
}

TEST_CASE("example scenarios are written and validate cleanly") {
  fs::path dir = fresh_dir("examples");
  REQUIRE(cli::write_example_scenarios(dir.string()) == 0);
  const char* names[] = {"inverted-oscillator.json", "radial-r2.json", "vplus-vminus.json",
                         "sphere-geodesic.json"};
  for (const char* n : names) {
    CAPTURE(n);
    REQUIRE(fs::exists(dir / n));
    CHECK(cli::validate_scenario((dir / n).string()) == 0);
  }
}

TEST_CASE("unknown symbols in the potential are a configuration error") {
  fs::path dir = fresh_dir("badsym");
  spit(dir / "bad.json", R"json({
    "seed": 1,
    "system": {"type": "natural", "dimension": 1, "potential": "x1^2 + q"},
    "analysis": [{"type": "simulate", "initial": [0.1, 0.0], "t_span": [0.0, 1.0]}],
    "output": {"directory": "unused", "prefix": "bad"}
  })json");
  CHECK(cli::validate_scenario((dir / "bad.json").string()) == 2);
  CHECK(cli::run_scenario((dir / "bad.json").string(), (dir / "out").string()) == 2);
}

TEST_CASE("missing files and malformed json exit with a config error") {
  CHECK(cli::run_scenario("/nonexistent/scenario.json") == 2);
  fs::path dir = fresh_dir("malformed");
  spit(dir / "broken.json", "{ not json");
  CHECK(cli::run_scenario((dir / "broken.json").string()) == 2);
}

TEST_CASE("a flow scenario runs end to end") {
  fs::path dir = fresh_dir("flowrun");
  spit(dir / "s.json", R"json({
    "seed": 7,
    "system": {"type": "flow", "dimension": 2,
               "components": ["x2", "-sin(x1)"]},
    "analysis": [
      {"type": "simulate", "initial": [2.0, 0.0], "t_span": [0.0, 3.0], "samples": 31},
      {"type": "spectrum", "initial": [2.0, 0.0], "frame": "random", "horizon": 20.0,
       "renorm_dt": 0.5, "seminorm": {"type": "euclidean"}}
    ],
    "output": {"directory": "PLACEHOLDER", "prefix": "pend", "formats": ["json", "csv"]}
  })json");
  fs::path out = dir / "out";
  REQUIRE(cli::run_scenario((dir / "s.json").string(), out.string()) == 0);
  REQUIRE(fs::exists(out / "pend_summary.json"));
  REQUIRE(fs::exists(out / "pend_00_trajectory.csv"));
  REQUIRE(fs::exists(out / "pend_00_simulate.json"));
  REQUIRE(fs::exists(out / "pend_01_spectrum.json"));

  auto summary = nlohmann::json::parse(slurp(out / "pend_summary.json"));
  CHECK(summary["schema_version"] == 1);
  for (const auto& entry : summary["analyses"]) CHECK(entry["status"] == "ok");

  // the pendulum trajectory CSV has a header and 31 rows
  std::string csv = slurp(out / "pend_00_trajectory.csv");
  CHECK(csv.substr(0, 8) == "t,x1,x2\n");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 32);
}

TEST_CASE("lagrangian systems, rk4, and a single analysis object") {
  fs::path dir = fresh_dir("lagrangian");
  spit(dir / "s.json", R"json({
    "seed": 2,
    "system": {"type": "lagrangian", "dimension": 1,
               "parameters": {"mu": 1.0},
               "L": "0.5*(u1^2 + mu^2*x1^2)"},
    "analysis": {"type": "simulate", "initial": [1.0, 1.0], "t_span": [0.0, 1.0],
                 "samples": 11, "method": "rk4", "step": 0.001},
    "output": {"directory": "unused", "prefix": "lg"}
  })json");
  fs::path out = dir / "out";
  REQUIRE(cli::run_scenario((dir / "s.json").string(), out.string()) == 0);
  auto rep = nlohmann::json::parse(slurp(out / "lg_00_simulate.json"));
  // x(1) = e for the (1,1) start of the inverted oscillator
  CHECK(std::abs(rep["final_state"][0].get<double>() - std::exp(1.0)) < 1e-6);
}

TEST_CASE("vertical-lift seminorm with an explicit configuration metric") {
  fs::path dir = fresh_dir("vlift");
  spit(dir / "s.json", R"json({
    "seed": 2,
    "system": {"type": "flow", "dimension": 1, "second_order": true,
               "accelerations": ["x1"]},
    "analysis": {"type": "lyapunov", "initial": [1.0, 1.0], "perturbation": [1.0, 0.7],
                 "horizon": 30.0,
                 "seminorm": {"type": "vertical-lift", "metric": [["1"]]}},
    "output": {"directory": "unused", "prefix": "vl"}
  })json");
  fs::path out = dir / "out";
  REQUIRE(cli::run_scenario((dir / "s.json").string(), out.string()) == 0);
  auto rep = nlohmann::json::parse(slurp(out / "vl_00_lyapunov.json"));
  CHECK(std::abs(rep["exponent"]["value"].get<double>() - 1.0) < 0.05);
  CHECK(rep["verdict"] == "unstable");
}

TEST_CASE("numerical failures exit with code 3 and write an error object") {
  fs::path dir = fresh_dir("numfail");
  spit(dir / "s.json", R"json({
    "seed": 1,
    "system": {"type": "flow", "dimension": 1, "components": ["x1^2"]},
    "analysis": [{"type": "simulate", "initial": [1.0], "t_span": [0.0, 2.0], "samples": 11}],
    "output": {"directory": "PLACEHOLDER", "prefix": "blow"}
  })json");
  fs::path out = dir / "out";
  CHECK(cli::run_scenario((dir / "s.json").string(), out.string()) == 3);
  REQUIRE(fs::exists(out / "blow_00_simulate_error.json"));
  auto err = nlohmann::json::parse(slurp(out / "blow_00_simulate_error.json"));
  CHECK(err.contains("error"));
  CHECK(err["error"].contains("kind"));
}

TEST_CASE("thread fan-out respects GEOSTAB_THREADS and stays deterministic") {
  fs::path dir = fresh_dir("threads");
  spit(dir / "s.json", R"json({
    "seed": 3,
    "system": {"type": "natural", "dimension": 1, "potential": "0.5*x1^2"},
    "analysis": [
      {"type": "simulate", "initial": [1.0, 0.0], "t_span": [0.0, 6.0], "samples": 61},
      {"type": "lyapunov", "initial": [1.0, 0.0], "horizon": 30.0,
       "seminorm": {"type": "euclidean"}},
      {"type": "local-stability", "initial": [1.0, 0.0], "t_span": [0.0, 2.0], "samples": 11},
      {"type": "spectrum", "initial": [1.0, 0.0], "frame": "full", "horizon": 30.0}
    ],
    "output": {"directory": "unused", "prefix": "hm"}
  })json");
  setenv("GEOSTAB_THREADS", "4", 1);
  fs::path a = dir / "a";
  REQUIRE(cli::run_scenario((dir / "s.json").string(), a.string()) == 0);
  setenv("GEOSTAB_THREADS", "1", 1);
  fs::path b = dir / "b";
  REQUIRE(cli::run_scenario((dir / "s.json").string(), b.string()) == 0);
  unsetenv("GEOSTAB_THREADS");
  for (const auto& entry : fs::directory_iterator(a)) {
    fs::path twin = b / entry.path().filename();
    REQUIRE(fs::exists(twin));
    CHECK(slurp(entry.path()) == slurp(twin));
  }
}

TEST_CASE("identical scenarios produce byte-identical outputs") {
  fs::path dir = fresh_dir("determinism");
  REQUIRE(cli::write_example_scenarios(dir.string()) == 0);
  fs::path a = dir / "a", b = dir / "b";
  REQUIRE(cli::run_scenario((dir / "inverted-oscillator.json").string(), a.string()) == 0);
  REQUIRE(cli::run_scenario((dir / "inverted-oscillator.json").string(), b.string()) == 0);
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    fs::path twin = b / entry.path().filename();
    REQUIRE(fs::exists(twin));
    CHECK(slurp(entry.path()) == slurp(twin));
    ++compared;
  }
  CHECK(compared > 0);
}
