// Experiment configuration and the end-to-end command pipeline.
//
// VALIDATES:
//   - strict JSON parsing: unknown keys and bad values throw ConfigError
//     naming the offending key; the echo reproduces every effective value
//   - density builders: bump mass normalization, mollification preserving
//     totals, particlization conserving mass
//   - fit_rotation_rate recovers a synthetic rigid rotation exactly
//   - cmd_run end to end: artifacts exist, the manifest is coherent, and
//     two runs of the same config are byte-identical apart from the
//     timestamp line
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sg/domain.hpp>
#include <sg/dual_flow.hpp>
#include <sg/experiment.hpp>
#include <sg/measure.hpp>
#include <sg/rotating_patch.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Strip the one volatile line (the timestamp) from a manifest.
std::string without_generated_at(const std::string& text) {
  std::string out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.find("generated_at") == std::string::npos) out += line + "\n";
  return out;
}

}  // namespace

TEST_CASE("strict parsing names the offending key") {
  CHECK_THROWS_AS(sg::config_from_json_text(R"({"Tee": 1.0})"), sg::ConfigError);
  try {
    sg::config_from_json_text(R"({"domain": {"radius": 2.0}})");
    FAIL("unknown nested key accepted");
  } catch (const sg::ConfigError& e) {
    CHECK(std::string(e.what()).find("domain.radius") != std::string::npos);
  }
  // Wrong types and invalid values.
  CHECK_THROWS_AS(sg::config_from_json_text(R"({"T": "soon"})"), sg::ConfigError);
  CHECK_THROWS_AS(sg::config_from_json_text(R"({"T": -1.0})"), sg::ConfigError);
  CHECK_THROWS_AS(sg::config_from_json_text(R"({"domain": {"quadrature": 1}})"),
                  sg::ConfigError);
  CHECK_THROWS_AS(sg::config_from_json_text(R"({"initial_measure": {"kind": "plasma"}})"),
                  sg::ConfigError);
  CHECK_THROWS_AS(sg::config_from_json_text(R"({"ot": {"tol": 0.0}})"), sg::ConfigError);

  // A valid config parses and the echo contains the effective values.
  const sg::ExperimentConfig cfg = sg::config_from_json_text(
      R"({"T": 0.25, "domain": {"shape": "disk", "S": 1.5, "quadrature": 64},
          "initial_measure": {"kind": "vortex-patch", "eps": 0.4, "n": 100}})");
  CHECK(cfg.T == 0.25);
  CHECK(cfg.domain.S == 1.5);
  CHECK(cfg.initial.eps == 0.4);
  const std::string echo = sg::config_to_json(cfg);
  CHECK(echo.find("\"S\": 1.5") != std::string::npos);
  CHECK(echo.find("\"eps\": 0.4") != std::string::npos);
  CHECK(echo.find("\"ot\"") != std::string::npos);  // defaults echoed too
}

TEST_CASE("density builders conserve mass through the pipeline") {
  const sg::DualGridDensity bump = sg::bump_density(1.2, 128, {0.4, 0.0}, 0.5);
  CHECK(bump.total() == doctest::Approx(kPi).epsilon(1e-9));

  const sg::DualGridDensity moll = sg::mollify_density(bump, 0.1);
  CHECK(moll.total() == doctest::Approx(bump.total()).epsilon(1e-12));
  CHECK(sg::density_l1(bump, moll) > 0.0);
  // Narrower mollification stays closer in L1.
  const sg::DualGridDensity moll2 = sg::mollify_density(bump, 0.05);
  CHECK(sg::density_l1(bump, moll2) <= sg::density_l1(bump, moll));

  const sg::DiscreteMeasure mu = sg::particlize(bump, 400);
  CHECK(sg::total_mass(mu) == doctest::Approx(bump.total()).epsilon(1e-9));
  // Only bins meeting the bump survive: support area pi/4 out of the 5.76
  // square, so ~55 of the 400 bins carry mass.
  CHECK(mu.size() >= 50);
  CHECK(mu.size() <= 100);
  for (const sg::Vec2& p : mu.positions) {
    CHECK(std::abs(p.x) <= 1.2);
    CHECK(std::abs(p.y) <= 1.2);
  }

  const sg::DualGridDensity patch = sg::patch_density(1.2, 128, {0.4, 0.0}, 0.25);
  CHECK(patch.total() == doctest::Approx(kPi).epsilon(1e-9));
}

TEST_CASE("rotation-rate fit recovers a synthetic rigid rotation") {
  const sg::PhysicalDomain dom = sg::PhysicalDomain::disk(1.0, 64);
  // Build a fake history rotating at rate -2.5 (no dynamics involved).
  const sg::DiscreteMeasure mu = sg::rotating_patch::sample_patch(0.5, 0.0, 128);
  sg::SolveOptions ot;
  ot.tol = 1e-3;
  sg::FlowState state = sg::init_flow(dom, mu, 1.0, ot);
  const sg::FlowSnapshot base = state.history.front();
  const double rate = -2.5;
  for (int k = 1; k <= 6; ++k) {
    sg::FlowSnapshot s = base;
    s.t = 0.1 * k;
    for (std::size_t i = 0; i < s.centroids.size(); ++i)
      s.centroids[i] = sg::rotate(base.centroids[i], rate * s.t);
    state.history.push_back(s);
  }
  CHECK(sg::fit_rotation_rate(dom, state) == doctest::Approx(rate).epsilon(1e-9));
}

TEST_CASE("cmd_run writes coherent, byte-reproducible artifacts") {
  const std::string config_text =
      R"({"T": 0.02, "dt": 0.01, "domain": {"quadrature": 64},
          "initial_measure": {"kind": "vortex-patch", "eps": 0.5, "n": 64},
          "ot": {"tol": 1e-3}, "output": "/tmp/sgflow_test_runA"})";

  sg::ExperimentConfig cfg = sg::config_from_json_text(config_text);
  REQUIRE(sg::cmd_run(cfg) == 0);

  // Expected artifacts exist.
  const std::string mtext = slurp("/tmp/sgflow_test_runA/manifest.json");
  CHECK(mtext.find("\"status\": \"ok\"") != std::string::npos);
  CHECK(mtext.find("\"command\": \"run\"") != std::string::npos);
  CHECK(slurp("/tmp/sgflow_test_runA/trajectories.csv").rfind("t,i,", 0) == 0);
  CHECK(!slurp("/tmp/sgflow_test_runA/invariant_report.json").empty());

  // Second run into another directory: identical bytes modulo timestamp.
  cfg.output = "/tmp/sgflow_test_runB";
  REQUIRE(sg::cmd_run(cfg) == 0);
  CHECK(slurp("/tmp/sgflow_test_runA/trajectories.csv") ==
        slurp("/tmp/sgflow_test_runB/trajectories.csv"));
  CHECK(slurp("/tmp/sgflow_test_runA/invariant_report.json") ==
        slurp("/tmp/sgflow_test_runB/invariant_report.json"));
  const std::string a = without_generated_at(mtext);
  std::string b = without_generated_at(slurp("/tmp/sgflow_test_runB/manifest.json"));
  // The output path itself differs; normalize it before comparing.
  std::string::size_type p;
  while ((p = b.find("sgflow_test_runB")) != std::string::npos)
    b.replace(p, 16, "sgflow_test_runA");
  CHECK(a == b);
}

TEST_CASE("snapshot times must land on the step grid") {
  sg::ExperimentConfig cfg = sg::config_from_json_text(
      R"({"T": 0.1, "dt": 0.04, "domain": {"quadrature": 48},
          "initial_measure": {"kind": "vortex-patch", "eps": 0.5, "n": 16},
          "stability": {"times": [0.05]}})");
  // 0.05 is not a multiple of dt = 0.04: the stability driver must refuse.
  CHECK_THROWS_AS(sg::cmd_stability(cfg), sg::ConfigError);
}
