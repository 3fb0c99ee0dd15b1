// Command-line driver: every subcommand reads a strict JSON configuration,
// writes its artifacts under the output directory, and exits 0 on success,
// 2 on configuration problems, 3 when a transport solve fails to converge
// (partial artifacts are still written).

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sg/experiment.hpp"
#include "sg/parallel.hpp"

#ifndef SGFLOW_VERSION
#define SGFLOW_VERSION "0.0.0"
#endif

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  long long seed = -1;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Output directory (overrides the config)");
  cmd->add_option("--seed", a.seed, "Sampling seed (overrides the config)");
  cmd->add_option("--threads", a.threads, "Worker threads (0 keeps the default)");
}

sg::ExperimentConfig load(const CommonArgs& a) {
  sg::ExperimentConfig cfg = sg::config_from_file(a.config);
  if (!a.out.empty()) cfg.output = a.out;
  if (a.seed >= 0) cfg.seed = static_cast<unsigned>(a.seed);
  if (a.threads > 0) sg::set_thread_count(a.threads);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Semigeostrophic flow in dual variables: transport-based advection, "
      "physical-flow reconstruction, and diagnostics"};
  app.set_version_flag("--version", SGFLOW_VERSION);
  app.require_subcommand(1);

  CommonArgs a_run, a_stab, a_vortex, a_orlicz, a_shallow, a_dump;
  CLI::App* c_run = app.add_subcommand(
      "run", "Advect the dual measure and reconstruct the physical flow");
  add_common(c_run, a_run);
  CLI::App* c_stab = app.add_subcommand(
      "stability", "Flow gaps for a family of perturbed initial measures");
  add_common(c_stab, a_stab);
  CLI::App* c_vortex = app.add_subcommand(
      "vortex-validate", "Compare simulated runs against the rotating-patch solution");
  add_common(c_vortex, a_vortex);
  CLI::App* c_orlicz = app.add_subcommand(
      "orlicz-demo", "Build a dominating Young function for a density family");
  add_common(c_orlicz, a_orlicz);
  CLI::App* c_shallow = app.add_subcommand(
      "shallow-run", "Height-coupled advection with the consistency fixed point");
  add_common(c_shallow, a_shallow);
  CLI::App* c_dump = app.add_subcommand(
      "dump-potential", "Solve transport at t = 0 and export the potential");
  add_common(c_dump, a_dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_run->parsed()) return sg::cmd_run(load(a_run));
    if (c_stab->parsed()) return sg::cmd_stability(load(a_stab));
    if (c_vortex->parsed()) return sg::cmd_vortex_validate(load(a_vortex));
    if (c_orlicz->parsed()) return sg::cmd_orlicz_demo(load(a_orlicz));
    if (c_shallow->parsed()) return sg::cmd_shallow_run(load(a_shallow));
    if (c_dump->parsed()) return sg::cmd_dump_potential(load(a_dump));
  } catch (const sg::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
