// strat-lab: run scenario files, list catalog models, validate configs.

#include "stratlab/catalog.hpp"
#include "stratlab/scenario.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace stratlab;

namespace {

void print_report(const RunReport& rep) {
  for (const auto& t : rep.tasks) {
    std::printf("%-24s %-15s %-5s %8.2fs\n", t.name.c_str(), t.type.c_str(), t.status.c_str(), t.seconds);
    for (const auto& m : t.messages) std::printf("    %s\n", m.c_str());
  }
  std::printf("output %s\nresult %s\n", rep.output.string().c_str(), rep.ok() ? "pass" : "fail");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"strat-lab: quantitative stratification experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("strat-lab ") + kVersion);

  std::string config;
  RunOverrides ov;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;
  double tolerance = 0.0;

  auto* run = app.add_subcommand("run", "run every task in a scenario file");
  run->add_option("config", config, "scenario file (YAML)")->required()->check(CLI::ExistingFile);
  auto* o_seed = run->add_option("--seed", seed, "override the scenario seed");
  auto* o_out = run->add_option("--out", out, "output directory");
  auto* o_threads = run->add_option("--threads", threads, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
  auto* o_tol = run->add_option("--tolerance", tolerance, "relative quadrature tolerance")->check(CLI::PositiveNumber);

  auto* list = app.add_subcommand("list-models", "print the model catalog");

  std::string vconfig;
  auto* validate = app.add_subcommand("validate", "parse and check a scenario file without running it");
  validate->add_option("config", vconfig, "scenario file (YAML)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      for (const auto& d : catalog_descriptions())
        std::printf("%-38s %-8s %s\n", d.signature.c_str(), d.kind.c_str(), d.summary.c_str());
      return 0;
    }
    if (*validate) {
      const Scenario sc = load_scenario(vconfig);
      std::printf("ok %s: %zu models, %zu tasks, seed %llu\n", sc.name.c_str(), sc.models.size(),
                  sc.tasks.size(), static_cast<unsigned long long>(sc.seed));
      return 0;
    }
    const Scenario sc = load_scenario(config);
    if (*o_seed) ov.seed = seed;
    if (*o_out) ov.output = out;
    if (*o_threads) ov.threads = threads;
    if (*o_tol) ov.tolerance = tolerance;
    const RunReport rep = run_scenario(sc, ov);
    print_report(rep);
    return rep.ok() ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
