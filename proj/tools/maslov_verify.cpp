// Verification CLI: runs named experiments from a JSON config and writes
// report + CSV artifacts.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "maslov/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Morse / Maslov index verification harness"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "list available experiments");

  auto* run = app.add_subcommand("run", "run one experiment");
  std::string config_path, experiment, out_dir;
  unsigned seed = 0;
  int threads = 0;
  run->add_option("--config", config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--experiment", experiment, "experiment name")->required();
  run->add_option("--out", out_dir, "output directory (overrides config)");
  run->add_option("--seed", seed, "seed for randomized suites");
  run->add_option("--threads", threads, "worker threads (0 = default)");

  CLI11_PARSE(app, argc, argv);

  if (list->parsed()) {
    for (const auto& name : maslov::experiment_names())
      std::cout << name << '\n';
    return 0;
  }

  try {
    if (threads > 0) Eigen::setNbThreads(threads);

    std::ifstream in(config_path);
    maslov::json j = maslov::json::parse(in);
    auto cfg = maslov::ExperimentConfig::from_json(j);
    if (run->count("--seed")) cfg.seed = seed;
    if (!out_dir.empty())
      cfg.out_dir = out_dir;
    else if (const char* env = std::getenv("MASLOV_OUT_DIR"))
      cfg.out_dir = env;

    const auto report = maslov::run_experiment(cfg, experiment);
    maslov::emit_report(report, cfg.out_dir);

    for (const auto& r : report.identities)
      std::cout << (r.ok ? "[ ok ] " : "[FAIL] ") << r.name << " (lhs=" << r.lhs
                << " rhs=" << r.rhs << (r.details.empty() ? "" : " " + r.details)
                << ")\n";
    std::cout << (report.pass ? "PASS" : "FAIL") << " " << experiment
              << "  (Lambda=" << report.chosen_Lambda << ", "
              << report.seconds << "s)\n";
    return report.pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
