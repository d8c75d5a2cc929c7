// Command-line driver: sparsespike CONFIG.json [--seed S] [--out-dir DIR] [--workers W] [--mode M]

#include <iostream>

#include <CLI11.hpp>

#include "sparsespike/errors.hpp"
#include "sparsespike/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Spiked sparse random matrices: analytic predictions, population dynamics and diagonalisation"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> workers;
  std::optional<std::string> mode;
  app.add_option("config", config_path, "JSON experiment configuration")->required();
  app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--out-dir", out_dir, "output directory (overrides the config)");
  app.add_option("--workers", workers, "worker threads (results do not depend on this)")->check(CLI::PositiveNumber);
  app.add_option("--mode", mode, "analytic | popdyn | diag | densities | sweep (overrides the config)");
  CLI11_PARSE(app, argc, argv);

  try {
    sparsespike::ExperimentConfig config = sparsespike::load_config(config_path);
    if (seed) config.seed = *seed;
    if (out_dir) config.out_dir = *out_dir;
    if (workers) config.workers = *workers;
    if (mode) config.mode = sparsespike::parse_mode(*mode);
    sparsespike::run(config, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sparsespike::exit_code_for(e);
  }
  return 0;
}
