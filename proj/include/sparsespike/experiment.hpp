#pragma once

// Experiment orchestration behind the command-line tool: JSON configuration,
// seeded instance farms, parameter sweeps and CSV output.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sparsespike/analytic.hpp"
#include "sparsespike/graphgen.hpp"
#include "sparsespike/popdyn.hpp"
#include "sparsespike/spectral.hpp"

namespace sparsespike {

enum class Mode { analytic, popdyn, diag, densities, sweep };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

struct ExperimentConfig {
  Mode mode = Mode::analytic;
  nlohmann::json degree;  // {"type": "poisson"|"regular"|"table", ...}
  nlohmann::json weight;  // {"type": "constant"|"rademacher"|"dense_limit"|"table", ...}
  nlohmann::json spike;   // {"type": "gaussian"|"rademacher"|"table", ...}
  std::vector<double> theta{0.0};
  std::vector<double> c;  // empty: use the degree spec as given
  int n = 2000;
  int instances = 10;
  PopDynConfig popdyn;
  LanczosOptions lanczos;
  GraphSampler sampler = GraphSampler::automatic;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  int workers = 1;
  std::size_t density_samples = 1000000;
  std::size_t sample_dump_cap = 10000;
  std::size_t cdf_points = 1000;
  bool warm_start = false;
  bool dump_instances = false;

  /// Configuration as written into output headers (no out_dir or workers,
  /// which do not affect results).
  nlohmann::json header_json() const;
};

/// Parses and validates; errors name the offending field and, for malformed
/// JSON, the line and column.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Ensemble for one c grid value (nullopt: the degree spec as written).
Ensemble build_ensemble(const ExperimentConfig& config, std::optional<double> c);

/// Exit code for an error class: 2 configuration, 3 non-convergence,
/// 4 generation failure, 1 anything else.
int exit_code_for(const std::exception& error);

/// Runs fn(i) for i in [0, count) on `workers` threads. Results are stored by
/// index; the lowest-index exception, if any, is rethrown after all workers join.
template <typename T>
std::vector<T> parallel_map(std::size_t count, int workers, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::size_t next = 0;
  std::mutex lock;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> guard(lock);
        if (next >= count) return;
        i = next++;
      }
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

struct SweepRow {
  double theta = 0.0;
  double c = 0.0;
  int instances = 0;
  double mean_lambda_top = 0.0, std_lambda_top = 0.0, se_lambda_top = 0.0;
  double mean_lambda_second = 0.0, std_lambda_second = 0.0, se_lambda_second = 0.0;
  double mean_overlap = 0.0, se_overlap = 0.0;
  double mean_overlap_signed = 0.0, se_overlap_signed = 0.0;
  double mean_overlap_sq = 0.0, std_overlap_sq = 0.0, se_overlap_sq = 0.0;
  double analytic_lambda_theta = 0.0;  // NaN when absent
  double analytic_lambda_top = 0.0;
  double analytic_overlap_sq = 0.0;
  double theta_crit = 0.0;
  double theta_b = 0.0;  // NaN when absent
  bool flagged = false;  // fewer than 2 instances
};

/// Diagonalisation statistics for every (c, theta) grid point, rows ordered
/// c-major. Instances at equal (c index, instance index) share their graph,
/// weights and spike across theta.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, bool with_analytic);

/// Mode dispatch; writes CSVs into config.out_dir and a summary to `log`.
void run(const ExperimentConfig& config, std::ostream& log);

}  // namespace sparsespike
