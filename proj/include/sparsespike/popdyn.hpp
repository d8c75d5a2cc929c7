#pragma once

// Population dynamics for the joint law pi(omega, h) of cavity precisions and
// bias fields, with the alpha_1 / alpha_2 rescaling loop that fixes q and
// lambda_theta.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "sparsespike/ensembles.hpp"

namespace sparsespike {

struct PopDynConfig {
  std::size_t population_size = 200000;
  double omega_init_min = 5.0;
  double omega_init_max = 20.0;
  double h_init_min = 0.0;
  double h_init_max = 10.0;
  double q_init = 0.5;
  double lambda_init = 10.0;
  int plateau_window = 20;       // sweeps per comparison window
  double plateau_tol = 1e-3;     // relative moment change
  int max_sweeps = 5000;         // per equilibrate call
  double alpha_tol = 1e-2;
  int max_rescales = 50;
  std::size_t alpha_samples = 1000000;
  double lambda_backoff = 1.5;   // lambda multiplier after a non-positive omega
  bool rescale_h = false;        // scale h together with q (accelerator, off by default)

  // theta = 0 structural eigenvalue search
  int structural_burn_in = 20;        // generations discarded per bracket point
  int structural_generations = 40;    // generations averaged per bracket point
  double structural_tol = 1e-10;      // relative bracket width
  int structural_max_bisections = 60;

  void validate() const;
};

/// Independent streams: structure (degrees, members, weights, slots), spike
/// draws X, and Monte Carlo estimation. Keeping X on its own stream makes the
/// omega dynamics identical whatever the spike law.
struct PopStreams {
  Rng structure;
  Rng spike;
  Rng estimate;

  static PopStreams from_seed(std::uint64_t seed);
};

struct Population {
  std::vector<double> omega;  // all > 0
  std::vector<double> h;
  double q = 0.0;
  double lambda = 0.0;
  double theta = 0.0;
  long long sweep_count = 0;

  std::size_t size() const { return omega.size(); }
};

/// omega ~ U[omega_init_min, omega_init_max], h ~ U[h_init_min, h_init_max].
Population init_population(const PopDynConfig& config, double theta, PopStreams& streams);

/// One replacement: k ~ r_k, k-1 members with replacement, k-1 weights, one X;
/// omega_new = lambda - sum W^2/omega, h_new = sum h W/omega + theta q X.
/// Throws NonPositiveOmega (population unchanged) when omega_new <= 0.
void update_step(Population& pop, const Ensemble& ensemble, PopStreams& streams);

/// `sweeps` times N_p update steps.
void run_sweeps(Population& pop, const Ensemble& ensemble, PopStreams& streams, int sweeps);

struct Moments {
  double mean_omega = 0.0;
  double var_omega = 0.0;
  double mean_h = 0.0;
  double var_h = 0.0;
};

Moments population_moments(const Population& pop);

struct EquilibrationDiagnostics {
  std::vector<Moments> trace;  // one entry per sweep since the last restart
  int sweeps = 0;              // total sweeps including aborted attempts
  int lambda_backoffs = 0;
};

/// Sweeps until mean and variance of omega and h plateau: the means of the
/// last two windows differ by less than plateau_tol (relative) or by less than
/// three standard errors of the window means. On NonPositiveOmega, lambda is
/// multiplied by lambda_backoff and equilibration restarts (when allowed).
EquilibrationDiagnostics equilibrate(Population& pop, const Ensemble& ensemble, const PopDynConfig& config,
                                     PopStreams& streams, bool allow_lambda_backoff = true);

/// True when `trace` ends in a plateau under the rule used by equilibrate.
bool plateau_reached(const std::vector<Moments>& trace, int window, double tol);

struct McEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t samples = 0;
};

/// E[u^2] with u = (sum_k hW/omega + theta q X)/(lambda - sum_k W^2/omega),
/// k ~ p_k. Throws NonPositiveDenominator.
McEstimate alpha1(const Population& pop, const Ensemble& ensemble, Rng& rng, std::size_t samples);

/// theta sigma_x^2 times resolvent_mean; the fixed point has alpha2 = 1.
McEstimate alpha2(const Population& pop, const Ensemble& ensemble, Rng& rng, std::size_t samples);

/// Monte Carlo estimate of < 1/(lambda - sum_k W^2/omega) > with k ~ p_k.
McEstimate resolvent_mean(const Population& pop, const Ensemble& ensemble, Rng& rng, std::size_t samples);

struct WarmStart {
  double lambda;
  double q;
};

struct RescaleRecord {
  int round = 0;
  double q = 0.0;
  double lambda = 0.0;
  McEstimate alpha1;
  McEstimate alpha2;
  int sweeps = 0;
  int lambda_backoffs = 0;
};

struct SolveResult {
  Population population;
  double q = 0.0;
  double lambda = 0.0;
  McEstimate alpha1;
  McEstimate alpha2;
  std::vector<RescaleRecord> trajectory;
  EquilibrationDiagnostics last_equilibration;
};

/// Alternates equilibrate / alpha estimation / rescaling q <- q/sqrt(alpha1),
/// lambda <- alpha2 lambda until both alphas are within alpha_tol of 1.
/// A warm start replaces (q_init, lambda_init). Throws MaxRescalesExceeded.
/// On return h and q are jointly scaled by 1/sqrt(alpha1) (the RDE is linear
/// in them), so the returned population has E[u^2] = 1 up to estimator noise;
/// `alpha1` is the estimate measured at convergence, before that scaling.
SolveResult solve(double theta, const Ensemble& ensemble, const PopDynConfig& config, PopStreams& streams,
                  std::optional<WarmStart> warm_start = std::nullopt);

struct StructuralResult {
  double lambda = 0.0;         // lambda_{theta=0}
  Population population;       // equilibrated at lambda, h normalised so alpha1 = 1
  int bisections = 0;
  double log_growth = 0.0;     // mean log growth of h per generation at lambda
};

/// theta = 0 reduction: lambda_{theta=0} is where the linear h recursion is
/// critical (unit growth per synchronous generation). Bisection on lambda.
StructuralResult solve_structural(const Ensemble& ensemble, const PopDynConfig& config, PopStreams& streams);

/// Text checkpoint: header lines (q, lambda, theta, seed, sweep_count, size)
/// then one "omega h" pair per line, 17 significant digits.
void write_checkpoint(const std::filesystem::path& path, const Population& pop, std::uint64_t seed);

struct Checkpoint {
  Population population;
  std::uint64_t seed = 0;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace sparsespike
