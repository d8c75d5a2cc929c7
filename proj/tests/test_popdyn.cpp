#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sparsespike/errors.hpp"
#include "sparsespike/popdyn.hpp"

using namespace sparsespike;

namespace {

Ensemble rr(int c, double sigma2 = 1.0) {
  return {DegreeModel::regular(c), WeightModel::constant(1.0), SpikeModel::gaussian(sigma2)};
}

Ensemble poisson4() {
  return {DegreeModel::truncated_poisson(4.0, 20), WeightModel::constant(1.0), SpikeModel::gaussian(1.0)};
}

Population uniform_population(std::size_t n, double omega, double lambda, double theta, double q) {
  Population p;
  p.omega.assign(n, omega);
  p.h.assign(n, 0.0);
  p.lambda = lambda;
  p.theta = theta;
  p.q = q;
  return p;
}

// Closed-form RR top eigenpair at sigma^2 = 1: omega_bar from the Kesten-McKay
// branch, h Gaussian with variance theta^2 q^2 / (1 - (c-1)/omega_bar^2).
Population rr_solved_population(int c, double theta, std::size_t n, Rng& rng) {
  const double lambda = oracle::rr_lambda(c, 1.0, theta);
  const double q = std::sqrt(oracle::rr_overlap_sq(c, 1.0, theta));
  const double omega = 1.0 / oracle::kesten_mckay_inverse_omega(lambda, c);
  const double var_h = theta * theta * q * q / (1.0 - (c - 1.0) / (omega * omega));
  Population p = uniform_population(n, omega, lambda, theta, q);
  std::normal_distribution<double> g(0.0, std::sqrt(var_h));
  for (double& h : p.h) h = g(rng);
  return p;
}

}  // namespace

TEST(InitPopulation, RangesAndDefaults) {
  PopDynConfig cfg;
  cfg.population_size = 10;
  auto streams = PopStreams::from_seed(1);
  auto pop = init_population(cfg, 2.0, streams);
  ASSERT_EQ(pop.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_GE(pop.omega[i], 5.0);
    EXPECT_LE(pop.omega[i], 20.0);
    EXPECT_GE(pop.h[i], 0.0);
    EXPECT_LE(pop.h[i], 10.0);
  }
  EXPECT_EQ(pop.q, 0.5);
  EXPECT_EQ(pop.lambda, 10.0);
  EXPECT_EQ(pop.theta, 2.0);
}

TEST(InitPopulation, Deterministic) {
  PopDynConfig cfg;
  cfg.population_size = 1000;
  auto s1 = PopStreams::from_seed(42), s2 = PopStreams::from_seed(42), s3 = PopStreams::from_seed(43);
  auto a = init_population(cfg, 1.0, s1), b = init_population(cfg, 1.0, s2), c = init_population(cfg, 1.0, s3);
  EXPECT_EQ(a.omega, b.omega);
  EXPECT_EQ(a.h, b.h);
  EXPECT_NE(a.omega, c.omega);
}

TEST(PopDynConfig, Validation) {
  PopDynConfig cfg;
  cfg.population_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PopDynConfig{};
  cfg.omega_init_min = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PopDynConfig{};
  cfg.lambda_backoff = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(PopDynConfig{}.validate());
}

TEST(UpdateStep, RegularFixedPointExample) {
  auto ens = rr(4);
  auto streams = PopStreams::from_seed(3);
  Population pop = uniform_population(10, 3.0, 4.0, 0.0, 0.5);
  for (std::size_t i = 0; i < 10; ++i) pop.h[i] = static_cast<double>(i * i) + 0.25;
  const Population before = pop;
  update_step(pop, ens, streams);
  std::size_t changed = 10;
  for (std::size_t i = 0; i < 10; ++i)
    if (pop.h[i] != before.h[i]) changed = i;
  // omega_new = 4 - 3 * (1/3) = 3
  for (double w : pop.omega) EXPECT_NEAR(w, 3.0, 1e-15);
  ASSERT_LT(changed, 10u);
  // h_new must be a sum of three members (with replacement) divided by 3
  bool found = false;
  for (std::size_t a = 0; a < 10 && !found; ++a)
    for (std::size_t b = a; b < 10 && !found; ++b)
      for (std::size_t c = b; c < 10 && !found; ++c)
        found = std::fabs(pop.h[changed] - (before.h[a] + before.h[b] + before.h[c]) / 3.0) < 1e-12;
  EXPECT_TRUE(found);
}

TEST(UpdateStep, DegreeOneGivesLambdaExactly) {
  const Ensemble ens{DegreeModel::table({0.0, 1.0}), WeightModel::constant(1.0), SpikeModel::rademacher(1.0)};
  auto streams = PopStreams::from_seed(4);
  Population pop = uniform_population(50, 7.0, 2.75, 2.0, 0.5);
  run_sweeps(pop, ens, streams, 3);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (pop.omega[i] == 7.0) continue;
    EXPECT_EQ(pop.omega[i], 2.75);
    EXPECT_EQ(std::fabs(pop.h[i]), 1.0);  // theta q X with X = +-1
  }
}

TEST(UpdateStep, NonPositiveOmegaLeavesPopulationUnchanged) {
  auto ens = rr(4);
  auto streams = PopStreams::from_seed(5);
  Population pop = uniform_population(20, 1.0, 0.5, 0.0, 0.5);
  const Population before = pop;
  EXPECT_THROW(update_step(pop, ens, streams), NonPositiveOmega);
  EXPECT_EQ(pop.omega, before.omega);
  EXPECT_EQ(pop.h, before.h);
}

TEST(UpdateStep, ThetaZeroDecouplesFromSpike) {
  const Ensemble gauss{DegreeModel::truncated_poisson(4.0, 20), WeightModel::rademacher_scaled(1.0), SpikeModel::gaussian(1.0)};
  const Ensemble rad{DegreeModel::truncated_poisson(4.0, 20), WeightModel::rademacher_scaled(1.0), SpikeModel::rademacher(3.0)};
  PopDynConfig cfg;
  cfg.population_size = 2000;
  auto s1 = PopStreams::from_seed(6), s2 = PopStreams::from_seed(6), s3 = PopStreams::from_seed(6);
  auto a = init_population(cfg, 0.0, s1);
  auto b = init_population(cfg, 0.0, s2);
  auto c = init_population(cfg, 3.0, s3);
  a.lambda = b.lambda = c.lambda = 30.0;
  run_sweeps(a, gauss, s1, 5);
  run_sweeps(b, rad, s2, 5);
  run_sweeps(c, gauss, s3, 5);
  EXPECT_EQ(a.omega, b.omega);
  EXPECT_EQ(a.h, b.h);
  // the omega dynamics never sees X, whatever theta is
  EXPECT_EQ(a.omega, c.omega);
  EXPECT_NE(a.h, c.h);
}

TEST(Equilibrate, RegularCollapsesToKestenMcKay) {
  auto ens = rr(4);
  PopDynConfig cfg;
  cfg.population_size = 5000;
  for (double lambda : {4.0, 4.5, 6.0}) {
    auto streams = PopStreams::from_seed(7);
    auto pop = init_population(cfg, 0.0, streams);
    pop.lambda = lambda;
    run_sweeps(pop, ens, streams, 80);
    const double want = 1.0 / oracle::kesten_mckay_inverse_omega(lambda, 4);
    for (double w : pop.omega) ASSERT_NEAR(w, want, 1e-6);
  }
}

TEST(Equilibrate, PlateauOnRegular) {
  auto ens = rr(4);
  PopDynConfig cfg;
  cfg.population_size = 5000;
  auto streams = PopStreams::from_seed(8);
  auto pop = init_population(cfg, 0.0, streams);
  pop.lambda = 4.0;
  auto diag = equilibrate(pop, ens, cfg, streams);
  EXPECT_TRUE(plateau_reached(diag.trace, cfg.plateau_window, cfg.plateau_tol));
  auto m = population_moments(pop);
  EXPECT_NEAR(m.mean_omega, 3.0, 1e-3);
  EXPECT_LT(m.var_omega, 1e-4);
}

TEST(Equilibrate, LambdaBackoffOnNonPositiveOmega) {
  auto ens = poisson4();
  PopDynConfig cfg;
  cfg.population_size = 2000;
  auto streams = PopStreams::from_seed(9);
  auto pop = init_population(cfg, 0.0, streams);
  pop.lambda = 0.5;
  auto diag = equilibrate(pop, ens, cfg, streams);
  EXPECT_GT(diag.lambda_backoffs, 0);
  EXPECT_NEAR(pop.lambda, 0.5 * std::pow(1.5, diag.lambda_backoffs), 1e-12);
  for (double w : pop.omega) EXPECT_GT(w, 0.0);

  auto strict = init_population(cfg, 0.0, streams);
  strict.lambda = 0.5;
  EXPECT_THROW(equilibrate(strict, ens, cfg, streams, false), NonPositiveOmega);
}

TEST(Plateau, SyntheticTraces) {
  std::vector<Moments> flat(40, Moments{3.0, 0.1, 1.0, 2.0});
  EXPECT_TRUE(plateau_reached(flat, 20, 1e-3));
  EXPECT_FALSE(plateau_reached(std::vector<Moments>(flat.begin(), flat.begin() + 39), 20, 1e-3));
  std::vector<Moments> drift;
  for (int i = 0; i < 40; ++i) drift.push_back(Moments{3.0 + 0.1 * i, 0.1, 1.0, 2.0});
  EXPECT_FALSE(plateau_reached(drift, 20, 1e-3));
}

TEST(Population, DegreeOneAtomHasMassR1) {
  auto ens = poisson4();
  PopDynConfig cfg;
  cfg.population_size = 100000;
  auto streams = PopStreams::from_seed(10);
  auto pop = init_population(cfg, 6.0, streams);
  pop.lambda = 6.7;
  pop.q = 0.94;
  run_sweeps(pop, ens, streams, 40);
  const double count = static_cast<double>(std::count(pop.omega.begin(), pop.omega.end(), pop.lambda));
  const double n = static_cast<double>(pop.size());
  const double r1 = ens.degree.degree_corrected()[1];
  EXPECT_LE(std::fabs(count / n - r1), 3.0 * std::sqrt(r1 * (1.0 - r1) / n));
}

TEST(Alpha, RegularClosedFormSolutionIsFixedPoint) {
  auto ens = rr(4);
  Rng rng(11);
  auto pop = rr_solved_population(4, 4.0, 200000, rng);
  Rng est(12);
  auto a1 = alpha1(pop, ens, est, 1000000);
  EXPECT_LE(std::fabs(a1.mean - 1.0), 3.0 * a1.std_err);
  auto a2 = alpha2(pop, ens, est, 100000);
  // all omega equal: the resolvent is deterministic
  EXPECT_NEAR(a2.mean, 1.0, 1e-12);
}

TEST(Alpha, MonotoneAndLinear) {
  auto ens = rr(4);
  Rng rng(13);
  auto pop = rr_solved_population(4, 4.0, 50000, rng);
  auto inflated = pop;
  inflated.lambda *= 2.0;
  Rng e1(14);
  EXPECT_LT(alpha1(inflated, ens, e1, 200000).mean, 0.5);

  auto doubled = pop;
  doubled.theta *= 2.0;
  Rng e2(15), e3(15);
  const double base = alpha2(pop, ens, e2, 100000).mean;
  EXPECT_NEAR(alpha2(doubled, ens, e3, 100000).mean, 2.0 * base, 1e-12);

  auto huge = pop;
  huge.lambda = 1e9;
  Rng e4(16);
  EXPECT_LT(alpha2(huge, ens, e4, 1000).mean, 1e-8);
  Rng e5(17);
  EXPECT_NEAR(resolvent_mean(huge, ens, e5, 1000).mean, 1e-9, 1e-16);
}

TEST(Alpha, NonPositiveDenominatorThrows) {
  auto ens = rr(4);
  auto pop = uniform_population(100, 1.0, 3.0, 1.0, 0.5);
  Rng rng(18);
  EXPECT_THROW(alpha1(pop, ens, rng, 10), NonPositiveDenominator);
  EXPECT_THROW(resolvent_mean(pop, ens, rng, 10), NonPositiveDenominator);
}

TEST(Solve, RegularWarmStart) {
  auto ens = rr(4);
  PopDynConfig cfg;
  cfg.population_size = 50000;
  cfg.alpha_samples = 400000;
  auto streams = PopStreams::from_seed(19);
  auto res = solve(4.0, ens, cfg, streams, WarmStart{5.0, 0.9});
  const double lambda = 4.0 * std::sqrt(5.0) - 4.0;
  EXPECT_NEAR(res.lambda, lambda, 0.005 * lambda);
  EXPECT_NEAR(res.q, std::sqrt(4.0 / std::sqrt(5.0) - 1.0), 0.01 * 0.8882);
  EXPECT_LE(std::fabs(res.alpha1.mean - 1.0), cfg.alpha_tol);
  EXPECT_LE(std::fabs(res.alpha2.mean - 1.0), cfg.alpha_tol);
  EXPECT_FALSE(res.trajectory.empty());
}

TEST(Solve, DeterministicReplay) {
  auto ens = poisson4();
  PopDynConfig cfg;
  cfg.population_size = 10000;
  cfg.alpha_samples = 50000;
  cfg.alpha_tol = 3e-2;
  auto s1 = PopStreams::from_seed(20), s2 = PopStreams::from_seed(20);
  auto a = solve(6.0, ens, cfg, s1, WarmStart{6.7, 0.9});
  auto b = solve(6.0, ens, cfg, s2, WarmStart{6.7, 0.9});
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.q, b.q);
  EXPECT_EQ(a.population.omega, b.population.omega);
  EXPECT_EQ(a.population.h, b.population.h);
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    EXPECT_EQ(a.trajectory[i].alpha1.mean, b.trajectory[i].alpha1.mean);
    EXPECT_EQ(a.trajectory[i].alpha2.mean, b.trajectory[i].alpha2.mean);
  }
}

TEST(Solve, RescaleBudget) {
  auto ens = poisson4();
  PopDynConfig cfg;
  cfg.population_size = 2000;
  cfg.alpha_samples = 10000;
  cfg.max_rescales = 1;
  auto streams = PopStreams::from_seed(21);
  EXPECT_THROW(solve(6.0, ens, cfg, streams), MaxRescalesExceeded);
  EXPECT_THROW(solve(0.0, ens, cfg, streams), ConfigError);
}

TEST(Structural, RegularGivesC) {
  auto ens = rr(4);
  PopDynConfig cfg;
  cfg.population_size = 5000;
  auto streams = PopStreams::from_seed(22);
  auto res = solve_structural(ens, cfg, streams);
  EXPECT_NEAR(res.lambda, 4.0, 1e-6);
  for (double w : res.population.omega) EXPECT_NEAR(w, 3.0, 1e-5);
}

TEST(Checkpoint, RoundTrip) {
  auto ens = poisson4();
  PopDynConfig cfg;
  cfg.population_size = 500;
  auto streams = PopStreams::from_seed(23);
  auto pop = init_population(cfg, 6.0, streams);
  pop.lambda = 7.0;
  run_sweeps(pop, ens, streams, 3);
  const auto path = std::filesystem::temp_directory_path() / "sparsespike_checkpoint_test.pop";
  write_checkpoint(path, pop, 23);
  auto back = read_checkpoint(path);
  EXPECT_EQ(back.seed, 23u);
  EXPECT_EQ(back.population.omega, pop.omega);
  EXPECT_EQ(back.population.h, pop.h);
  EXPECT_EQ(back.population.q, pop.q);
  EXPECT_EQ(back.population.lambda, pop.lambda);
  EXPECT_EQ(back.population.theta, pop.theta);
  EXPECT_EQ(back.population.sweep_count, pop.sweep_count);
  std::filesystem::remove(path);
}
