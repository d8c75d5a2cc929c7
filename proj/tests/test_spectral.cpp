#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "sparsespike/errors.hpp"
#include "sparsespike/seeding.hpp"
#include "sparsespike/spectral.hpp"

using namespace sparsespike;

namespace {

std::vector<Ensemble> desk_ensembles() {
  return {
      {DegreeModel::regular(3), WeightModel::constant(1.0), SpikeModel::gaussian(1.0)},
      {DegreeModel::truncated_poisson(4.0, 20), WeightModel::constant(1.0), SpikeModel::gaussian(1.0)},
      {DegreeModel::truncated_poisson(3.0, 10), WeightModel::rademacher_scaled(1.0), SpikeModel::rademacher(1.0)},
      {DegreeModel::table({0.1, 0.3, 0.2, 0.4}), WeightModel::custom_table({-1.0, 0.5, 2.0}, {0.3, 0.3, 0.4}),
       SpikeModel::gaussian(2.0)},
      {DegreeModel::regular(5), WeightModel::rademacher_scaled(0.5), SpikeModel::gaussian(1.0)},
  };
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST(TopEigenpair, TwoByTwo) {
  std::vector<Edge> e{{0, 1, 1.0}};
  SpikedMatrix a(SparseSymmetric::from_edges(2, e), {0.0, 0.0}, 0.0);
  auto top = top_eigenpair(a);
  EXPECT_NEAR(top.value, 1.0, 1e-12);
  EXPECT_NEAR(std::fabs(top.vector[0]), 1.0, 1e-9);
  EXPECT_NEAR(top.vector[0], top.vector[1], 1e-9);
}

TEST(SecondEigenvalue, DiagonalTwoByTwo) {
  // spike-only diag(2, 0), then the generic driver on [[2,0],[0,1]]
  SpikedMatrix a(SparseSymmetric::from_edges(2, {}), {std::sqrt(2.0), 0.0}, 2.0);
  auto top = top_eigenpair(a);
  EXPECT_NEAR(top.value, 2.0, 1e-12);
  EXPECT_NEAR(second_eigenvalue(a, top), 0.0, 1e-12);

  const LinearMap diag = [](std::span<const double> v, std::span<double> out) {
    out[0] = 2.0 * v[0];
    out[1] = v[1];
  };
  auto p = largest_eigenpair(2, diag, {});
  EXPECT_NEAR(p.value, 2.0, 1e-12);
  std::vector<std::vector<double>> locked{p.vector};
  EXPECT_NEAR(largest_eigenpair(2, diag, locked).value, 1.0, 1e-12);
}

TEST(TopEigenpair, RegularStructuralValue) {
  const Ensemble ens{DegreeModel::regular(4), WeightModel::constant(1.0), SpikeModel::gaussian(1.0)};
  auto a = generate_instance(ens, 2000, 0.0, instance_seeds(1, 0));
  auto top = top_eigenpair(a);
  EXPECT_NEAR(top.value, 4.0, 1e-8);
  EXPECT_LE(top.residual, 1e-10);
  EXPECT_NEAR(dot(top.vector, top.vector), 2000.0, 2000.0 * 1e-9);
}

TEST(FullSpectrum, ZeroMatrix) {
  SpikedMatrix a(SparseSymmetric::from_edges(5, {}), std::vector<double>(5, 0.0), 0.0);
  for (double ev : full_spectrum(a)) EXPECT_EQ(ev, 0.0);
  EXPECT_EQ(full_spectrum(a).size(), 5u);
}

TEST(FullSpectrum, CapRefused) {
  SpikedMatrix a(SparseSymmetric::from_edges(20, {}), std::vector<double>(20, 0.0), 0.0);
  EXPECT_THROW(full_spectrum(a, 10), CapExceeded);
}

TEST(FullSpectrum, RegularBulkEdges) {
  const Ensemble ens{DegreeModel::regular(4), WeightModel::constant(1.0), SpikeModel::gaussian(1.0)};
  auto a = generate_instance(ens, 2000, 0.0, instance_seeds(2, 0));
  auto ev = full_spectrum(a);
  EXPECT_NEAR(ev.back(), 4.0, 1e-9);
  const double edge = 2.0 * std::sqrt(3.0);
  EXPECT_NEAR(ev[ev.size() - 2], edge, 0.1);
  EXPECT_NEAR(ev.front(), -edge, 0.1);
}

TEST(DenseOracle, DeskScaleAllModels) {
  int checked = 0;
  for (const auto& ens : desk_ensembles()) {
    for (std::uint64_t inst = 0; inst < 6; ++inst) {
      const int n = 20 + static_cast<int>(inst) * 6;
      auto a = generate_instance(ens, n, 1.0 + static_cast<double>(inst), instance_seeds(31, inst));
      auto d = dense_of(a);
      auto ev = oracle::jacobi_eigenvalues(d);
      auto report = eig_report(a);
      EXPECT_NEAR(report.lambda_top, ev.back(), 1e-9);
      EXPECT_NEAR(report.lambda_second, ev[ev.size() - 2], 1e-9);
      auto spec = full_spectrum(a);
      for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_NEAR(spec[i], ev[i], 1e-9);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 30);
}

TEST(Properties, VariationalDominance) {
  const Ensemble ens{DegreeModel::truncated_poisson(4.0, 20), WeightModel::rademacher_scaled(1.0), SpikeModel::gaussian(1.0)};
  auto a = generate_instance(ens, 400, 3.0, instance_seeds(4, 0));
  auto top = top_eigenpair(a);
  Rng rng(5);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> u(400);
    for (double& y : u) y = g(rng);
    const double scale = std::sqrt(400.0 / dot(u, u));
    for (double& y : u) y *= scale;
    EXPECT_LE(dot(u, a.apply(u)) / 400.0, top.value + 1e-8);
  }
}

TEST(Properties, TraceIdentity) {
  for (const auto& ens : desk_ensembles()) {
    auto a = generate_instance(ens, 40, 2.5, instance_seeds(6, 1));
    auto spec = full_spectrum(a);
    const double trace = std::accumulate(spec.begin(), spec.end(), 0.0);
    const double expected = a.theta() * dot(a.spike(), a.spike()) / 40.0;
    EXPECT_NEAR(trace, expected, 1e-6 * std::max(1.0, std::fabs(expected)));
  }
}

TEST(Properties, DeflationOrthogonality) {
  const Ensemble ens{DegreeModel::truncated_poisson(4.0, 20), WeightModel::constant(1.0), SpikeModel::gaussian(1.0)};
  for (double theta : {0.0, 4.0, 6.0}) {
    auto a = generate_instance(ens, 1000, theta, instance_seeds(7, 0));
    auto top = top_eigenpair(a);
    auto second = second_eigenpair(a, top);
    EXPECT_LE(std::fabs(dot(second.vector, top.vector)) / 1000.0, 1e-8);
    EXPECT_LE(second.value, top.value + 1e-12);
    EXPECT_LE(second.residual, 1e-10);
  }
}

TEST(EigReport, Invariants) {
  const Ensemble ens{DegreeModel::regular(4), WeightModel::constant(1.0), SpikeModel::gaussian(1.0)};
  auto a = generate_instance(ens, 2000, 4.0, instance_seeds(8, 0));
  auto r = eig_report(a);
  EXPECT_GE(r.overlap, 0.0);
  EXPECT_GE(r.lambda_top, r.lambda_second);
  EXPECT_NEAR(r.overlap_sq, r.overlap * r.overlap, 1e-15);
  EXPECT_NEAR(dot(r.v_top, r.v_top), 2000.0, 2000.0 * 1e-9);
  EXPECT_LE(r.residual_top, 1e-10);
  EXPECT_NEAR(std::fabs(r.overlap_signed), r.overlap, 1e-15);
  // theta = 4 > theta_crit: the structural value 4 becomes the second eigenvalue
  EXPECT_NEAR(r.lambda_second, 4.0, 0.05);
}

TEST(EmpiricalObservables, ExactAlignment) {
  // A = (theta/N) x x^T has v_top = x when ||x||^2 = N
  const int n = 8;
  std::vector<double> x{1.0, -1.0, 2.0, 0.5, -0.5, 1.5, -1.0, 0.0};
  const double norm2 = dot(x, x);
  for (double& y : x) y *= std::sqrt(n / norm2);
  SpikedMatrix a(SparseSymmetric::from_edges(n, {}), x, 1.0);
  auto r = eig_report(a);
  auto obs = empirical_observables(a, r);
  EXPECT_NEAR(obs.overlap, dot(x, x) / n, 1e-10);
  EXPECT_NEAR(obs.overlap_sq, 1.0, 1e-10);
  ASSERT_EQ(obs.component_samples.size(), static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    EXPECT_NEAR(obs.overlap_component_samples[static_cast<std::size_t>(i)],
                x[static_cast<std::size_t>(i)] * obs.component_samples[static_cast<std::size_t>(i)], 1e-14);
}

TEST(EmpiricalObservables, SubThresholdMeanOverlapVanishes) {
  const Ensemble ens{DegreeModel::regular(4), WeightModel::constant(1.0), SpikeModel::gaussian(1.0)};
  std::vector<double> ov;
  for (std::uint64_t inst = 0; inst < 25; ++inst) {
    auto a = generate_instance(ens, 2000, 0.0, instance_seeds(9, inst));
    ov.push_back(eig_report(a).overlap_signed);
  }
  const double mean = std::accumulate(ov.begin(), ov.end(), 0.0) / 25.0;
  double var = 0.0;
  for (double o : ov) var += (o - mean) * (o - mean);
  var /= 24.0;
  EXPECT_LE(std::fabs(mean), 3.0 * std::sqrt(var / 25.0));
}

TEST(Lanczos, BudgetExhaustion) {
  const Ensemble ens{DegreeModel::truncated_poisson(4.0, 20), WeightModel::rademacher_scaled(1.0), SpikeModel::gaussian(1.0)};
  auto a = generate_instance(ens, 2000, 0.0, instance_seeds(10, 0));
  LanczosOptions opts;
  opts.max_matvecs = 5;
  opts.krylov_dim = 4;
  EXPECT_THROW(top_eigenpair(a, opts), NotConverged);
}
