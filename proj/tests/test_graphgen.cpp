#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "sparsespike/errors.hpp"
#include "sparsespike/graphgen.hpp"
#include "sparsespike/seeding.hpp"

using namespace sparsespike;

namespace {

void check_simple(const SparseSymmetric& g, const std::vector<int>& degrees) {
  for (int i = 0; i < g.size(); ++i) {
    auto nb = g.neighbors(i);
    EXPECT_EQ(static_cast<int>(nb.size()), degrees[static_cast<std::size_t>(i)]);
    std::set<int> seen(nb.begin(), nb.end());
    EXPECT_EQ(seen.size(), nb.size());
    EXPECT_EQ(seen.count(i), 0u);
    auto w = g.weights(i);
    for (std::size_t t = 0; t < nb.size(); ++t) EXPECT_EQ(g.weight(nb[t], i), w[t]);
  }
}

}  // namespace

TEST(ConfigurationModel, SingleEdge) {
  Rng rng(1);
  std::vector<int> deg{1, 1};
  auto g = configuration_model(deg, rng);
  auto edges = g.edges();
  ASSERT_EQ(edges.size(), 1u);
  EXPECT_EQ(edges[0].i, 0);
  EXPECT_EQ(edges[0].j, 1);
  EXPECT_EQ(edges[0].w, 1.0);
}

TEST(ConfigurationModel, RegularGraph) {
  Rng rng = derived_stream(1, 0, "graph");
  std::vector<int> deg(2000, 4);
  auto g = configuration_model(deg, rng);
  check_simple(g, deg);
  EXPECT_EQ(g.edge_count(), 4000u);
}

TEST(ConfigurationModel, PoissonSequenceReproducedExactly) {
  Rng rng = derived_stream(2, 0, "graph");
  auto deg = sample_degree_sequence(DegreeModel::truncated_poisson(4.0, 20), 2000, rng);
  auto g = configuration_model(deg, rng);
  check_simple(g, deg);
  auto out = g.degrees();
  EXPECT_TRUE(std::equal(out.begin(), out.end(), deg.begin()));
}

TEST(ConfigurationModel, InfeasibleInputs) {
  Rng rng(1);
  std::vector<int> odd{1, 1, 1};
  EXPECT_THROW(configuration_model(odd, rng), InfeasibleSequence);
  std::vector<int> big{3, 1, 1, 1};
  EXPECT_NO_THROW(configuration_model(big, rng));
  std::vector<int> over{4, 2, 1, 1};
  EXPECT_THROW(configuration_model(over, rng), InfeasibleSequence);
}

TEST(ConfigurationModel, RestartBudget) {
  // two vertices of degree 2 can only pair as a multi-edge or self-loops
  Rng rng(1);
  std::vector<int> deg{2, 2};
  EXPECT_THROW(configuration_model(deg, rng, 50), GenerationFailure);
}

TEST(SequentialModel, DenseRegular) {
  Rng rng = derived_stream(3, 0, "graph");
  std::vector<int> deg(400, 60);
  EXPECT_LT(simple_pairing_probability(deg), 1e-3);
  auto g = sample_graph(deg, GraphSampler::automatic, rng);
  check_simple(g, deg);
}

TEST(AssignWeights, ConstantAndRademacher) {
  Rng rng = derived_stream(4, 0, "graph");
  std::vector<int> deg(200, 3);
  auto g = configuration_model(deg, rng);
  auto gc = assign_weights(g, WeightModel::constant(1.0), rng);
  for (const Edge& e : gc.edges()) EXPECT_EQ(e.w, 1.0);
  const double s = 0.3;
  auto gr = assign_weights(g, WeightModel::rademacher_scaled(s), rng);
  int positive = 0;
  for (const Edge& e : gr.edges()) {
    EXPECT_EQ(std::fabs(e.w), s);
    EXPECT_EQ(gr.weight(e.i, e.j), gr.weight(e.j, e.i));
    positive += e.w > 0;
  }
  EXPECT_GT(positive, 0);
  EXPECT_LT(positive, static_cast<int>(gr.edge_count()));
  check_simple(gr, deg);
}

TEST(AssembleSpiked, ThetaZeroIsNoise) {
  Rng rng = derived_stream(5, 0, "graph");
  std::vector<int> deg(50, 3);
  auto g = assign_weights(configuration_model(deg, rng), WeightModel::rademacher_scaled(1.0), rng);
  auto a = assemble_spiked(g, SpikeModel::gaussian(1.0), 0.0, rng);
  std::vector<double> v(50), out(50);
  for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = std::sin(i + 1.0);
  g.multiply(v, out);
  auto av = a.apply(v);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(av[static_cast<std::size_t>(i)], out[static_cast<std::size_t>(i)]);
  EXPECT_THROW(assemble_spiked(g, SpikeModel::gaussian(1.0), -1.0, rng), ConfigError);
}

TEST(AssembleSpiked, RankOneArithmetic) {
  SpikedMatrix a(SparseSymmetric::from_edges(2, {}), {1.0, 1.0}, 2.0);
  auto d = dense_of(a);
  EXPECT_EQ(d[0][0], 1.0);
  EXPECT_EQ(d[0][1], 1.0);
  auto ev = oracle::jacobi_eigenvalues(d);
  EXPECT_NEAR(ev.back(), 2.0, 1e-14);
}

TEST(AssembleSpiked, GaussianNormConcentrates) {
  Rng rng = derived_stream(6, 0, "spike");
  auto a = assemble_spiked(SparseSymmetric::from_edges(2000, {}), SpikeModel::gaussian(1.0), 1.0, rng);
  double s = 0.0;
  for (double x : a.spike()) s += x * x;
  // ||x||^2/N has variance 2/N
  EXPECT_LT(std::fabs(s / 2000.0 - 1.0), 3.0 * std::sqrt(2.0 / 2000.0));
}

TEST(Matvec, ZeroAndProjector) {
  const int n = 6;
  std::vector<double> x(n, 0.0);
  x[0] = 1.0;
  SpikedMatrix a(SparseSymmetric::from_edges(n, {}), x, static_cast<double>(n));
  std::vector<double> zero(n, 0.0);
  for (double y : matvec(a, zero)) EXPECT_EQ(y, 0.0);
  auto out = matvec(a, x);
  for (int i = 0; i < n; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(i)]);
  std::vector<double> wrong(n + 1, 0.0);
  EXPECT_THROW(matvec(a, wrong), DimensionMismatch);
}

TEST(Matvec, MatchesDenseProduct) {
  const Ensemble ens{DegreeModel::truncated_poisson(4.0, 20), WeightModel::custom_table({-1.0, 0.5, 2.0}, {0.3, 0.3, 0.4}),
                     SpikeModel::gaussian(1.0)};
  for (std::uint64_t inst = 0; inst < 10; ++inst) {
    auto a = generate_instance(ens, 50, 3.0, instance_seeds(21, inst));
    auto d = dense_of(a);
    Rng rng(inst);
    std::normal_distribution<double> g;
    std::vector<double> v(50);
    for (double& y : v) y = g(rng);
    auto got = matvec(a, v);
    auto want = oracle::dense_product(d, v);
    for (int i = 0; i < 50; ++i)
      EXPECT_NEAR(got[static_cast<std::size_t>(i)], want[static_cast<std::size_t>(i)], 1e-12);
  }
}

TEST(Matvec, OperatorSymmetry) {
  const Ensemble ens{DegreeModel::truncated_poisson(3.0, 15), WeightModel::rademacher_scaled(1.0), SpikeModel::rademacher(1.0)};
  auto a = generate_instance(ens, 500, 2.0, instance_seeds(3, 0));
  Rng rng(9);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> u(500), v(500);
    for (double& y : u) y = g(rng);
    for (double& y : v) y = g(rng);
    auto au = matvec(a, u), av = matvec(a, v);
    double lhs = 0.0, rhs = 0.0, scale = 0.0;
    for (int i = 0; i < 500; ++i) {
      lhs += u[static_cast<std::size_t>(i)] * av[static_cast<std::size_t>(i)];
      rhs += au[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
      scale += std::fabs(u[static_cast<std::size_t>(i)] * av[static_cast<std::size_t>(i)]);
    }
    EXPECT_LE(std::fabs(lhs - rhs), 1e-10 * scale);
  }
}

TEST(Gershgorin, BoundsNoiseSpectrum) {
  const Ensemble ens{DegreeModel::truncated_poisson(4.0, 20), WeightModel::custom_table({-1.0, 0.5, 2.0}, {0.3, 0.3, 0.4}),
                     SpikeModel::gaussian(1.0)};
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    auto a = generate_instance(ens, 40, 0.0, instance_seeds(8, inst));
    auto ev = oracle::jacobi_eigenvalues(dense_of(a));
    const double bound = a.noise().gershgorin_bound();
    EXPECT_LE(ev.back(), bound + 1e-12);
    EXPECT_GE(ev.front(), -bound - 1e-12);
  }
}

TEST(FromEdges, RejectsInvalid) {
  std::vector<Edge> loop{{0, 0, 1.0}};
  EXPECT_THROW(SparseSymmetric::from_edges(2, loop), ConfigError);
  std::vector<Edge> dup{{0, 1, 1.0}, {1, 0, 1.0}};
  EXPECT_THROW(SparseSymmetric::from_edges(2, dup), ConfigError);
  std::vector<Edge> range{{0, 2, 1.0}};
  EXPECT_THROW(SparseSymmetric::from_edges(2, range), ConfigError);
}

TEST(Instances, DeterministicAndDumpRoundTrip) {
  const Ensemble ens{DegreeModel::truncated_poisson(4.0, 20), WeightModel::rademacher_scaled(0.5), SpikeModel::gaussian(1.0)};
  auto a = generate_instance(ens, 300, 2.5, instance_seeds(17, 4));
  auto b = generate_instance(ens, 300, 2.5, instance_seeds(17, 4));
  auto ea = a.noise().edges(), eb = b.noise().edges();
  ASSERT_EQ(ea.size(), eb.size());
  for (std::size_t t = 0; t < ea.size(); ++t) {
    EXPECT_EQ(ea[t].i, eb[t].i);
    EXPECT_EQ(ea[t].j, eb[t].j);
    EXPECT_EQ(ea[t].w, eb[t].w);
  }
  EXPECT_TRUE(std::equal(a.spike().begin(), a.spike().end(), b.spike().begin()));

  const auto dir = std::filesystem::temp_directory_path() / "sparsespike_dump_test";
  std::filesystem::create_directories(dir);
  write_instance(dir / "inst", a, 17);
  auto loaded = read_instance(dir / "inst");
  EXPECT_EQ(loaded.seed, 17u);
  EXPECT_EQ(loaded.matrix.theta(), 2.5);
  auto el = loaded.matrix.noise().edges();
  ASSERT_EQ(el.size(), ea.size());
  for (std::size_t t = 0; t < ea.size(); ++t) EXPECT_EQ(el[t].w, ea[t].w);
  EXPECT_TRUE(std::equal(a.spike().begin(), a.spike().end(), loaded.matrix.spike().begin()));
  std::filesystem::remove_all(dir);
}

TEST(Instances, SeedsDifferByRole) {
  auto s = instance_seeds(1, 0);
  std::set<std::uint64_t> distinct{s.degrees, s.graph, s.weights, s.spike};
  EXPECT_EQ(distinct.size(), 4u);
}
