#include "sparsespike/graphgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "sparsespike/errors.hpp"
#include "sparsespike/seeding.hpp"

namespace sparsespike {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

void check_sequence(std::span<const int> degrees) {
  const auto n = static_cast<long long>(degrees.size());
  long long total = 0;
  for (int k : degrees) {
    if (k < 0) throw InfeasibleSequence("negative degree");
    if (k >= n) throw InfeasibleSequence("degree " + std::to_string(k) + " >= N = " + std::to_string(n));
    total += k;
  }
  if (total % 2 != 0) throw InfeasibleSequence("degree sequence has odd sum");
}

std::vector<int> make_stubs(std::span<const int> degrees) {
  std::vector<int> stubs;
  stubs.reserve(static_cast<std::size_t>(std::accumulate(degrees.begin(), degrees.end(), 0LL)));
  for (int v = 0; v < static_cast<int>(degrees.size()); ++v)
    for (int s = 0; s < degrees[static_cast<std::size_t>(v)]; ++s) stubs.push_back(v);
  return stubs;
}

}  // namespace

// ---------------------------------------------------------------------------
// SparseSymmetric

SparseSymmetric SparseSymmetric::from_edges(int n, std::span<const Edge> edges) {
  if (n < 0) throw ConfigError("matrix size must be non-negative");
  std::vector<Edge> sorted;
  sorted.reserve(edges.size());
  for (const Edge& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) throw ConfigError("edge endpoint out of range");
    if (e.i == e.j) throw ConfigError("self-loop at vertex " + std::to_string(e.i));
    sorted.push_back(e.i < e.j ? e : Edge{e.j, e.i, e.w});
  }
  std::sort(sorted.begin(), sorted.end(), [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  for (std::size_t t = 1; t < sorted.size(); ++t)
    if (sorted[t].i == sorted[t - 1].i && sorted[t].j == sorted[t - 1].j)
      throw ConfigError("duplicate edge (" + std::to_string(sorted[t].i) + "," + std::to_string(sorted[t].j) + ")");

  SparseSymmetric m;
  m.n_ = n;
  m.degrees_.assign(static_cast<std::size_t>(n), 0);
  for (const Edge& e : sorted) {
    ++m.degrees_[static_cast<std::size_t>(e.i)];
    ++m.degrees_[static_cast<std::size_t>(e.j)];
  }
  m.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i)
    m.offsets_[static_cast<std::size_t>(i) + 1] = m.offsets_[static_cast<std::size_t>(i)] + static_cast<std::size_t>(m.degrees_[static_cast<std::size_t>(i)]);
  m.cols_.resize(m.offsets_.back());
  m.vals_.resize(m.offsets_.back());
  std::vector<std::size_t> fill(m.offsets_.begin(), m.offsets_.end() - 1);
  // Lower-triangle entries first, then upper: with sorted input every row
  // comes out sorted by column.
  for (const Edge& e : sorted) {
    auto& fj = fill[static_cast<std::size_t>(e.j)];
    m.cols_[fj] = e.i;
    m.vals_[fj++] = e.w;
  }
  for (const Edge& e : sorted) {
    auto& fi = fill[static_cast<std::size_t>(e.i)];
    m.cols_[fi] = e.j;
    m.vals_[fi++] = e.w;
  }
  return m;
}

std::span<const int> SparseSymmetric::neighbors(int i) const {
  const auto b = offsets_[static_cast<std::size_t>(i)];
  return {cols_.data() + b, offsets_[static_cast<std::size_t>(i) + 1] - b};
}

std::span<const double> SparseSymmetric::weights(int i) const {
  const auto b = offsets_[static_cast<std::size_t>(i)];
  return {vals_.data() + b, offsets_[static_cast<std::size_t>(i) + 1] - b};
}

double SparseSymmetric::weight(int i, int j) const {
  auto nb = neighbors(i);
  auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) return 0.0;
  return weights(i)[static_cast<std::size_t>(it - nb.begin())];
}

std::vector<Edge> SparseSymmetric::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count());
  for (int i = 0; i < n_; ++i) {
    auto nb = neighbors(i);
    auto w = weights(i);
    for (std::size_t t = 0; t < nb.size(); ++t)
      if (i < nb[t]) out.push_back({i, nb[t], w[t]});
  }
  return out;
}

void SparseSymmetric::multiply(std::span<const double> v, std::span<double> out) const {
  if (v.size() != static_cast<std::size_t>(n_) || out.size() != static_cast<std::size_t>(n_))
    throw DimensionMismatch("SparseSymmetric::multiply: vector length differs from N");
  for (int i = 0; i < n_; ++i) {
    double acc = 0.0;
    for (auto p = offsets_[static_cast<std::size_t>(i)]; p < offsets_[static_cast<std::size_t>(i) + 1]; ++p)
      acc += vals_[p] * v[static_cast<std::size_t>(cols_[p])];
    out[static_cast<std::size_t>(i)] = acc;
  }
}

double SparseSymmetric::gershgorin_bound() const {
  double bound = 0.0;
  for (int i = 0; i < n_; ++i) {
    double row = 0.0;
    for (double w : weights(i)) row += std::fabs(w);
    bound = std::max(bound, row);
  }
  return bound;
}

Eigen::MatrixXd SparseSymmetric::dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    auto nb = neighbors(i);
    auto w = weights(i);
    for (std::size_t t = 0; t < nb.size(); ++t) d(i, nb[t]) = w[t];
  }
  return d;
}

// ---------------------------------------------------------------------------
// SpikedMatrix

SpikedMatrix::SpikedMatrix(SparseSymmetric noise, std::vector<double> spike, double theta)
    : noise_(std::move(noise)), spike_(std::move(spike)), theta_(theta) {
  if (spike_.size() != static_cast<std::size_t>(noise_.size()))
    throw DimensionMismatch("spike length differs from matrix size");
  if (!(theta_ >= 0.0)) throw ConfigError("theta must be non-negative");
}

void SpikedMatrix::apply(std::span<const double> v, std::span<double> out) const {
  const auto n = static_cast<std::size_t>(size());
  if (v.size() != n || out.size() != n) throw DimensionMismatch("matvec: vector length differs from N");
  noise_.multiply(v, out);
  if (theta_ == 0.0 || n == 0) return;
  double proj = 0.0;
  for (std::size_t i = 0; i < n; ++i) proj += spike_[i] * v[i];
  const double coef = theta_ * proj / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] += coef * spike_[i];
}

std::vector<double> SpikedMatrix::apply(std::span<const double> v) const {
  std::vector<double> out(static_cast<std::size_t>(size()));
  apply(v, out);
  return out;
}

Eigen::MatrixXd SpikedMatrix::dense(int cap) const {
  if (size() > cap) throw CapExceeded("dense materialisation refused: N = " + std::to_string(size()) + " > cap " + std::to_string(cap));
  Eigen::MatrixXd d = noise_.dense();
  const Eigen::Map<const Eigen::VectorXd> x(spike_.data(), size());
  d.noalias() += (theta_ / static_cast<double>(size())) * x * x.transpose();
  return d;
}

// ---------------------------------------------------------------------------
// Generators

SparseSymmetric configuration_model(std::span<const int> degrees, Rng& rng, int max_restarts) {
  check_sequence(degrees);
  const int n = static_cast<int>(degrees.size());
  std::vector<int> stubs = make_stubs(degrees);
  std::vector<Edge> edges(stubs.size() / 2);
  std::vector<std::uint64_t> keys(edges.size());

  for (int attempt = 0; attempt <= max_restarts; ++attempt) {
    std::shuffle(stubs.begin(), stubs.end(), rng);
    bool simple = true;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const int a = stubs[2 * e], b = stubs[2 * e + 1];
      if (a == b) {
        simple = false;
        break;
      }
      edges[e] = {a, b, 1.0};
      keys[e] = edge_key(a, b);
    }
    if (!simple) continue;
    std::sort(keys.begin(), keys.end());
    if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) continue;
    return SparseSymmetric::from_edges(n, edges);
  }
  throw RestartBudgetExhausted("configuration model: no simple pairing after " + std::to_string(max_restarts) + " restarts");
}

SparseSymmetric sequential_configuration_model(std::span<const int> degrees, Rng& rng, int max_restarts) {
  check_sequence(degrees);
  const int n = static_cast<int>(degrees.size());
  const std::vector<int> all_stubs = make_stubs(degrees);

  for (int attempt = 0; attempt <= max_restarts; ++attempt) {
    std::vector<int> stubs = all_stubs;
    std::unordered_set<std::uint64_t> present;
    present.reserve(stubs.size());
    std::vector<Edge> edges;
    edges.reserve(stubs.size() / 2);
    bool stuck = false;
    std::size_t failures = 0;

    while (!stubs.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, stubs.size() - 1);
      const std::size_t ia = pick(rng);
      const std::size_t ib = pick(rng);
      const int a = stubs[ia], b = stubs[ib];
      if (ia != ib && a != b && !present.count(edge_key(a, b))) {
        present.insert(edge_key(a, b));
        edges.push_back({a, b, 1.0});
        // Remove the higher index first so the lower one stays valid.
        const std::size_t hi = std::max(ia, ib), lo = std::min(ia, ib);
        stubs[hi] = stubs.back();
        stubs.pop_back();
        stubs[lo] = stubs.back();
        stubs.pop_back();
        failures = 0;
        continue;
      }
      if (++failures < 64 * stubs.size() + 256) continue;
      // Many consecutive rejections: check exhaustively for an admissible pair.
      bool any = false;
      for (std::size_t s = 0; s < stubs.size() && !any; ++s)
        for (std::size_t t = s + 1; t < stubs.size() && !any; ++t)
          any = stubs[s] != stubs[t] && !present.count(edge_key(stubs[s], stubs[t]));
      if (!any) {
        stuck = true;
        break;
      }
      failures = 0;
    }
    if (!stuck) return SparseSymmetric::from_edges(n, edges);
  }
  throw RestartBudgetExhausted("sequential configuration model: stuck after " + std::to_string(max_restarts) + " restarts");
}

double simple_pairing_probability(std::span<const int> degrees) {
  long double s1 = 0.0L, s2 = 0.0L;
  for (int k : degrees) {
    s1 += k;
    s2 += static_cast<long double>(k) * (k - 1);
  }
  if (s1 == 0.0L) return 1.0;
  const double nu = static_cast<double>(s2 / s1);
  return std::exp(-nu / 2.0 - nu * nu / 4.0);
}

SparseSymmetric sample_graph(std::span<const int> degrees, GraphSampler sampler, Rng& rng, int max_restarts) {
  if (sampler == GraphSampler::automatic)
    sampler = simple_pairing_probability(degrees) < 1e-3 ? GraphSampler::sequential : GraphSampler::rejection;
  if (sampler == GraphSampler::rejection) return configuration_model(degrees, rng, max_restarts);
  return sequential_configuration_model(degrees, rng, std::max(1, max_restarts / 10));
}

SparseSymmetric assign_weights(SparseSymmetric graph, const WeightModel& model, Rng& rng) {
  const int n = graph.size();
  for (int i = 0; i < n; ++i) {
    const auto b = graph.offsets_[static_cast<std::size_t>(i)], e = graph.offsets_[static_cast<std::size_t>(i) + 1];
    for (auto p = b; p < e; ++p) {
      const int j = graph.cols_[p];
      if (j < i) continue;
      const double w = model.sample(rng);
      graph.vals_[p] = w;
      // Mirror into row j.
      const auto jb = graph.offsets_[static_cast<std::size_t>(j)], je = graph.offsets_[static_cast<std::size_t>(j) + 1];
      auto it = std::lower_bound(graph.cols_.begin() + static_cast<std::ptrdiff_t>(jb),
                                 graph.cols_.begin() + static_cast<std::ptrdiff_t>(je), i);
      graph.vals_[static_cast<std::size_t>(it - graph.cols_.begin())] = w;
    }
  }
  return graph;
}

SpikedMatrix assemble_spiked(SparseSymmetric noise, const SpikeModel& spike_model, double theta, Rng& rng) {
  if (!(theta >= 0.0)) throw ConfigError("theta must be non-negative");
  std::vector<double> x(static_cast<std::size_t>(noise.size()));
  for (auto& xi : x) xi = spike_model.sample(rng);
  return SpikedMatrix(std::move(noise), std::move(x), theta);
}

std::vector<double> matvec(const SpikedMatrix& a, std::span<const double> v) { return a.apply(v); }

InstanceSeeds instance_seeds(std::uint64_t master_seed, std::uint64_t instance_index) {
  return {seed_derivation(master_seed, instance_index, "degrees"), seed_derivation(master_seed, instance_index, "graph"),
          seed_derivation(master_seed, instance_index, "weights"), seed_derivation(master_seed, instance_index, "spike")};
}

SpikedMatrix generate_instance(const Ensemble& ensemble, int n, double theta, const InstanceSeeds& seeds,
                               GraphSampler sampler) {
  Rng degree_rng(seeds.degrees), graph_rng(seeds.graph), weight_rng(seeds.weights), spike_rng(seeds.spike);
  const std::vector<int> degrees = sample_degree_sequence(ensemble.degree, n, degree_rng);
  SparseSymmetric graph = sample_graph(degrees, sampler, graph_rng);
  graph = assign_weights(std::move(graph), ensemble.weight, weight_rng);
  return assemble_spiked(std::move(graph), ensemble.spike, theta, spike_rng);
}

// ---------------------------------------------------------------------------
// Instance dump

void write_instance(const std::filesystem::path& prefix, const SpikedMatrix& a, std::uint64_t seed) {
  auto edges_path = prefix;
  edges_path += ".edges";
  auto spike_path = prefix;
  spike_path += ".spike";
  std::ofstream edges(edges_path);
  std::ofstream spike(spike_path);
  if (!edges || !spike) throw ConfigError("cannot open instance dump at " + prefix.string());
  edges << std::setprecision(17);
  for (const Edge& e : a.noise().edges()) edges << e.i << ' ' << e.j << ' ' << e.w << '\n';
  spike << std::setprecision(17);
  spike << "theta " << a.theta() << '\n' << "seed " << seed << '\n' << "N " << a.size() << '\n';
  for (double x : a.spike()) spike << x << '\n';
}

LoadedInstance read_instance(const std::filesystem::path& prefix) {
  auto edges_path = prefix;
  edges_path += ".edges";
  auto spike_path = prefix;
  spike_path += ".spike";
  std::ifstream edges(edges_path);
  std::ifstream spike(spike_path);
  if (!edges || !spike) throw ConfigError("cannot open instance dump at " + prefix.string());

  std::string key;
  double theta = 0.0;
  std::uint64_t seed = 0;
  int n = 0;
  if (!(spike >> key >> theta) || key != "theta" || !(spike >> key >> seed) || key != "seed" || !(spike >> key >> n) ||
      key != "N")
    throw ConfigError("malformed spike file " + spike_path.string());
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& xi : x)
    if (!(spike >> xi)) throw ConfigError("spike file truncated: " + spike_path.string());

  std::vector<Edge> list;
  Edge e{};
  while (edges >> e.i >> e.j >> e.w) list.push_back(e);
  return {SpikedMatrix(SparseSymmetric::from_edges(n, list), std::move(x), theta), seed};
}

}  // namespace sparsespike
