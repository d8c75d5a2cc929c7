#pragma once

// Instances of A = C.W + (theta/N) x x^T built from a degree sequence,
// a bond-weight law and a spike law.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sparsespike/ensembles.hpp"

namespace sparsespike {

struct Edge {
  int i;
  int j;
  double w;
};

/// Sparse symmetric matrix J = C.W in compressed-row form with both
/// orientations stored. No self-loops, no duplicate edges, zero diagonal.
class SparseSymmetric {
 public:
  SparseSymmetric() = default;

  /// Builds from undirected edges (any orientation). Throws ConfigError on
  /// self-loops, duplicates or out-of-range endpoints.
  static SparseSymmetric from_edges(int n, std::span<const Edge> edges);

  int size() const { return n_; }
  std::size_t nnz() const { return cols_.size(); }
  std::size_t edge_count() const { return cols_.size() / 2; }
  std::span<const int> degrees() const { return degrees_; }

  std::span<const int> neighbors(int i) const;
  std::span<const double> weights(int i) const;
  /// Stored weight of (i, j), or 0 when absent.
  double weight(int i, int j) const;

  /// Undirected edges with i < j, sorted.
  std::vector<Edge> edges() const;

  /// out = J v.
  void multiply(std::span<const double> v, std::span<double> out) const;
  /// Largest absolute row sum, a Gershgorin bound on the spectral radius.
  double gershgorin_bound() const;

  Eigen::MatrixXd dense() const;

 private:
  friend SparseSymmetric assign_weights(SparseSymmetric graph, const WeightModel& model, Rng& rng);

  int n_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<int> cols_;
  std::vector<double> vals_;
  std::vector<int> degrees_;
};

/// Rank-one spiked operator A = J + (theta/N) x x^T; the spike stays factored.
class SpikedMatrix {
 public:
  SpikedMatrix(SparseSymmetric noise, std::vector<double> spike, double theta);

  int size() const { return noise_.size(); }
  const SparseSymmetric& noise() const { return noise_; }
  std::span<const double> spike() const { return spike_; }
  double theta() const { return theta_; }

  /// out = J v + (theta/N) x <x, v>, O(nnz + N).
  void apply(std::span<const double> v, std::span<double> out) const;
  std::vector<double> apply(std::span<const double> v) const;

  /// Materialised matrix; refused above `cap` rows (dense-oracle paths only).
  Eigen::MatrixXd dense(int cap = 3000) const;

 private:
  SparseSymmetric noise_;
  std::vector<double> spike_;
  double theta_;
};

/// Uniform simple graph with the given degrees by stub matching with full
/// restarts on self-loops or multi-edges. Weights are set to 1.
/// Throws InfeasibleSequence (odd sum, degree >= N) or RestartBudgetExhausted.
SparseSymmetric configuration_model(std::span<const int> degrees, Rng& rng, int max_restarts = 10000);

/// Sequential stub matching that only ever joins admissible stub pairs and
/// restarts when stuck. Near-uniform; used where full-restart rejection has
/// vanishing acceptance (dense degree sequences).
SparseSymmetric sequential_configuration_model(std::span<const int> degrees, Rng& rng, int max_restarts = 1000);

enum class GraphSampler { automatic, rejection, sequential };

/// Estimated probability that one uniform stub pairing is simple,
/// exp(-nu/2 - nu^2/4) with nu = sum k(k-1) / sum k.
double simple_pairing_probability(std::span<const int> degrees);

/// Dispatches to configuration_model or sequential_configuration_model.
/// `automatic` picks rejection unless simple_pairing_probability < 1e-3.
SparseSymmetric sample_graph(std::span<const int> degrees, GraphSampler sampler, Rng& rng, int max_restarts = 10000);

/// One i.i.d. weight draw per undirected edge, mirrored to both orientations.
SparseSymmetric assign_weights(SparseSymmetric graph, const WeightModel& model, Rng& rng);

/// Draws x i.i.d. from the spike law. Throws ConfigError for theta < 0.
SpikedMatrix assemble_spiked(SparseSymmetric noise, const SpikeModel& spike_model, double theta, Rng& rng);

/// (C.W) v + (theta/N) x <x, v>. Throws DimensionMismatch.
std::vector<double> matvec(const SpikedMatrix& a, std::span<const double> v);

/// Per-role seeds for one instance.
struct InstanceSeeds {
  std::uint64_t degrees;
  std::uint64_t graph;
  std::uint64_t weights;
  std::uint64_t spike;
};

InstanceSeeds instance_seeds(std::uint64_t master_seed, std::uint64_t instance_index);

/// Full pipeline: degree sequence, graph, weights, spike.
SpikedMatrix generate_instance(const Ensemble& ensemble, int n, double theta, const InstanceSeeds& seeds,
                               GraphSampler sampler = GraphSampler::automatic);

/// Writes `<prefix>.edges` ("i j w" per line, i < j, 0-indexed) and
/// `<prefix>.spike` (theta, seed, N header lines then one x_i per line).
void write_instance(const std::filesystem::path& prefix, const SpikedMatrix& a, std::uint64_t seed);

struct LoadedInstance {
  SpikedMatrix matrix;
  std::uint64_t seed;
};

LoadedInstance read_instance(const std::filesystem::path& prefix);

}  // namespace sparsespike
