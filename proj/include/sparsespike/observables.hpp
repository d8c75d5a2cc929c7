#pragma once

// Distributional observables of an equilibrated population: densities of
// top-eigenvector components u and overlap components x u, their per-degree
// decompositions, marginal CDFs of omega and h, and overlap moments.

#include <map>
#include <optional>
#include <vector>

#include "sparsespike/popdyn.hpp"

namespace sparsespike {

struct Histogram {
  std::vector<double> edges;  // size bins + 1
  std::vector<double> mass;   // sums to 1
};

/// Freedman-Diaconis bin width, clamped to [1, max_bins] bins; a degenerate
/// sample gets one bin around its value. `bins` overrides the rule.
Histogram make_histogram(const std::vector<double>& samples, std::optional<int> bins = std::nullopt,
                         int max_bins = 2000);

/// Histogram of `samples` on fixed `edges`; values outside fall in the end bins.
Histogram histogram_on(const std::vector<double>& samples, const std::vector<double>& edges);

struct CdfPoint {
  double x;
  double f;  // fraction of samples <= x
};

/// Empirical CDF at `points` evenly spaced order statistics (all samples when
/// points >= n), monotone from 1/n to 1.
std::vector<CdfPoint> empirical_cdf(std::vector<double> samples, std::size_t points = 1000);

struct DensityEstimate {
  std::vector<double> samples;
  std::vector<int> degrees;  // degree k of each sample
  Histogram histogram;
  std::map<int, Histogram> by_degree;  // conditional histograms on the total edges
  std::vector<CdfPoint> cdf;
  double theta = 0.0;
  double lambda = 0.0;
  double q = 0.0;
};

/// u = (sum_k hW/omega + theta q X)/(lambda - sum_k W^2/omega), k ~ p_k.
DensityEstimate rho_top(const Population& pop, const Ensemble& ensemble, std::size_t n_samples, Rng& rng);

/// u = (X sum_k hW/omega + theta q X^2)/(lambda - sum_k W^2/omega).
DensityEstimate rho_ov(const Population& pop, const Ensemble& ensemble, std::size_t n_samples, Rng& rng);

struct Marginals {
  std::vector<CdfPoint> omega_cdf;
  std::vector<CdfPoint> h_cdf;
  double omega_atom_value = 0.0;  // lambda
  double omega_atom_mass = 0.0;   // fraction of omega exactly equal to lambda
};

Marginals marginals(const Population& pop, std::size_t points = 1000);

struct OverlapMoments {
  double mean = 0.0;
  double mean_std_err = 0.0;
  /// mean^2: the squared overlap <x, v_top>^2/N^2, which self-averages to q^2.
  double squared_overlap = 0.0;
  double squared_overlap_std_err = 0.0;
  /// Raw per-component second moment of the samples. For rho_top this is
  /// E[u^2] = 1; for rho_ov it is E[(X u)^2], not the squared overlap.
  double second_moment = 0.0;
  double second_moment_std_err = 0.0;
};

OverlapMoments overlap_moments(const DensityEstimate& density);
OverlapMoments sample_moments(const std::vector<double>& samples);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_distance(std::vector<double> a, std::vector<double> b);

}  // namespace sparsespike
