#pragma once

// Randomness sources of the spiked sparse model: degree distributions p_k,
// bond-weight laws rho_W and spike-component laws rho_x.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sparsespike {

using Rng = std::mt19937_64;

/// Bounded-support degree distribution p_k, k = 0..k_max.
///
/// Probability tables are normalised in long double, summing in ascending k.
/// The degree-corrected (size-biased) table r_k = k p_k / <k> is cached.
class DegreeModel {
 public:
  enum class Kind { truncated_poisson, regular, table };

  static DegreeModel truncated_poisson(double c_bar, int k_max);
  static DegreeModel regular(int c);
  static DegreeModel table(std::vector<double> probabilities);

  Kind kind() const { return kind_; }
  /// Poisson parameter c_bar (truncated_poisson only, NaN otherwise).
  double c_bar() const { return c_bar_; }
  /// Normalisation Gamma = sum_{k<=k_max} c_bar^k/k! (truncated_poisson only).
  double gamma() const { return gamma_; }
  int k_max() const { return static_cast<int>(p_.size()) - 1; }

  std::span<const double> probabilities() const { return p_; }
  double p(int k) const;
  double mean() const { return mean_; }
  double second_moment() const { return second_moment_; }

  /// r_k over k = 0..k_max with r_0 = 0. Throws ConfigError when <k> = 0.
  std::span<const double> degree_corrected() const;
  bool has_degree_corrected() const { return !r_.empty(); }

  int sample(Rng& rng) const;
  int sample_degree_corrected(Rng& rng) const;

  std::string describe() const;

 private:
  DegreeModel(Kind kind, std::vector<long double> unnormalised, double c_bar);

  Kind kind_;
  double c_bar_;
  double gamma_ = 0.0;
  std::vector<double> p_;
  std::vector<double> cdf_;
  std::vector<double> r_;
  std::vector<double> r_cdf_;
  double mean_ = 0.0;
  double second_moment_ = 0.0;
};

/// Compactly supported bond-weight law rho_W.
class WeightModel {
 public:
  enum class Kind { constant, rademacher_scaled, custom_table };

  static WeightModel constant(double w);
  /// Symmetric two-point law on {-scale, +scale}.
  static WeightModel rademacher_scaled(double scale);
  static WeightModel custom_table(std::vector<double> values, std::vector<double> probabilities);

  Kind kind() const { return kind_; }
  double mean() const { return mean_; }
  double second_moment() const { return second_moment_; }
  /// zeta: largest absolute support point.
  double support_edge() const { return support_edge_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> probabilities() const { return probs_; }

  double sample(Rng& rng) const;
  std::string describe() const;

 private:
  WeightModel(Kind kind, std::vector<double> values, std::vector<double> probabilities);

  Kind kind_;
  std::vector<double> values_;
  std::vector<double> probs_;
  std::vector<double> cdf_;
  double mean_ = 0.0;
  double second_moment_ = 0.0;
  double support_edge_ = 0.0;
};

/// Centred spike-component law rho_x. Non-centred laws are rejected because
/// every threshold formula in this library assumes E[X] = 0.
class SpikeModel {
 public:
  enum class Kind { gaussian, rademacher, custom };

  static SpikeModel gaussian(double variance);
  /// Two-point law on {-sigma, +sigma}.
  static SpikeModel rademacher(double variance);
  static SpikeModel custom(std::vector<double> values, std::vector<double> probabilities);

  Kind kind() const { return kind_; }
  double variance() const { return variance_; }
  double sample(Rng& rng) const;
  std::string describe() const;

 private:
  SpikeModel(Kind kind, double variance);

  Kind kind_;
  double variance_;
  std::vector<double> values_;
  std::vector<double> cdf_;
};

/// The three laws defining one model instance family.
struct Ensemble {
  DegreeModel degree;
  WeightModel weight;
  SpikeModel spike;
};

/// N i.i.d. degrees from p_k. An odd total is repaired by resampling one
/// uniformly chosen entry until the total is even.
/// Throws InfeasibleSequence when the support cannot produce an even total.
std::vector<int> sample_degree_sequence(const DegreeModel& model, int n, Rng& rng);

}  // namespace sparsespike
