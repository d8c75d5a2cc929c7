#pragma once

// Semi-analytic predictions: the m(lambda) fixed point, Q(lambda) and its
// derivative, recovery thresholds, the signal eigenvalue and squared overlap,
// with closed forms for random regular graphs and the dense limit.

#include <optional>
#include <string>

#include "sparsespike/ensembles.hpp"
#include "sparsespike/popdyn.hpp"

namespace sparsespike {

struct MSolution {
  double m = 0.0;
  int iterations = 0;
  double residual = 0.0;  // |F(m) - m| at return
};

/// F(m) = << 1/(lambda - (k-1) e_w2 m) >> over r_k.
double m_map(double lambda, const DegreeModel& degree, double e_w2, double m);

/// Stable branch of m = F(m), reached from m0 = 1/lambda by damped iteration
/// (gamma = 0.5) until |dm| < 1e-13, finished by Newton steps. The iteration
/// increases monotonically towards the smallest root; meeting F'(m) >= 1 first
/// means lambda is below the admissible edge (NotConverged).
/// Throws NonPositiveDenominator when a denominator is not positive.
MSolution solve_m(double lambda, const DegreeModel& degree, double e_w2);

/// dm/dlambda by implicit differentiation of m = F(m, lambda).
double m_derivative(double lambda, const DegreeModel& degree, double e_w2, double m);

/// Truncated-Poisson closed form (c/c_bar) m + p_kmax/(lambda - k_max e_w2 m).
/// Throws ConfigError for other degree models.
double q_tilde(double lambda, const DegreeModel& poisson, double e_w2);

/// < 1/(lambda - k e_w2 m) > over p_k for any degree model. Equals q_tilde
/// for truncated Poisson and (lambda - c/omega_bar)^-1 for regular graphs.
double q_mean_field(double lambda, const DegreeModel& degree, double e_w2);

/// d/dlambda of q_mean_field through the implicit m'.
double q_mean_field_derivative(double lambda, const DegreeModel& degree, double e_w2);

/// Population estimate < 1/(lambda - sum_k W^2/omega) > at pop.lambda.
McEstimate q_general(const Population& pop, const Ensemble& ensemble, Rng& rng, std::size_t samples);

/// Smallest lambda at which solve_m succeeds, by geometric backtracking from
/// the Gershgorin bound k_max * zeta followed by bisection (relative 1e-13).
/// The returned point is itself admissible.
double admissible_edge(const DegreeModel& degree, double e_w2, double gershgorin_bound);

/// Root of q_mean_field(lambda) = 1/(theta sigma^2) by bisection (1e-10 in
/// lambda) on [max(edge, floor), k_max zeta + 2 theta sigma^2]. Pass
/// lambda_structural as the floor to restrict to the top-eigenvalue branch.
/// Throws RootNotBracketed when no root lies above the floor.
double lambda_signal(double theta, const Ensemble& ensemble, std::optional<double> floor = std::nullopt);

struct OverlapResult {
  double overlap_sq = 0.0;
  double derivative = 0.0;     // Q'(lambda_theta), implicit
  double fd_derivative = 0.0;  // central difference, step 1e-6 lambda
  double fd_relative_gap = 0.0;
};

/// -1/(sigma^2 theta^2 Q'(lambda_theta)). Throws NotConverged when the
/// implicit and finite-difference derivatives differ by more than 1e-6.
OverlapResult overlap_sq(double theta, const Ensemble& ensemble, double lambda_theta);

/// 1/(sigma^2 Q(lambda_structural)) with the mean-field Q.
double theta_crit(const Ensemble& ensemble, double lambda_structural);

struct AnalyticReport {
  std::string pipeline;  // "regular", "poisson", "table", "dense"
  double theta = 0.0;
  double sigma2 = 0.0;
  double theta_crit = 0.0;
  double lambda_structural = 0.0;
  std::optional<double> lambda_theta;  // signal eigenvalue when it exists
  double lambda_top = 0.0;             // max(lambda_theta, lambda_structural)
  double overlap_sq = 0.0;             // 0 at or below theta_crit
  std::optional<double> theta_b;
  std::optional<double> c_crit;
  std::optional<double> c_b;
  std::optional<double> bulk_edge;
  // diagnostics
  int m_iterations = 0;
  double m_residual = 0.0;
  double fd_relative_gap = 0.0;
};

/// Closed forms for c-regular graphs with W = 1, c > 2.
AnalyticReport rr_report(int c, double sigma2, double theta);

/// Wigner limit: theta_crit = 1/sigma^2, lambda = theta sigma^2 + 1/(theta sigma^2),
/// overlap^2 = sigma^2 - 1/(theta^2 sigma^2).
AnalyticReport dense_limit_report(double theta, double sigma2);

/// Mean-field pipeline for any ensemble given lambda_{theta=0}.
AnalyticReport general_report(double theta, const Ensemble& ensemble, double lambda_structural);

/// lambda_{theta=0}: c w for regular graphs with constant w > 0, the admissible
/// edge for zero-mean weights, otherwise the theta = 0 population dynamics.
double structural_eigenvalue(const Ensemble& ensemble, const PopDynConfig& config, PopStreams& streams);

}  // namespace sparsespike
