#include "sparsespike/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sparsespike/errors.hpp"

namespace sparsespike {

namespace {

struct MapValue {
  double f = 0.0;        // F(m)
  double f_m = 0.0;      // dF/dm
  double f_lambda = 0.0; // dF/dlambda
};

MapValue evaluate_map(double lambda, const DegreeModel& degree, double e_w2, double m) {
  const auto r = degree.degree_corrected();
  MapValue v;
  for (std::size_t k = 1; k < r.size(); ++k) {
    if (r[k] == 0.0) continue;
    const double d = lambda - static_cast<double>(k - 1) * e_w2 * m;
    if (!(d > 0.0))
      throw NonPositiveDenominator("m equation: denominator " + std::to_string(d) + " at lambda = " +
                                   std::to_string(lambda));
    const double inv = 1.0 / d;
    v.f += r[k] * inv;
    v.f_m += r[k] * static_cast<double>(k - 1) * e_w2 * inv * inv;
    v.f_lambda -= r[k] * inv * inv;
  }
  return v;
}

[[noreturn]] void inadmissible(double lambda) {
  throw NotConverged("m equation has no stable root at lambda = " + std::to_string(lambda) +
                     " (below the admissible edge)");
}

double sigma2_of(const Ensemble& ensemble) { return ensemble.spike.variance(); }

double gershgorin(const Ensemble& ensemble) {
  return static_cast<double>(ensemble.degree.k_max()) * ensemble.weight.support_edge();
}

// q_mean_field with +infinity for a vanishing k_max denominator at the edge.
double q_or_infinity(double lambda, const DegreeModel& degree, double e_w2) {
  try {
    return q_mean_field(lambda, degree, e_w2);
  } catch (const NonPositiveDenominator&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

double m_map(double lambda, const DegreeModel& degree, double e_w2, double m) {
  return evaluate_map(lambda, degree, e_w2, m).f;
}

MSolution solve_m(double lambda, const DegreeModel& degree, double e_w2) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw NonPositiveDenominator("m equation: lambda = " + std::to_string(lambda) + " is not positive");
  if (!(e_w2 >= 0.0)) throw ConfigError("m equation: E[W^2] must be non-negative");

  constexpr double gamma = 0.5;
  constexpr int damped_budget = 10000;
  MSolution sol;
  double m = 1.0 / lambda;
  bool settled = false;
  for (int it = 0; it < damped_budget; ++it) {
    const MapValue v = evaluate_map(lambda, degree, e_w2, m);
    ++sol.iterations;
    if (v.f_m >= 1.0 && v.f > m) inadmissible(lambda);
    const double next = m + gamma * (v.f - m);
    const double step = next - m;
    m = next;
    if (std::fabs(step) < 1e-13) {
      settled = true;
      break;
    }
  }

  // Newton on G(m) = F(m) - m. G is convex, so from below the root the steps
  // are monotone and never overshoot.
  for (int it = 0; it < 200; ++it) {
    const MapValue v = evaluate_map(lambda, degree, e_w2, m);
    ++sol.iterations;
    const double g = v.f - m;
    const double slope = v.f_m - 1.0;
    if (slope >= 0.0) {
      if (std::fabs(g) <= 1e-14 * std::max(m, 1e-300)) break;
      inadmissible(lambda);
    }
    const double step = -g / slope;
    m += step;
    if (std::fabs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * std::fabs(m)) {
      settled = true;
      break;
    }
  }
  const MapValue v = evaluate_map(lambda, degree, e_w2, m);
  sol.m = m;
  sol.residual = std::fabs(v.f - m);
  if (!settled && sol.residual > 1e-12 * std::fabs(m))
    throw NotConverged("m equation did not converge at lambda = " + std::to_string(lambda));
  return sol;
}

double m_derivative(double lambda, const DegreeModel& degree, double e_w2, double m) {
  const MapValue v = evaluate_map(lambda, degree, e_w2, m);
  if (!(v.f_m < 1.0)) inadmissible(lambda);
  return v.f_lambda / (1.0 - v.f_m);
}

double q_tilde(double lambda, const DegreeModel& poisson, double e_w2) {
  if (poisson.kind() != DegreeModel::Kind::truncated_poisson)
    throw ConfigError("q_tilde requires a truncated Poisson degree model");
  const double m = solve_m(lambda, poisson, e_w2).m;
  const int k_max = poisson.k_max();
  const double tail_den = lambda - static_cast<double>(k_max) * e_w2 * m;
  if (!(tail_den > 0.0)) throw NonPositiveDenominator("q_tilde: k_max denominator is not positive");
  return poisson.mean() / poisson.c_bar() * m + poisson.p(k_max) / tail_den;
}

double q_mean_field(double lambda, const DegreeModel& degree, double e_w2) {
  const double m = solve_m(lambda, degree, e_w2).m;
  const auto p = degree.probabilities();
  double q = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    const double d = lambda - static_cast<double>(k) * e_w2 * m;
    if (!(d > 0.0)) throw NonPositiveDenominator("Q: denominator " + std::to_string(d) + " at degree " + std::to_string(k));
    q += p[k] / d;
  }
  return q;
}

double q_mean_field_derivative(double lambda, const DegreeModel& degree, double e_w2) {
  const double m = solve_m(lambda, degree, e_w2).m;
  const double dm = m_derivative(lambda, degree, e_w2, m);
  const auto p = degree.probabilities();
  double dq = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    const double kk = static_cast<double>(k);
    const double d = lambda - kk * e_w2 * m;
    if (!(d > 0.0)) throw NonPositiveDenominator("Q': denominator not positive at degree " + std::to_string(k));
    dq -= p[k] * (1.0 - kk * e_w2 * dm) / (d * d);
  }
  return dq;
}

McEstimate q_general(const Population& pop, const Ensemble& ensemble, Rng& rng, std::size_t samples) {
  return resolvent_mean(pop, ensemble, rng, samples);
}

double admissible_edge(const DegreeModel& degree, double e_w2, double gershgorin_bound) {
  auto admissible = [&](double lambda) {
    try {
      solve_m(lambda, degree, e_w2);
      return true;
    } catch (const NonConvergence&) {
      return false;
    }
  };
  double hi = std::max(gershgorin_bound, 1e-300);
  for (int i = 0; !admissible(hi); ++i) {
    if (i >= 200) throw RootNotBracketed("admissible edge: no admissible lambda found");
    hi *= 2.0;
  }
  const double floor = hi * 1e-12;
  double lo = 0.5 * hi;
  while (admissible(lo)) {
    hi = lo;
    if (lo < floor) return hi;
    lo *= 0.5;
  }
  while (hi - lo > 1e-13 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (admissible(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double lambda_signal(double theta, const Ensemble& ensemble, std::optional<double> floor) {
  const double sigma2 = sigma2_of(ensemble);
  if (!(theta > 0.0)) throw RootNotBracketed("lambda_signal: theta must be positive");
  const double target = 1.0 / (theta * sigma2);
  const double e_w2 = ensemble.weight.second_moment();
  const double bound = gershgorin(ensemble);
  double lo = admissible_edge(ensemble.degree, e_w2, bound);
  if (floor && *floor > lo) lo = *floor;
  double hi = std::max(bound + 2.0 * theta * sigma2, lo * (1.0 + 1e-9) + 1e-12);
  for (int i = 0; q_mean_field(hi, ensemble.degree, e_w2) > target; ++i) {
    if (i >= 200) throw RootNotBracketed("lambda_signal: no upper bracket");
    hi *= 2.0;
  }
  if (q_or_infinity(lo, ensemble.degree, e_w2) < target)
    throw RootNotBracketed("lambda_signal: Q(" + std::to_string(lo) + ") < 1/(theta sigma^2) at theta = " +
                           std::to_string(theta) + "; theta is at or below the threshold");
  while (hi - lo > 1e-14 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (q_or_infinity(mid, ensemble.degree, e_w2) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

OverlapResult overlap_sq(double theta, const Ensemble& ensemble, double lambda_theta) {
  const double sigma2 = sigma2_of(ensemble);
  const double e_w2 = ensemble.weight.second_moment();
  OverlapResult r;
  r.derivative = q_mean_field_derivative(lambda_theta, ensemble.degree, e_w2);
  const double h = 1e-6 * lambda_theta;
  r.fd_derivative = (q_mean_field(lambda_theta + h, ensemble.degree, e_w2) -
                     q_mean_field(lambda_theta - h, ensemble.degree, e_w2)) /
                    (2.0 * h);
  r.fd_relative_gap = std::fabs(r.fd_derivative - r.derivative) / std::fabs(r.derivative);
  if (!(r.fd_relative_gap <= 1e-6))
    throw NotConverged("overlap_sq: implicit Q' = " + std::to_string(r.derivative) +
                       " disagrees with finite differences " + std::to_string(r.fd_derivative));
  r.overlap_sq = -1.0 / (sigma2 * theta * theta * r.derivative);
  return r;
}

double theta_crit(const Ensemble& ensemble, double lambda_structural) {
  const double q = q_mean_field(lambda_structural, ensemble.degree, ensemble.weight.second_moment());
  return 1.0 / (sigma2_of(ensemble) * q);
}

AnalyticReport rr_report(int c, double sigma2, double theta) {
  if (c < 2) throw ConfigError("rr_report: c must be >= 2");
  if (!(sigma2 > 0.0)) throw ConfigError("rr_report: sigma_x^2 must be positive");
  if (!(theta >= 0.0)) throw ConfigError("rr_report: theta must be >= 0");
  const double cc = c;
  const double ts = theta * sigma2;
  const double s = std::sqrt(ts * ts + 4.0);
  AnalyticReport r;
  r.pipeline = "regular";
  r.theta = theta;
  r.sigma2 = sigma2;
  r.theta_crit = cc * (cc - 2.0) / (sigma2 * (cc - 1.0));
  r.theta_b = (cc - 2.0) / (sigma2 * std::sqrt(cc - 1.0));
  r.c_crit = (2.0 + ts + s) / 2.0;
  r.c_b = (ts + s) * (ts + s) / 4.0 + 1.0;
  r.lambda_structural = cc;
  r.bulk_edge = 2.0 * std::sqrt(cc - 1.0);
  if (theta > *r.theta_b) r.lambda_theta = (cc * s - (cc - 2.0) * ts) / 2.0;
  if (theta > r.theta_crit) {
    r.lambda_top = *r.lambda_theta;
    r.overlap_sq = cc * theta * sigma2 * sigma2 / (2.0 * s) - (cc - 2.0) * sigma2 / 2.0;
  } else {
    r.lambda_top = cc;
  }
  return r;
}

AnalyticReport dense_limit_report(double theta, double sigma2) {
  if (!(sigma2 > 0.0)) throw ConfigError("dense_limit_report: sigma_x^2 must be positive");
  if (!(theta >= 0.0)) throw ConfigError("dense_limit_report: theta must be >= 0");
  AnalyticReport r;
  r.pipeline = "dense";
  r.theta = theta;
  r.sigma2 = sigma2;
  r.theta_crit = 1.0 / sigma2;
  r.lambda_structural = 2.0;
  r.bulk_edge = 2.0;
  const double ts = theta * sigma2;
  if (theta > r.theta_crit) {
    r.lambda_theta = ts + 1.0 / ts;
    r.lambda_top = *r.lambda_theta;
    r.overlap_sq = sigma2 - 1.0 / (theta * theta * sigma2);
  } else {
    r.lambda_top = 2.0;
  }
  return r;
}

AnalyticReport general_report(double theta, const Ensemble& ensemble, double lambda_structural) {
  AnalyticReport r;
  switch (ensemble.degree.kind()) {
    case DegreeModel::Kind::regular: r.pipeline = "regular"; break;
    case DegreeModel::Kind::truncated_poisson: r.pipeline = "poisson"; break;
    case DegreeModel::Kind::table: r.pipeline = "table"; break;
  }
  r.theta = theta;
  r.sigma2 = sigma2_of(ensemble);
  r.lambda_structural = lambda_structural;
  r.theta_crit = theta_crit(ensemble, lambda_structural);
  const double e_w2 = ensemble.weight.second_moment();
  if (ensemble.degree.kind() == DegreeModel::Kind::regular) {
    const double edge = admissible_edge(ensemble.degree, e_w2, gershgorin(ensemble));
    r.bulk_edge = edge;
    r.theta_b = 1.0 / (r.sigma2 * q_or_infinity(edge, ensemble.degree, e_w2));
  }
  if (theta > 0.0) {
    try {
      r.lambda_theta = lambda_signal(theta, ensemble);
    } catch (const RootNotBracketed&) {
    }
  }
  if (theta > r.theta_crit && r.lambda_theta && *r.lambda_theta > lambda_structural) {
    r.lambda_top = *r.lambda_theta;
    const OverlapResult ov = overlap_sq(theta, ensemble, *r.lambda_theta);
    r.overlap_sq = ov.overlap_sq;
    r.fd_relative_gap = ov.fd_relative_gap;
  } else {
    r.lambda_top = lambda_structural;
  }
  const MSolution ms = solve_m(r.lambda_top, ensemble.degree, e_w2);
  r.m_iterations = ms.iterations;
  r.m_residual = ms.residual;
  return r;
}

double structural_eigenvalue(const Ensemble& ensemble, const PopDynConfig& config, PopStreams& streams) {
  const WeightModel& w = ensemble.weight;
  const double zeta = w.support_edge();
  const bool zero_mean = std::fabs(w.mean()) <= 1e-15 * std::max(zeta, 1e-300);
  const bool constant_positive = w.kind() == WeightModel::Kind::constant && w.mean() > 0.0;
  if (ensemble.degree.kind() == DegreeModel::Kind::regular && constant_positive)
    return static_cast<double>(ensemble.degree.k_max()) * w.mean();
  if (zero_mean || (ensemble.degree.kind() == DegreeModel::Kind::regular && w.kind() == WeightModel::Kind::constant))
    return admissible_edge(ensemble.degree, w.second_moment(), gershgorin(ensemble));
  return solve_structural(ensemble, config, streams).lambda;
}

}  // namespace sparsespike
