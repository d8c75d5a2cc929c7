#include "sparsespike/popdyn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "sparsespike/errors.hpp"
#include "sparsespike/seeding.hpp"

namespace sparsespike {

namespace {

std::size_t pick(std::size_t n, Rng& rng) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

struct Cavity {
  double sum_w2 = 0.0;  // sum W^2/omega
  double sum_hw = 0.0;  // sum h W/omega
};

Cavity gather(const Population& pop, const WeightModel& weight, int count, Rng& rng) {
  Cavity c;
  const std::size_t n = pop.size();
  for (int l = 0; l < count; ++l) {
    const std::size_t idx = pick(n, rng);
    const double w = weight.sample(rng);
    const double inv = 1.0 / pop.omega[idx];
    c.sum_w2 += w * w * inv;
    c.sum_hw += pop.h[idx] * w * inv;
  }
  return c;
}

double spike_shift(const Population& pop, const SpikeModel& spike, Rng& rng) {
  if (pop.theta == 0.0) return 0.0;
  return pop.theta * pop.q * spike.sample(rng);
}

struct Accumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  McEstimate estimate() const {
    McEstimate e;
    e.samples = n;
    if (n == 0) return e;
    e.mean = sum / static_cast<double>(n);
    if (n > 1) {
      const double var = std::max(0.0, (sum_sq - sum * e.mean) / static_cast<double>(n - 1));
      e.std_err = std::sqrt(var / static_cast<double>(n));
    }
    return e;
  }
};

double check_denominator(double denom, double lambda) {
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw NonPositiveDenominator("resolvent denominator " + std::to_string(denom) + " <= 0 at lambda = " +
                                 std::to_string(lambda));
  return denom;
}

void require_population(const Population& pop) {
  if (pop.omega.empty() || pop.omega.size() != pop.h.size())
    throw ConfigError("population is empty or has mismatched omega/h arrays");
}

}  // namespace

void PopDynConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("popdyn: ") + name + " must be positive");
  };
  if (population_size < 1) throw ConfigError("popdyn: population size must be positive");
  positive(omega_init_min, "omega_init_min");
  positive(omega_init_max, "omega_init_max");
  if (omega_init_max < omega_init_min) throw ConfigError("popdyn: omega init range is reversed");
  if (h_init_max < h_init_min) throw ConfigError("popdyn: h init range is reversed");
  positive(q_init, "q_init");
  positive(lambda_init, "lambda_init");
  if (plateau_window < 2) throw ConfigError("popdyn: plateau window must be at least 2 sweeps");
  positive(plateau_tol, "plateau_tol");
  if (max_sweeps < 1) throw ConfigError("popdyn: max_sweeps must be positive");
  positive(alpha_tol, "alpha_tol");
  if (max_rescales < 1) throw ConfigError("popdyn: max_rescales must be positive");
  if (alpha_samples < 2) throw ConfigError("popdyn: alpha_samples must be at least 2");
  if (!(lambda_backoff > 1.0)) throw ConfigError("popdyn: lambda_backoff must exceed 1");
  if (structural_burn_in < 0 || structural_generations < 1 || structural_max_bisections < 1)
    throw ConfigError("popdyn: structural generation counts must be positive");
  positive(structural_tol, "structural_tol");
}

PopStreams PopStreams::from_seed(std::uint64_t seed) {
  return PopStreams{derived_stream(seed, 0, "popdyn-structure"), derived_stream(seed, 0, "popdyn-spike"),
                    derived_stream(seed, 0, "popdyn-estimate")};
}

Population init_population(const PopDynConfig& config, double theta, PopStreams& streams) {
  config.validate();
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ConfigError("popdyn: theta must be finite and >= 0");
  Population pop;
  pop.omega.resize(config.population_size);
  pop.h.resize(config.population_size);
  std::uniform_real_distribution<double> om(config.omega_init_min, config.omega_init_max);
  std::uniform_real_distribution<double> hh(config.h_init_min, config.h_init_max);
  for (std::size_t i = 0; i < config.population_size; ++i) {
    pop.omega[i] = om(streams.structure);
    pop.h[i] = hh(streams.structure);
  }
  pop.q = config.q_init;
  pop.lambda = config.lambda_init;
  pop.theta = theta;
  return pop;
}

void update_step(Population& pop, const Ensemble& ensemble, PopStreams& streams) {
  const int k = ensemble.degree.sample_degree_corrected(streams.structure);
  const Cavity c = gather(pop, ensemble.weight, k - 1, streams.structure);
  const double shift = spike_shift(pop, ensemble.spike, streams.spike);
  const double omega_new = pop.lambda - c.sum_w2;
  const std::size_t slot = pick(pop.size(), streams.structure);
  if (!(omega_new > 0.0))
    throw NonPositiveOmega("omega update " + std::to_string(omega_new) + " <= 0 at lambda = " +
                           std::to_string(pop.lambda));
  pop.omega[slot] = omega_new;
  pop.h[slot] = c.sum_hw + shift;
}

void run_sweeps(Population& pop, const Ensemble& ensemble, PopStreams& streams, int sweeps) {
  require_population(pop);
  for (int s = 0; s < sweeps; ++s) {
    for (std::size_t i = 0; i < pop.size(); ++i) update_step(pop, ensemble, streams);
    ++pop.sweep_count;
  }
}

Moments population_moments(const Population& pop) {
  const auto n = static_cast<double>(pop.size());
  Moments m;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    m.mean_omega += pop.omega[i];
    m.mean_h += pop.h[i];
  }
  m.mean_omega /= n;
  m.mean_h /= n;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const double a = pop.omega[i] - m.mean_omega;
    const double b = pop.h[i] - m.mean_h;
    m.var_omega += a * a;
    m.var_h += b * b;
  }
  m.var_omega /= n;
  m.var_h /= n;
  return m;
}

bool plateau_reached(const std::vector<Moments>& trace, int window, double tol) {
  if (window < 2 || trace.size() < 2 * static_cast<std::size_t>(window)) return false;
  const std::size_t end = trace.size();
  const std::size_t mid = end - static_cast<std::size_t>(window);
  const std::size_t begin = mid - static_cast<std::size_t>(window);

  auto check = [&](auto field, auto scale_of) {
    double sa = 0, sb = 0, qa = 0, qb = 0;
    for (std::size_t i = begin; i < mid; ++i) sa += field(trace[i]);
    for (std::size_t i = mid; i < end; ++i) sb += field(trace[i]);
    const double w = static_cast<double>(window);
    const double ma = sa / w, mb = sb / w;
    for (std::size_t i = begin; i < mid; ++i) qa += (field(trace[i]) - ma) * (field(trace[i]) - ma);
    for (std::size_t i = mid; i < end; ++i) qb += (field(trace[i]) - mb) * (field(trace[i]) - mb);
    const double noise = 3.0 * std::sqrt((qa + qb) / ((w - 1.0) * w));
    const double diff = std::fabs(mb - ma);
    if (!std::isfinite(diff)) return false;
    return diff <= std::max(tol * scale_of(trace.back()), noise);
  };

  auto floor_of = [](const Moments& m) {
    return 1e-14 * (m.mean_omega * m.mean_omega + m.mean_h * m.mean_h + m.var_h);
  };
  return check([](const Moments& m) { return m.mean_omega; },
               [](const Moments& m) { return std::fabs(m.mean_omega) + std::sqrt(m.var_omega); }) &&
         check([](const Moments& m) { return m.var_omega; },
               [&](const Moments& m) { return std::fabs(m.var_omega) + floor_of(m); }) &&
         check([](const Moments& m) { return m.mean_h; },
               [&](const Moments& m) { return std::fabs(m.mean_h) + std::sqrt(m.var_h) + floor_of(m); }) &&
         check([](const Moments& m) { return m.var_h; },
               [&](const Moments& m) { return std::fabs(m.var_h) + floor_of(m); });
}

EquilibrationDiagnostics equilibrate(Population& pop, const Ensemble& ensemble, const PopDynConfig& config,
                                     PopStreams& streams, bool allow_lambda_backoff) {
  config.validate();
  require_population(pop);
  EquilibrationDiagnostics diag;
  while (true) {
    const Population backup = pop;
    try {
      diag.trace.clear();
      for (int s = 0; s < config.max_sweeps; ++s) {
        run_sweeps(pop, ensemble, streams, 1);
        ++diag.sweeps;
        diag.trace.push_back(population_moments(pop));
        if (plateau_reached(diag.trace, config.plateau_window, config.plateau_tol)) return diag;
      }
      throw MaxSweepsExceeded("no plateau of the population moments after " + std::to_string(config.max_sweeps) +
                              " sweeps");
    } catch (const NonPositiveOmega&) {
      if (!allow_lambda_backoff || diag.lambda_backoffs >= 100) throw;
      pop = backup;
      pop.lambda *= config.lambda_backoff;
      ++diag.lambda_backoffs;
    }
  }
}

McEstimate alpha1(const Population& pop, const Ensemble& ensemble, Rng& rng, std::size_t samples) {
  require_population(pop);
  Accumulator acc;
  for (std::size_t s = 0; s < samples; ++s) {
    const int k = ensemble.degree.sample(rng);
    const Cavity c = gather(pop, ensemble.weight, k, rng);
    const double shift = spike_shift(pop, ensemble.spike, rng);
    const double denom = check_denominator(pop.lambda - c.sum_w2, pop.lambda);
    const double u = (c.sum_hw + shift) / denom;
    acc.add(u * u);
  }
  return acc.estimate();
}

McEstimate resolvent_mean(const Population& pop, const Ensemble& ensemble, Rng& rng, std::size_t samples) {
  require_population(pop);
  Accumulator acc;
  for (std::size_t s = 0; s < samples; ++s) {
    const int k = ensemble.degree.sample(rng);
    const Cavity c = gather(pop, ensemble.weight, k, rng);
    acc.add(1.0 / check_denominator(pop.lambda - c.sum_w2, pop.lambda));
  }
  return acc.estimate();
}

McEstimate alpha2(const Population& pop, const Ensemble& ensemble, Rng& rng, std::size_t samples) {
  McEstimate e = resolvent_mean(pop, ensemble, rng, samples);
  const double factor = pop.theta * ensemble.spike.variance();
  e.mean *= factor;
  e.std_err *= factor;
  return e;
}

SolveResult solve(double theta, const Ensemble& ensemble, const PopDynConfig& config, PopStreams& streams,
                  std::optional<WarmStart> warm_start) {
  if (!(theta > 0.0)) throw ConfigError("popdyn solve: theta must be > 0 (use solve_structural for theta = 0)");
  SolveResult result;
  Population pop = init_population(config, theta, streams);
  if (warm_start) {
    if (!(warm_start->lambda > 0.0) || !(warm_start->q > 0.0))
      throw ConfigError("popdyn solve: warm start needs positive lambda and q");
    pop.lambda = warm_start->lambda;
    pop.q = warm_start->q;
  }

  for (int round = 0; round < config.max_rescales; ++round) {
    RescaleRecord rec;
    rec.round = round;
    EquilibrationDiagnostics diag = equilibrate(pop, ensemble, config, streams);
    rec.sweeps = diag.sweeps;
    rec.lambda_backoffs = diag.lambda_backoffs;
    try {
      rec.alpha1 = alpha1(pop, ensemble, streams.estimate, config.alpha_samples);
      rec.alpha2 = alpha2(pop, ensemble, streams.estimate, config.alpha_samples);
    } catch (const NonPositiveDenominator&) {
      // lambda sits below the admissible region for degree-k (not k-1) sums.
      pop.lambda *= config.lambda_backoff;
      rec.q = pop.q;
      rec.lambda = pop.lambda;
      result.trajectory.push_back(rec);
      continue;
    }
    rec.q = pop.q;
    rec.lambda = pop.lambda;
    result.trajectory.push_back(rec);
    result.last_equilibration = std::move(diag);

    if (std::fabs(rec.alpha1.mean - 1.0) <= config.alpha_tol && std::fabs(rec.alpha2.mean - 1.0) <= config.alpha_tol) {
      const double s = 1.0 / std::sqrt(rec.alpha1.mean);
      for (double& h : pop.h) h *= s;
      pop.q *= s;
      result.q = pop.q;
      result.lambda = pop.lambda;
      result.alpha1 = rec.alpha1;
      result.alpha2 = rec.alpha2;
      result.population = std::move(pop);
      return result;
    }
    if (!(rec.alpha1.mean > 0.0) || !std::isfinite(rec.alpha1.mean))
      throw NotConverged("popdyn solve: alpha1 = " + std::to_string(rec.alpha1.mean) + " cannot rescale q");
    const double q_new = pop.q / std::sqrt(rec.alpha1.mean);
    if (config.rescale_h)
      for (double& h : pop.h) h *= q_new / pop.q;
    pop.q = q_new;
    pop.lambda *= rec.alpha2.mean;
  }
  throw MaxRescalesExceeded("popdyn solve: alphas not within " + std::to_string(config.alpha_tol) + " of 1 after " +
                            std::to_string(config.max_rescales) + " rescalings");
}

namespace {

// Synchronous generations of the theta = 0 recursion at fixed lambda. Returns
// the mean log growth of the rms of h after burn-in, or nullopt when some
// omega turned non-positive (lambda too low).
struct GrowthProbe {
  bool admissible = false;
  double log_growth = 0.0;
};

GrowthProbe probe_growth(Population& pop, const Ensemble& ensemble, Rng& rng, int burn_in, int generations) {
  const std::size_t n = pop.size();
  std::vector<double> omega_next(n), h_next(n);
  double log_sum = 0.0;
  auto rms = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / static_cast<double>(v.size()));
  };
  double prev = rms(pop.h);
  if (!(prev > 0.0)) throw NotConverged("structural solver: h population vanished");
  for (double& x : pop.h) x /= prev;
  for (int g = 0; g < burn_in + generations; ++g) {
    for (std::size_t i = 0; i < n; ++i) {
      const int k = ensemble.degree.sample_degree_corrected(rng);
      const Cavity c = gather(pop, ensemble.weight, k - 1, rng);
      omega_next[i] = pop.lambda - c.sum_w2;
      if (!(omega_next[i] > 0.0)) return GrowthProbe{};
      h_next[i] = c.sum_hw;
    }
    pop.omega.swap(omega_next);
    pop.h.swap(h_next);
    ++pop.sweep_count;
    const double r = rms(pop.h);
    if (!(r > 0.0) || !std::isfinite(r)) return GrowthProbe{true, -std::numeric_limits<double>::infinity()};
    for (double& x : pop.h) x /= r;
    if (g >= burn_in) log_sum += std::log(r);
  }
  return GrowthProbe{true, log_sum / generations};
}

}  // namespace

StructuralResult solve_structural(const Ensemble& ensemble, const PopDynConfig& config, PopStreams& streams) {
  Population base = init_population(config, 0.0, streams);
  base.q = 0.0;
  const int k_max = ensemble.degree.k_max();
  const double zeta = ensemble.weight.support_edge();
  double hi = std::max(1e-12, 1.05 * k_max * zeta + 1e-9);
  double lo = 0.0;
  // Starting from omega = lambda (its upper bound) the omega recursion
  // decreases monotonically towards its fixed point.
  std::fill(base.omega.begin(), base.omega.end(), hi);

  Population current = base;
  auto evaluate = [&](double lambda) {
    Population trial = current;
    trial.lambda = lambda;
    GrowthProbe p = probe_growth(trial, ensemble, streams.structure, config.structural_burn_in,
                                 config.structural_generations);
    if (p.admissible) current = std::move(trial);
    return p;
  };

  GrowthProbe top = evaluate(hi);
  for (int i = 0; top.admissible && top.log_growth > 0.0 && i < 60; ++i) {
    lo = hi;
    hi *= 2.0;
    top = evaluate(hi);
  }
  if (!top.admissible || top.log_growth > 0.0)
    throw RootNotBracketed("structural solver: no upper bracket for lambda_{theta=0}");

  StructuralResult result;
  for (int it = 0; it < config.structural_max_bisections && (hi - lo) > config.structural_tol * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const GrowthProbe p = evaluate(mid);
    ++result.bisections;
    if (!p.admissible || p.log_growth > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }

  result.lambda = 0.5 * (lo + hi);
  GrowthProbe final_probe = evaluate(result.lambda);
  if (!final_probe.admissible) {
    result.lambda = hi;
    final_probe = evaluate(hi);
  }
  result.log_growth = final_probe.log_growth;
  current.lambda = result.lambda;
  current.theta = 0.0;
  current.q = 0.0;
  // Orient h positively and normalise it so that E[u^2] = 1.
  double sum = 0.0;
  for (double h : current.h) sum += h;
  if (sum < 0.0)
    for (double& h : current.h) h = -h;
  const McEstimate a1 = alpha1(current, ensemble, streams.estimate, config.alpha_samples);
  if (a1.mean > 0.0) {
    const double s = 1.0 / std::sqrt(a1.mean);
    for (double& h : current.h) h *= s;
  }
  result.population = std::move(current);
  return result;
}

void write_checkpoint(const std::filesystem::path& path, const Population& pop, std::uint64_t seed) {
  require_population(pop);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << std::setprecision(17);
  out << "# sparsespike population checkpoint\n";
  out << "q " << pop.q << "\n";
  out << "lambda " << pop.lambda << "\n";
  out << "theta " << pop.theta << "\n";
  out << "seed " << seed << "\n";
  out << "sweep_count " << pop.sweep_count << "\n";
  out << "size " << pop.size() << "\n";
  for (std::size_t i = 0; i < pop.size(); ++i) out << pop.omega[i] << ' ' << pop.h[i] << '\n';
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("# sparsespike population checkpoint", 0) != 0)
    throw ConfigError("checkpoint " + path.string() + ": missing header");

  Checkpoint cp;
  std::size_t size = 0;
  auto field = [&](const char* name, auto& value) {
    std::string key;
    if (!(in >> key) || key != name || !(in >> value))
      throw ConfigError("checkpoint " + path.string() + ": expected field '" + name + "'");
  };
  field("q", cp.population.q);
  field("lambda", cp.population.lambda);
  field("theta", cp.population.theta);
  field("seed", cp.seed);
  field("sweep_count", cp.population.sweep_count);
  field("size", size);
  cp.population.omega.resize(size);
  cp.population.h.resize(size);
  for (std::size_t i = 0; i < size; ++i) {
    if (!(in >> cp.population.omega[i] >> cp.population.h[i]))
      throw ConfigError("checkpoint " + path.string() + ": truncated at pair " + std::to_string(i));
    if (!(cp.population.omega[i] > 0.0) || !std::isfinite(cp.population.h[i]))
      throw ConfigError("checkpoint " + path.string() + ": invalid pair " + std::to_string(i));
  }
  return cp;
}

}  // namespace sparsespike
