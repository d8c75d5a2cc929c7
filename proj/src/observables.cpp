#include "sparsespike/observables.hpp"

#include <algorithm>
#include <cmath>

#include "sparsespike/errors.hpp"

namespace sparsespike {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

enum class Component { top, overlap };

DensityEstimate sample_density(const Population& pop, const Ensemble& ensemble, std::size_t n_samples, Rng& rng,
                               Component which) {
  if (pop.omega.empty() || pop.omega.size() != pop.h.size()) throw ConfigError("density: empty population");
  if (n_samples < 1) throw ConfigError("density: sample count must be positive");
  DensityEstimate d;
  d.theta = pop.theta;
  d.lambda = pop.lambda;
  d.q = pop.q;
  d.samples.resize(n_samples);
  d.degrees.resize(n_samples);
  std::uniform_int_distribution<std::size_t> member(0, pop.size() - 1);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const int k = ensemble.degree.sample(rng);
    double sum_w2 = 0.0, sum_hw = 0.0;
    for (int l = 0; l < k; ++l) {
      const std::size_t idx = member(rng);
      const double w = ensemble.weight.sample(rng);
      const double inv = 1.0 / pop.omega[idx];
      sum_w2 += w * w * inv;
      sum_hw += pop.h[idx] * w * inv;
    }
    const double x = ensemble.spike.sample(rng);
    const double denom = pop.lambda - sum_w2;
    if (!(denom > 0.0))
      throw NonPositiveDenominator("density: denominator " + std::to_string(denom) + " <= 0");
    const double u = (sum_hw + pop.theta * pop.q * x) / denom;
    d.samples[s] = which == Component::top ? u : x * u;
    d.degrees[s] = k;
  }
  d.histogram = make_histogram(d.samples);

  std::map<int, std::vector<double>> split;
  for (std::size_t s = 0; s < n_samples; ++s) split[d.degrees[s]].push_back(d.samples[s]);
  for (const auto& [k, values] : split) d.by_degree[k] = histogram_on(values, d.histogram.edges);
  d.cdf = empirical_cdf(d.samples);
  return d;
}

}  // namespace

Histogram make_histogram(const std::vector<double>& samples, std::optional<int> bins, int max_bins) {
  if (samples.empty()) throw ConfigError("histogram: no samples");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  int count = 1;
  if (bins) {
    if (*bins < 1) throw ConfigError("histogram: bin count must be positive");
    count = *bins;
  } else if (hi > lo) {
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    const double width = 2.0 * iqr / std::cbrt(static_cast<double>(sorted.size()));
    count = width > 0.0 ? static_cast<int>(std::ceil((hi - lo) / width)) : max_bins;
    count = std::clamp(count, 1, max_bins);
  }
  std::vector<double> edges(static_cast<std::size_t>(count) + 1);
  if (hi > lo) {
    for (int b = 0; b <= count; ++b) edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / count;
    edges.back() = hi;
  } else {
    const double half = std::max(0.5, 0.5 * std::fabs(lo));
    for (int b = 0; b <= count; ++b) edges[static_cast<std::size_t>(b)] = lo - half + 2.0 * half * b / count;
  }
  return histogram_on(samples, edges);
}

Histogram histogram_on(const std::vector<double>& samples, const std::vector<double>& edges) {
  if (edges.size() < 2) throw ConfigError("histogram: need at least two edges");
  Histogram h;
  h.edges = edges;
  h.mass.assign(edges.size() - 1, 0.0);
  if (samples.empty()) return h;
  std::vector<std::size_t> counts(h.mass.size(), 0);
  for (double v : samples) {
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    std::size_t bin = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
    bin = std::min(bin, counts.size() - 1);
    ++counts[bin];
  }
  const auto n = static_cast<double>(samples.size());
  for (std::size_t b = 0; b < counts.size(); ++b) h.mass[b] = static_cast<double>(counts[b]) / n;
  return h;
}

std::vector<CdfPoint> empirical_cdf(std::vector<double> samples, std::size_t points) {
  std::vector<CdfPoint> out;
  if (samples.empty()) return out;
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  const std::size_t m = std::max<std::size_t>(1, std::min(points, n));
  out.reserve(m);
  for (std::size_t j = 1; j <= m; ++j) {
    std::size_t idx = (j * n) / m;  // 1-based count of samples <= x
    idx = std::max<std::size_t>(idx, 1);
    // Include ties so F is evaluated after the last copy of the value.
    std::size_t end = idx;
    while (end < n && samples[end] == samples[idx - 1]) ++end;
    const CdfPoint p{samples[idx - 1], static_cast<double>(end) / static_cast<double>(n)};
    if (!out.empty() && out.back().x == p.x) {
      out.back().f = p.f;
    } else {
      out.push_back(p);
    }
  }
  return out;
}

DensityEstimate rho_top(const Population& pop, const Ensemble& ensemble, std::size_t n_samples, Rng& rng) {
  return sample_density(pop, ensemble, n_samples, rng, Component::top);
}

DensityEstimate rho_ov(const Population& pop, const Ensemble& ensemble, std::size_t n_samples, Rng& rng) {
  return sample_density(pop, ensemble, n_samples, rng, Component::overlap);
}

Marginals marginals(const Population& pop, std::size_t points) {
  Marginals m;
  m.omega_cdf = empirical_cdf(pop.omega, points);
  m.h_cdf = empirical_cdf(pop.h, points);
  m.omega_atom_value = pop.lambda;
  if (!pop.omega.empty()) {
    const auto hits = std::count(pop.omega.begin(), pop.omega.end(), pop.lambda);
    m.omega_atom_mass = static_cast<double>(hits) / static_cast<double>(pop.omega.size());
  }
  return m;
}

OverlapMoments sample_moments(const std::vector<double>& samples) {
  OverlapMoments m;
  const std::size_t n = samples.size();
  if (n == 0) return m;
  double s1 = 0.0, s2 = 0.0;
  for (double v : samples) {
    s1 += v;
    s2 += v * v;
  }
  const double nn = static_cast<double>(n);
  m.mean = s1 / nn;
  m.second_moment = s2 / nn;
  if (n > 1) {
    double v1 = 0.0, v2 = 0.0;
    for (double v : samples) {
      v1 += (v - m.mean) * (v - m.mean);
      v2 += (v * v - m.second_moment) * (v * v - m.second_moment);
    }
    m.mean_std_err = std::sqrt(v1 / (nn - 1.0) / nn);
    m.second_moment_std_err = std::sqrt(v2 / (nn - 1.0) / nn);
  }
  m.squared_overlap = m.mean * m.mean;
  m.squared_overlap_std_err = 2.0 * std::fabs(m.mean) * m.mean_std_err;
  return m;
}

OverlapMoments overlap_moments(const DensityEstimate& density) { return sample_moments(density.samples); }

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("ks_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

}  // namespace sparsespike
