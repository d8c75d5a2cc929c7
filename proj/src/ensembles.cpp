#include "sparsespike/ensembles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sparsespike/errors.hpp"

namespace sparsespike {

namespace {

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::vector<double> cumulative(std::span<const double> p) {
  std::vector<double> cdf(p.size());
  long double acc = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    cdf[i] = static_cast<double>(acc);
  }
  if (!cdf.empty()) cdf.back() = 1.0;
  return cdf;
}

// Index of the first cdf entry strictly greater than u, skipping zero-mass atoms.
int draw_from_cdf(std::span<const double> cdf, Rng& rng) {
  const double u = uniform01(rng);
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<int>(it - cdf.begin());
}

void validate_table(std::span<const double> values, std::span<const double> probs, const char* what) {
  if (values.size() != probs.size() || values.empty())
    throw ConfigError(std::string(what) + ": values and probabilities must be non-empty and of equal length");
  long double total = 0.0L;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError(std::string(what) + ": probabilities must be non-negative");
    total += p;
  }
  if (std::fabs(static_cast<double>(total) - 1.0) > 1e-12)
    throw ConfigError(std::string(what) + ": probabilities must sum to 1 within 1e-12");
  for (double v : values)
    if (!std::isfinite(v)) throw ConfigError(std::string(what) + ": support points must be finite");
}

}  // namespace

// ---------------------------------------------------------------------------
// DegreeModel

DegreeModel::DegreeModel(Kind kind, std::vector<long double> unnormalised, double c_bar)
    : kind_(kind), c_bar_(c_bar) {
  long double total = 0.0L;
  for (long double t : unnormalised) total += t;
  if (!(total > 0.0L)) throw ConfigError("degree distribution has zero total mass");
  gamma_ = static_cast<double>(total);

  p_.resize(unnormalised.size());
  long double mean = 0.0L;
  long double second = 0.0L;
  for (std::size_t k = 0; k < unnormalised.size(); ++k) {
    const long double pk = unnormalised[k] / total;
    p_[k] = static_cast<double>(pk);
    mean += static_cast<long double>(k) * pk;
    second += static_cast<long double>(k) * static_cast<long double>(k) * pk;
  }
  mean_ = static_cast<double>(mean);
  second_moment_ = static_cast<double>(second);
  cdf_ = cumulative(p_);

  if (mean > 0.0L) {
    r_.resize(p_.size());
    for (std::size_t k = 0; k < p_.size(); ++k)
      r_[k] = static_cast<double>(static_cast<long double>(k) * (unnormalised[k] / total) / mean);
    r_cdf_ = cumulative(r_);
  }
}

DegreeModel DegreeModel::truncated_poisson(double c_bar, int k_max) {
  if (!(c_bar > 0.0) || !std::isfinite(c_bar)) throw ConfigError("truncated_poisson: c_bar must be positive");
  if (k_max < 1) throw ConfigError("truncated_poisson: k_max must be >= 1");
  std::vector<long double> terms(static_cast<std::size_t>(k_max) + 1);
  long double term = 1.0L;
  for (int k = 0; k <= k_max; ++k) {
    if (k > 0) term *= static_cast<long double>(c_bar) / static_cast<long double>(k);
    terms[static_cast<std::size_t>(k)] = term;
  }
  return DegreeModel(Kind::truncated_poisson, std::move(terms), c_bar);
}

DegreeModel DegreeModel::regular(int c) {
  if (c < 1) throw ConfigError("regular: c must be a positive integer");
  std::vector<long double> terms(static_cast<std::size_t>(c) + 1, 0.0L);
  terms.back() = 1.0L;
  return DegreeModel(Kind::regular, std::move(terms), std::nan(""));
}

DegreeModel DegreeModel::table(std::vector<double> probabilities) {
  if (probabilities.empty()) throw ConfigError("degree table: empty");
  while (probabilities.size() > 1 && probabilities.back() == 0.0) probabilities.pop_back();
  long double total = 0.0L;
  for (double p : probabilities) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("degree table: probabilities must be non-negative");
    total += p;
  }
  if (std::fabs(static_cast<double>(total) - 1.0) > 1e-12)
    throw ConfigError("degree table: probabilities must sum to 1 within 1e-12");
  std::vector<long double> terms(probabilities.begin(), probabilities.end());
  return DegreeModel(Kind::table, std::move(terms), std::nan(""));
}

double DegreeModel::p(int k) const {
  if (k < 0 || k > k_max()) return 0.0;
  return p_[static_cast<std::size_t>(k)];
}

std::span<const double> DegreeModel::degree_corrected() const {
  if (r_.empty()) throw ConfigError("degree-corrected distribution undefined: mean degree is zero");
  return r_;
}

int DegreeModel::sample(Rng& rng) const {
  if (kind_ == Kind::regular) return k_max();
  return draw_from_cdf(cdf_, rng);
}

int DegreeModel::sample_degree_corrected(Rng& rng) const {
  if (r_.empty()) throw ConfigError("degree-corrected distribution undefined: mean degree is zero");
  if (kind_ == Kind::regular) return k_max();
  return draw_from_cdf(r_cdf_, rng);
}

std::string DegreeModel::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case Kind::truncated_poisson: os << "truncated_poisson(c_bar=" << c_bar_ << ",k_max=" << k_max() << ")"; break;
    case Kind::regular: os << "regular(c=" << k_max() << ")"; break;
    case Kind::table: os << "table(k_max=" << k_max() << ")"; break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// WeightModel

WeightModel::WeightModel(Kind kind, std::vector<double> values, std::vector<double> probabilities)
    : kind_(kind), values_(std::move(values)), probs_(std::move(probabilities)) {
  validate_table(values_, probs_, "weight model");
  long double m1 = 0.0L, m2 = 0.0L;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    m1 += static_cast<long double>(probs_[i]) * values_[i];
    m2 += static_cast<long double>(probs_[i]) * values_[i] * values_[i];
    if (probs_[i] > 0.0) support_edge_ = std::max(support_edge_, std::fabs(values_[i]));
  }
  mean_ = static_cast<double>(m1);
  second_moment_ = static_cast<double>(m2);
  if (!(second_moment_ > 0.0)) throw ConfigError("weight model: E[W^2] must be positive");
  cdf_ = cumulative(probs_);
}

WeightModel WeightModel::constant(double w) { return WeightModel(Kind::constant, {w}, {1.0}); }

WeightModel WeightModel::rademacher_scaled(double scale) {
  if (!(scale > 0.0)) throw ConfigError("rademacher_scaled: scale must be positive");
  return WeightModel(Kind::rademacher_scaled, {-scale, scale}, {0.5, 0.5});
}

WeightModel WeightModel::custom_table(std::vector<double> values, std::vector<double> probabilities) {
  return WeightModel(Kind::custom_table, std::move(values), std::move(probabilities));
}

double WeightModel::sample(Rng& rng) const {
  if (values_.size() == 1) return values_.front();
  return values_[static_cast<std::size_t>(draw_from_cdf(cdf_, rng))];
}

std::string WeightModel::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case Kind::constant: os << "constant(w=" << values_.front() << ")"; break;
    case Kind::rademacher_scaled: os << "rademacher_scaled(scale=" << values_.back() << ")"; break;
    case Kind::custom_table: os << "custom_table(points=" << values_.size() << ")"; break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// SpikeModel

SpikeModel::SpikeModel(Kind kind, double variance) : kind_(kind), variance_(variance) {
  if (!(variance_ > 0.0) || !std::isfinite(variance_)) throw ConfigError("spike model: variance must be finite and positive");
}

SpikeModel SpikeModel::gaussian(double variance) { return SpikeModel(Kind::gaussian, variance); }

SpikeModel SpikeModel::rademacher(double variance) {
  SpikeModel m(Kind::rademacher, variance);
  const double s = std::sqrt(variance);
  m.values_ = {-s, s};
  m.cdf_ = {0.5, 1.0};
  return m;
}

SpikeModel SpikeModel::custom(std::vector<double> values, std::vector<double> probabilities) {
  validate_table(values, probabilities, "spike model");
  long double m1 = 0.0L, m2 = 0.0L, scale = 0.0L;
  for (std::size_t i = 0; i < values.size(); ++i) {
    m1 += static_cast<long double>(probabilities[i]) * values[i];
    m2 += static_cast<long double>(probabilities[i]) * values[i] * values[i];
    scale = std::max(scale, static_cast<long double>(std::fabs(values[i])));
  }
  if (std::fabs(static_cast<double>(m1)) > 1e-12 * static_cast<double>(std::max(scale, 1.0L)))
    throw ConfigError("spike model: E[X] must be zero (non-centred spikes are not supported)");
  SpikeModel m(Kind::custom, static_cast<double>(m2));
  m.values_ = std::move(values);
  m.cdf_ = cumulative(probabilities);
  return m;
}

double SpikeModel::sample(Rng& rng) const {
  if (kind_ == Kind::gaussian) return std::normal_distribution<double>(0.0, std::sqrt(variance_))(rng);
  return values_[static_cast<std::size_t>(draw_from_cdf(cdf_, rng))];
}

std::string SpikeModel::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case Kind::gaussian: os << "gaussian(variance=" << variance_ << ")"; break;
    case Kind::rademacher: os << "rademacher(variance=" << variance_ << ")"; break;
    case Kind::custom: os << "custom(points=" << values_.size() << ")"; break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------

std::vector<int> sample_degree_sequence(const DegreeModel& model, int n, Rng& rng) {
  if (n < 2) throw ConfigError("sample_degree_sequence: N must be >= 2");
  std::vector<int> degrees(static_cast<std::size_t>(n));
  long long total = 0;
  for (auto& k : degrees) {
    k = model.sample(rng);
    total += k;
  }
  if (total % 2 == 0) return degrees;

  bool has_odd = false, has_even = false;
  for (int k = 0; k <= model.k_max(); ++k) {
    if (model.p(k) <= 0.0) continue;
    (k % 2 ? has_odd : has_even) = true;
  }
  if (!(has_odd && has_even))
    throw InfeasibleSequence("degree sequence has odd sum and the support of p_k cannot repair its parity");

  std::uniform_int_distribution<int> pick(0, n - 1);
  auto& slot = degrees[static_cast<std::size_t>(pick(rng))];
  total -= slot;
  // The replacement must flip the parity of the chosen entry's contribution.
  do {
    slot = model.sample(rng);
  } while ((total + slot) % 2 != 0);
  return degrees;
}

}  // namespace sparsespike
