#include "sparsespike/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "sparsespike/errors.hpp"
#include "sparsespike/observables.hpp"
#include "sparsespike/seeding.hpp"

namespace sparsespike {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void field_error(const std::string& field, const std::string& message) {
  throw ConfigError("config field '" + field + "': " + message);
}

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      field_error(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
}

double number(const json& obj, const std::string& where, const std::string& key, std::optional<double> fallback = {}) {
  const std::string field = where.empty() ? key : where + "." + key;
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    field_error(field, "missing");
  }
  const json& v = obj.at(key);
  if (!v.is_number()) field_error(field, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) field_error(field, "must be finite");
  return d;
}

long long integer(const json& obj, const std::string& where, const std::string& key,
                  std::optional<long long> fallback = {}) {
  const std::string field = where.empty() ? key : where + "." + key;
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    field_error(field, "missing");
  }
  const json& v = obj.at(key);
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9e15) return static_cast<long long>(d);
  }
  field_error(field, "expected an integer");
}

bool boolean(const json& obj, const std::string& where, const std::string& key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) field_error(where.empty() ? key : where + "." + key, "expected true or false");
  return obj.at(key).get<bool>();
}

std::vector<double> number_list(const json& v, const std::string& field) {
  std::vector<double> out;
  if (v.is_number()) {
    out.push_back(v.get<double>());
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_number()) field_error(field, "expected numbers");
      out.push_back(e.get<double>());
    }
  } else {
    field_error(field, "expected a number or an array of numbers");
  }
  if (out.empty()) field_error(field, "grid must not be empty");
  for (double d : out)
    if (!std::isfinite(d)) field_error(field, "values must be finite");
  return out;
}

std::string type_of(const json& spec, const std::string& field) {
  if (!spec.is_object()) field_error(field, "expected an object");
  if (!spec.contains("type") || !spec.at("type").is_string()) field_error(field + ".type", "missing or not a string");
  return spec.at("type").get<std::string>();
}

DegreeModel build_degree(const json& spec, std::optional<double> c) {
  const std::string type = type_of(spec, "degree");
  if (type == "poisson") {
    reject_unknown(spec, "degree", {"type", "c_bar", "k_max"});
    const double c_bar = c ? *c : number(spec, "degree", "c_bar");
    if (!(c_bar > 0.0)) field_error("degree.c_bar", "must be positive");
    const long long k_max = integer(spec, "degree", "k_max", 20);
    if (k_max < 1 || k_max > 100000) field_error("degree.k_max", "must be in [1, 100000]");
    return DegreeModel::truncated_poisson(c_bar, static_cast<int>(k_max));
  }
  if (type == "regular") {
    reject_unknown(spec, "degree", {"type", "c"});
    long long cc = 0;
    if (c) {
      if (*c != std::floor(*c)) field_error("c", "regular degrees must be integers");
      cc = static_cast<long long>(*c);
    } else {
      cc = integer(spec, "degree", "c");
    }
    if (cc < 1 || cc > 100000) field_error("degree.c", "must be in [1, 100000]");
    return DegreeModel::regular(static_cast<int>(cc));
  }
  if (type == "table") {
    reject_unknown(spec, "degree", {"type", "p"});
    if (c) field_error("c", "a c grid cannot be combined with a tabulated degree distribution");
    if (!spec.contains("p")) field_error("degree.p", "missing");
    return DegreeModel::table(number_list(spec.at("p"), "degree.p"));
  }
  field_error("degree.type", "unknown degree model '" + type + "' (poisson, regular, table)");
}

double connectivity(const DegreeModel& degree) {
  return degree.kind() == DegreeModel::Kind::truncated_poisson ? degree.c_bar() : degree.mean();
}

WeightModel build_weight(const json& spec, const DegreeModel& degree) {
  const std::string type = type_of(spec, "weight");
  if (type == "constant") {
    reject_unknown(spec, "weight", {"type", "w"});
    return WeightModel::constant(number(spec, "weight", "w", 1.0));
  }
  if (type == "rademacher") {
    reject_unknown(spec, "weight", {"type", "scale"});
    return WeightModel::rademacher_scaled(number(spec, "weight", "scale", 1.0));
  }
  if (type == "dense_limit") {
    reject_unknown(spec, "weight", {"type"});
    const double c = connectivity(degree);
    if (!(c > 0.0)) field_error("weight.type", "dense_limit needs positive connectivity");
    return WeightModel::rademacher_scaled(1.0 / std::sqrt(c));
  }
  if (type == "table") {
    reject_unknown(spec, "weight", {"type", "values", "p"});
    if (!spec.contains("values")) field_error("weight.values", "missing");
    if (!spec.contains("p")) field_error("weight.p", "missing");
    return WeightModel::custom_table(number_list(spec.at("values"), "weight.values"),
                                     number_list(spec.at("p"), "weight.p"));
  }
  field_error("weight.type", "unknown weight model '" + type + "' (constant, rademacher, dense_limit, table)");
}

SpikeModel build_spike(const json& spec) {
  const std::string type = type_of(spec, "spike");
  if (type == "gaussian") {
    reject_unknown(spec, "spike", {"type", "variance"});
    return SpikeModel::gaussian(number(spec, "spike", "variance", 1.0));
  }
  if (type == "rademacher") {
    reject_unknown(spec, "spike", {"type", "variance"});
    return SpikeModel::rademacher(number(spec, "spike", "variance", 1.0));
  }
  if (type == "table") {
    reject_unknown(spec, "spike", {"type", "values", "p"});
    if (!spec.contains("values")) field_error("spike.values", "missing");
    if (!spec.contains("p")) field_error("spike.p", "missing");
    return SpikeModel::custom(number_list(spec.at("values"), "spike.values"), number_list(spec.at("p"), "spike.p"));
  }
  field_error("spike.type", "unknown spike model '" + type + "' (gaussian, rademacher, table)");
}

PopDynConfig parse_popdyn(const json& spec) {
  if (!spec.is_object()) field_error("popdyn", "expected an object");
  reject_unknown(spec, "popdyn",
                 {"N_p", "omega_init", "h_init", "q_init", "lambda_init", "plateau_window", "plateau_tol", "max_sweeps",
                  "alpha_tol", "max_rescales", "alpha_samples", "lambda_backoff", "rescale_h", "structural_burn_in",
                  "structural_generations", "structural_tol", "structural_max_bisections"});
  PopDynConfig p;
  const long long np = integer(spec, "popdyn", "N_p", static_cast<long long>(p.population_size));
  if (np < 1) field_error("popdyn.N_p", "must be positive");
  p.population_size = static_cast<std::size_t>(np);
  auto range = [&](const char* key, double& lo, double& hi) {
    if (!spec.contains(key)) return;
    const auto v = number_list(spec.at(key), std::string("popdyn.") + key);
    if (v.size() != 2) field_error(std::string("popdyn.") + key, "expected [min, max]");
    lo = v[0];
    hi = v[1];
  };
  range("omega_init", p.omega_init_min, p.omega_init_max);
  range("h_init", p.h_init_min, p.h_init_max);
  p.q_init = number(spec, "popdyn", "q_init", p.q_init);
  p.lambda_init = number(spec, "popdyn", "lambda_init", p.lambda_init);
  p.plateau_window = static_cast<int>(integer(spec, "popdyn", "plateau_window", p.plateau_window));
  p.plateau_tol = number(spec, "popdyn", "plateau_tol", p.plateau_tol);
  p.max_sweeps = static_cast<int>(integer(spec, "popdyn", "max_sweeps", p.max_sweeps));
  p.alpha_tol = number(spec, "popdyn", "alpha_tol", p.alpha_tol);
  p.max_rescales = static_cast<int>(integer(spec, "popdyn", "max_rescales", p.max_rescales));
  const long long samples = integer(spec, "popdyn", "alpha_samples", static_cast<long long>(p.alpha_samples));
  if (samples < 2) field_error("popdyn.alpha_samples", "must be at least 2");
  p.alpha_samples = static_cast<std::size_t>(samples);
  p.lambda_backoff = number(spec, "popdyn", "lambda_backoff", p.lambda_backoff);
  p.rescale_h = boolean(spec, "popdyn", "rescale_h", p.rescale_h);
  p.structural_burn_in = static_cast<int>(integer(spec, "popdyn", "structural_burn_in", p.structural_burn_in));
  p.structural_generations =
      static_cast<int>(integer(spec, "popdyn", "structural_generations", p.structural_generations));
  p.structural_tol = number(spec, "popdyn", "structural_tol", p.structural_tol);
  p.structural_max_bisections =
      static_cast<int>(integer(spec, "popdyn", "structural_max_bisections", p.structural_max_bisections));
  p.validate();
  return p;
}

LanczosOptions parse_lanczos(const json& spec) {
  if (!spec.is_object()) field_error("lanczos", "expected an object");
  reject_unknown(spec, "lanczos", {"tol", "krylov_dim", "max_matvecs"});
  LanczosOptions o;
  o.tol = number(spec, "lanczos", "tol", o.tol);
  o.krylov_dim = static_cast<int>(integer(spec, "lanczos", "krylov_dim", o.krylov_dim));
  o.max_matvecs = static_cast<int>(integer(spec, "lanczos", "max_matvecs", o.max_matvecs));
  if (!(o.tol > 0.0)) field_error("lanczos.tol", "must be positive");
  if (o.krylov_dim < 2) field_error("lanczos.krylov_dim", "must be at least 2");
  if (o.max_matvecs < 1) field_error("lanczos.max_matvecs", "must be positive");
  return o;
}

// ---------------------------------------------------------------------------
// Output

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(std::optional<double> v) { return v ? fmt(*v) : "nan"; }

class CsvFile {
 public:
  CsvFile(const ExperimentConfig& config, const std::string& name, const std::vector<std::string>& columns)
      : path_(config.out_dir / name), out_(path_) {
    if (!out_) throw ConfigError("cannot write " + path_.string());
    out_ << "# config: " << config.header_json().dump() << "\n";
    out_ << "# seed: " << config.seed << "\n";
    row(columns);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
    if (!out_) throw ConfigError("failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct Stats {
  double mean = 0.0, std = 0.0, se = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(v.size() - 1));
    s.se = s.std / std::sqrt(static_cast<double>(v.size()));
  } else {
    s.std = kNaN;
    s.se = kNaN;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Grid helpers

std::vector<std::optional<double>> c_grid(const ExperimentConfig& config) {
  if (config.c.empty()) return {std::nullopt};
  std::vector<std::optional<double>> out;
  for (double c : config.c) out.emplace_back(c);
  return out;
}

bool unit_regular(const Ensemble& e) {
  return e.degree.kind() == DegreeModel::Kind::regular && e.weight.kind() == WeightModel::Kind::constant &&
         e.weight.mean() == 1.0;
}

double structural_for(const ExperimentConfig& config, const Ensemble& ensemble, std::size_t c_index) {
  if (unit_regular(ensemble)) return static_cast<double>(ensemble.degree.k_max());
  PopStreams streams = PopStreams::from_seed(seed_derivation(config.seed, c_index, "structural"));
  return structural_eigenvalue(ensemble, config.popdyn, streams);
}

AnalyticReport analytic_for(const Ensemble& ensemble, double theta, double structural) {
  if (unit_regular(ensemble)) return rr_report(ensemble.degree.k_max(), ensemble.spike.variance(), theta);
  return general_report(theta, ensemble, structural);
}

struct InstanceResult {
  std::uint64_t seed = 0;
  EigReport report;
};

std::uint64_t instance_index(std::size_t c_index, std::size_t instance) {
  return (static_cast<std::uint64_t>(c_index) << 32) | static_cast<std::uint64_t>(instance);
}

// One task per (c, theta, instance), c-major; v_top is kept only when asked.
std::vector<InstanceResult> diagonalise_grid(const ExperimentConfig& config, bool keep_vectors) {
  const auto cs = c_grid(config);
  std::vector<Ensemble> ensembles;
  for (const auto& c : cs) ensembles.push_back(build_ensemble(config, c));
  const std::size_t nt = config.theta.size();
  const std::size_t ni = static_cast<std::size_t>(config.instances);
  const std::size_t total = cs.size() * nt * ni;
  if (config.dump_instances) std::filesystem::create_directories(config.out_dir / "instances");

  std::function<InstanceResult(std::size_t)> task = [&](std::size_t idx) {
    const std::size_t inst = idx % ni;
    const std::size_t ti = (idx / ni) % nt;
    const std::size_t ci = idx / (ni * nt);
    const std::uint64_t index = instance_index(ci, inst);
    const InstanceSeeds seeds = instance_seeds(config.seed, index);
    const SpikedMatrix a = generate_instance(ensembles[ci], config.n, config.theta[ti], seeds, config.sampler);
    if (config.dump_instances) {
      const auto prefix = config.out_dir / "instances" /
                          ("c" + std::to_string(ci) + "_t" + std::to_string(ti) + "_i" + std::to_string(inst));
      write_instance(prefix, a, seed_derivation(config.seed, index, "instance"));
    }
    InstanceResult r;
    r.seed = seed_derivation(config.seed, index, "instance");
    r.report = eig_report(a, config.lanczos);
    if (!keep_vectors) r.report.v_top.clear();
    return r;
  };
  return parallel_map<InstanceResult>(total, config.workers, task);
}

std::vector<SweepRow> rows_from(const ExperimentConfig& config, const std::vector<InstanceResult>& results,
                                bool with_analytic);

void log_report(std::ostream& log, const std::optional<double>& c, const AnalyticReport& r) {
  if (c) log << "c=" << fmt(*c) << "\n";
  log << "pipeline=" << r.pipeline << "\n"
      << "theta=" << fmt(r.theta) << "\n"
      << "sigma2=" << fmt(r.sigma2) << "\n"
      << "theta_crit=" << fmt(r.theta_crit) << "\n"
      << "theta_b=" << fmt(r.theta_b) << "\n"
      << "lambda_structural=" << fmt(r.lambda_structural) << "\n"
      << "lambda_theta=" << fmt(r.lambda_theta) << "\n"
      << "lambda_top=" << fmt(r.lambda_top) << "\n"
      << "overlap_sq=" << fmt(r.overlap_sq) << "\n"
      << "c_crit=" << fmt(r.c_crit) << "\n"
      << "c_b=" << fmt(r.c_b) << "\n"
      << "bulk_edge=" << fmt(r.bulk_edge) << "\n\n";
}

// ---------------------------------------------------------------------------
// Modes

void run_analytic(const ExperimentConfig& config, std::ostream& log) {
  const auto cs = c_grid(config);
  const std::vector<std::string> cols{"c",        "theta",       "pipeline",  "theta_crit",   "theta_b",
                                      "lambda_structural", "lambda_theta", "lambda_top", "overlap_sq", "c_crit",
                                      "c_b",      "bulk_edge",   "m_iterations", "m_residual", "fd_relative_gap"};
  CsvFile csv(config, "analytic.csv", cols);
  for (std::size_t ci = 0; ci < cs.size(); ++ci) {
    const Ensemble e = build_ensemble(config, cs[ci]);
    const double structural = structural_for(config, e, ci);
    for (double theta : config.theta) {
      const AnalyticReport r = analytic_for(e, theta, structural);
      log_report(log, cs[ci], r);
      csv.row({fmt(cs[ci] ? *cs[ci] : connectivity(e.degree)), fmt(theta), r.pipeline, fmt(r.theta_crit),
               fmt(r.theta_b), fmt(r.lambda_structural), fmt(r.lambda_theta), fmt(r.lambda_top), fmt(r.overlap_sq),
               fmt(r.c_crit), fmt(r.c_b), fmt(r.bulk_edge), std::to_string(r.m_iterations), fmt(r.m_residual),
               fmt(r.fd_relative_gap)});
    }
  }
}

struct PopdynPoint {
  double c = 0.0;
  double theta = 0.0;
  std::optional<SolveResult> solved;
  std::optional<StructuralResult> structural;
  std::uint64_t seed = 0;
};

std::vector<PopdynPoint> popdyn_grid(const ExperimentConfig& config) {
  const auto cs = c_grid(config);
  const std::size_t nt = config.theta.size();
  std::function<PopdynPoint(std::size_t)> task = [&](std::size_t idx) {
    const std::size_t ci = idx / nt;
    const std::size_t ti = idx % nt;
    const Ensemble e = build_ensemble(config, cs[ci]);
    PopdynPoint p;
    p.c = cs[ci] ? *cs[ci] : connectivity(e.degree);
    p.theta = config.theta[ti];
    p.seed = seed_derivation(config.seed, idx, "popdyn");
    PopStreams streams = PopStreams::from_seed(p.seed);
    if (p.theta == 0.0) {
      p.structural = solve_structural(e, config.popdyn, streams);
      return p;
    }
    std::optional<WarmStart> warm;
    if (config.warm_start) {
      const AnalyticReport r = analytic_for(e, p.theta, structural_for(config, e, ci));
      if (r.lambda_theta && r.overlap_sq > 0.0) warm = WarmStart{*r.lambda_theta, std::sqrt(r.overlap_sq)};
    }
    p.solved = solve(p.theta, e, config.popdyn, streams, warm);
    return p;
  };
  return parallel_map<PopdynPoint>(cs.size() * nt, config.workers, task);
}

const Population& population_of(const PopdynPoint& p) {
  return p.solved ? p.solved->population : p.structural->population;
}

void run_popdyn(const ExperimentConfig& config, std::ostream& log) {
  const auto points = popdyn_grid(config);
  CsvFile csv(config, "popdyn.csv",
              {"c", "theta", "lambda", "q", "alpha1", "alpha1_se", "alpha2", "alpha2_se", "rounds", "sweeps",
               "checkpoint"});
  CsvFile traj(config, "popdyn_trajectory.csv",
               {"c", "theta", "round", "q", "lambda", "alpha1", "alpha1_se", "alpha2", "alpha2_se", "sweeps",
                "lambda_backoffs"});
  for (std::size_t i = 0; i < points.size(); ++i) {
    const PopdynPoint& p = points[i];
    const std::string checkpoint = "popdyn_" + std::to_string(i) + ".pop";
    write_checkpoint(config.out_dir / checkpoint, population_of(p), p.seed);
    if (p.solved) {
      const SolveResult& s = *p.solved;
      int sweeps = 0;
      for (const auto& r : s.trajectory) {
        sweeps += r.sweeps;
        traj.row({fmt(p.c), fmt(p.theta), std::to_string(r.round), fmt(r.q), fmt(r.lambda), fmt(r.alpha1.mean),
                  fmt(r.alpha1.std_err), fmt(r.alpha2.mean), fmt(r.alpha2.std_err), std::to_string(r.sweeps),
                  std::to_string(r.lambda_backoffs)});
      }
      csv.row({fmt(p.c), fmt(p.theta), fmt(s.lambda), fmt(s.q), fmt(s.alpha1.mean), fmt(s.alpha1.std_err),
               fmt(s.alpha2.mean), fmt(s.alpha2.std_err), std::to_string(s.trajectory.size()), std::to_string(sweeps),
               checkpoint});
      log << "c=" << fmt(p.c) << " theta=" << fmt(p.theta) << " lambda=" << fmt(s.lambda) << " q=" << fmt(s.q)
          << "\n";
    } else {
      const StructuralResult& s = *p.structural;
      csv.row({fmt(p.c), fmt(p.theta), fmt(s.lambda), "0", "nan", "nan", "nan", "nan", "0",
               std::to_string(s.population.sweep_count), checkpoint});
      log << "c=" << fmt(p.c) << " theta=0 lambda_structural=" << fmt(s.lambda) << "\n";
    }
  }
}

void run_diag(const ExperimentConfig& config, std::ostream& log) {
  const auto results = diagonalise_grid(config, false);
  const auto cs = c_grid(config);
  const std::size_t nt = config.theta.size();
  const std::size_t ni = static_cast<std::size_t>(config.instances);
  CsvFile inst(config, "diag_instances.csv",
               {"c", "theta", "instance", "seed", "lambda_top", "lambda_second", "overlap", "overlap_signed",
                "overlap_sq", "residual_top", "residual_second", "matvecs", "near_degenerate"});
  for (std::size_t idx = 0; idx < results.size(); ++idx) {
    const std::size_t ci = idx / (ni * nt);
    const std::size_t ti = (idx / ni) % nt;
    const Ensemble e = build_ensemble(config, cs[ci]);
    const EigReport& r = results[idx].report;
    inst.row({fmt(cs[ci] ? *cs[ci] : connectivity(e.degree)), fmt(config.theta[ti]), std::to_string(idx % ni),
              std::to_string(results[idx].seed), fmt(r.lambda_top), fmt(r.lambda_second), fmt(r.overlap),
              fmt(r.overlap_signed), fmt(r.overlap_sq), fmt(r.residual_top), fmt(r.residual_second),
              std::to_string(r.iterations), r.near_degenerate ? "1" : "0"});
  }
  const auto rows = rows_from(config, results, false);
  CsvFile summary(config, "diag.csv",
                  {"c", "theta", "instances", "mean_lambda_top", "std_lambda_top", "se_lambda_top",
                   "mean_lambda_second", "std_lambda_second", "se_lambda_second", "mean_overlap", "se_overlap",
                   "mean_overlap_signed", "se_overlap_signed", "mean_overlap_sq", "std_overlap_sq", "se_overlap_sq",
                   "flagged"});
  for (const SweepRow& r : rows) {
    summary.row({fmt(r.c), fmt(r.theta), std::to_string(r.instances), fmt(r.mean_lambda_top), fmt(r.std_lambda_top),
                 fmt(r.se_lambda_top), fmt(r.mean_lambda_second), fmt(r.std_lambda_second),
                 fmt(r.se_lambda_second), fmt(r.mean_overlap), fmt(r.se_overlap), fmt(r.mean_overlap_signed),
                 fmt(r.se_overlap_signed), fmt(r.mean_overlap_sq), fmt(r.std_overlap_sq), fmt(r.se_overlap_sq),
                 r.flagged ? "1" : "0"});
    log << "c=" << fmt(r.c) << " theta=" << fmt(r.theta) << " mean_lambda_top=" << fmt(r.mean_lambda_top)
        << " mean_overlap_sq=" << fmt(r.mean_overlap_sq) << "\n";
  }
}

void run_sweep_mode(const ExperimentConfig& config, std::ostream& log) {
  const auto rows = run_sweep(config, true);
  CsvFile csv(config, "sweep.csv",
              {"theta", "c", "mean_lambda_top", "std_lambda_top", "se_lambda_top", "mean_lambda_second",
               "std_lambda_second", "se_lambda_second", "mean_overlap", "mean_overlap_sq", "std_overlap_sq",
               "se_overlap_sq", "analytic_lambda_theta", "analytic_lambda_top", "analytic_overlap_sq", "theta_crit",
               "theta_b", "flagged"});
  for (const SweepRow& r : rows)
    csv.row({fmt(r.theta), fmt(r.c), fmt(r.mean_lambda_top), fmt(r.std_lambda_top), fmt(r.se_lambda_top),
             fmt(r.mean_lambda_second), fmt(r.std_lambda_second), fmt(r.se_lambda_second), fmt(r.mean_overlap),
             fmt(r.mean_overlap_sq), fmt(r.std_overlap_sq), fmt(r.se_overlap_sq), fmt(r.analytic_lambda_theta),
             fmt(r.analytic_lambda_top), fmt(r.analytic_overlap_sq), fmt(r.theta_crit), fmt(r.theta_b),
             r.flagged ? "1" : "0"});
  log << "sweep: " << rows.size() << " grid points written to " << (config.out_dir / "sweep.csv").string() << "\n";
}

void run_densities(const ExperimentConfig& config, std::ostream& log) {
  const auto points = popdyn_grid(config);
  const auto cs = c_grid(config);
  const std::size_t nt = config.theta.size();

  std::vector<InstanceResult> empirical;
  if (config.instances > 0) empirical = diagonalise_grid(config, true);
  const std::size_t ni = static_cast<std::size_t>(config.instances);

  CsvFile hist(config, "densities_hist.csv", {"c", "theta", "density", "k", "bin_left", "bin_right", "mass"});
  CsvFile cdf(config, "densities_cdf.csv", {"c", "theta", "quantity", "x", "F"});
  CsvFile dump(config, "densities_samples.csv", {"c", "theta", "density", "u", "k"});
  CsvFile summary(config, "densities_summary.csv",
                  {"c", "theta", "lambda", "q", "mean_u2", "mean_u2_se", "ov_mean", "ov_mean_se", "ov_sq",
                   "ov_sq_se", "ov_second", "ov_second_se", "omega_atom_value", "omega_atom_mass", "r1", "ks_top", "ks_ov"});

  for (std::size_t i = 0; i < points.size(); ++i) {
    const PopdynPoint& p = points[i];
    const Ensemble e = build_ensemble(config, cs[i / nt]);
    const Population& pop = population_of(p);
    Rng rng = derived_stream(config.seed, i, "densities");
    const DensityEstimate top = rho_top(pop, e, config.density_samples, rng);
    const DensityEstimate ov = rho_ov(pop, e, config.density_samples, rng);
    const Marginals marg = marginals(pop, config.cdf_points);

    auto emit = [&](const std::string& name, const DensityEstimate& d) {
      for (std::size_t b = 0; b < d.histogram.mass.size(); ++b)
        hist.row({fmt(p.c), fmt(p.theta), name, "all", fmt(d.histogram.edges[b]), fmt(d.histogram.edges[b + 1]),
                  fmt(d.histogram.mass[b])});
      for (const auto& [k, h] : d.by_degree)
        for (std::size_t b = 0; b < h.mass.size(); ++b)
          hist.row({fmt(p.c), fmt(p.theta), name, std::to_string(k), fmt(h.edges[b]), fmt(h.edges[b + 1]),
                    fmt(h.mass[b])});
      for (const CdfPoint& pt : empirical_cdf(d.samples, config.cdf_points))
        cdf.row({fmt(p.c), fmt(p.theta), name, fmt(pt.x), fmt(pt.f)});
      const std::size_t cap = std::min(config.sample_dump_cap, d.samples.size());
      for (std::size_t s = 0; s < cap; ++s)
        dump.row({fmt(p.c), fmt(p.theta), name, fmt(d.samples[s]), std::to_string(d.degrees[s])});
    };
    emit("rho_top", top);
    emit("rho_ov", ov);
    for (const CdfPoint& pt : marg.omega_cdf) cdf.row({fmt(p.c), fmt(p.theta), "omega", fmt(pt.x), fmt(pt.f)});
    for (const CdfPoint& pt : marg.h_cdf) cdf.row({fmt(p.c), fmt(p.theta), "h", fmt(pt.x), fmt(pt.f)});

    double ks_top = kNaN, ks_ov = kNaN;
    if (!empirical.empty()) {
      std::vector<double> comp, ov_comp;
      const std::size_t base = i * ni;
      for (std::size_t inst = 0; inst < ni; ++inst) {
        const EigReport& r = empirical[base + inst].report;
        const SpikedMatrix a =
            generate_instance(e, config.n, p.theta, instance_seeds(config.seed, instance_index(i / nt, inst)),
                              config.sampler);
        const EmpiricalObservables obs = empirical_observables(a, r);
        comp.insert(comp.end(), obs.component_samples.begin(), obs.component_samples.end());
        ov_comp.insert(ov_comp.end(), obs.overlap_component_samples.begin(), obs.overlap_component_samples.end());
      }
      ks_top = ks_distance(top.samples, comp);
      ks_ov = ks_distance(ov.samples, ov_comp);
      const Histogram eh = histogram_on(comp, top.histogram.edges);
      for (std::size_t b = 0; b < eh.mass.size(); ++b)
        hist.row({fmt(p.c), fmt(p.theta), "empirical_top", "all", fmt(eh.edges[b]), fmt(eh.edges[b + 1]),
                  fmt(eh.mass[b])});
      const Histogram eo = histogram_on(ov_comp, ov.histogram.edges);
      for (std::size_t b = 0; b < eo.mass.size(); ++b)
        hist.row({fmt(p.c), fmt(p.theta), "empirical_ov", "all", fmt(eo.edges[b]), fmt(eo.edges[b + 1]),
                  fmt(eo.mass[b])});
    }

    const OverlapMoments mt = sample_moments(top.samples);
    const OverlapMoments mo = overlap_moments(ov);
    const auto r = e.degree.has_degree_corrected() ? e.degree.degree_corrected() : std::span<const double>{};
    const double r1 = r.size() > 1 ? r[1] : 0.0;
    summary.row({fmt(p.c), fmt(p.theta), fmt(pop.lambda), fmt(pop.q), fmt(mt.second_moment),
                 fmt(mt.second_moment_std_err), fmt(mo.mean), fmt(mo.mean_std_err), fmt(mo.squared_overlap),
                 fmt(mo.squared_overlap_std_err), fmt(mo.second_moment),
                 fmt(mo.second_moment_std_err), fmt(marg.omega_atom_value), fmt(marg.omega_atom_mass), fmt(r1),
                 fmt(ks_top), fmt(ks_ov)});
    log << "c=" << fmt(p.c) << " theta=" << fmt(p.theta) << " E[u^2]=" << fmt(mt.second_moment)
        << " ks_top=" << fmt(ks_top) << " ks_ov=" << fmt(ks_ov) << "\n";
  }
}

}  // namespace

Mode parse_mode(const std::string& name) {
  if (name == "analytic") return Mode::analytic;
  if (name == "popdyn") return Mode::popdyn;
  if (name == "diag") return Mode::diag;
  if (name == "densities") return Mode::densities;
  if (name == "sweep") return Mode::sweep;
  field_error("mode", "unknown mode '" + name + "' (analytic, popdyn, diag, densities, sweep)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::analytic: return "analytic";
    case Mode::popdyn: return "popdyn";
    case Mode::diag: return "diag";
    case Mode::densities: return "densities";
    case Mode::sweep: return "sweep";
  }
  return "?";
}

json ExperimentConfig::header_json() const {
  json j;
  j["mode"] = mode_name(mode);
  j["degree"] = degree;
  j["weight"] = weight;
  j["spike"] = spike;
  j["theta"] = theta;
  j["c"] = c;
  j["N"] = n;
  j["instances"] = instances;
  j["seed"] = seed;
  j["sampler"] = sampler == GraphSampler::automatic ? "automatic"
                 : sampler == GraphSampler::rejection ? "rejection"
                                                      : "sequential";
  j["popdyn"] = {{"N_p", popdyn.population_size},
                 {"omega_init", {popdyn.omega_init_min, popdyn.omega_init_max}},
                 {"h_init", {popdyn.h_init_min, popdyn.h_init_max}},
                 {"q_init", popdyn.q_init},
                 {"lambda_init", popdyn.lambda_init},
                 {"plateau_window", popdyn.plateau_window},
                 {"plateau_tol", popdyn.plateau_tol},
                 {"max_sweeps", popdyn.max_sweeps},
                 {"alpha_tol", popdyn.alpha_tol},
                 {"max_rescales", popdyn.max_rescales},
                 {"alpha_samples", popdyn.alpha_samples},
                 {"lambda_backoff", popdyn.lambda_backoff},
                 {"rescale_h", popdyn.rescale_h},
                 {"structural_burn_in", popdyn.structural_burn_in},
                 {"structural_generations", popdyn.structural_generations},
                 {"structural_tol", popdyn.structural_tol},
                 {"structural_max_bisections", popdyn.structural_max_bisections}};
  j["lanczos"] = {{"tol", lanczos.tol}, {"krylov_dim", lanczos.krylov_dim}, {"max_matvecs", lanczos.max_matvecs}};
  j["density_samples"] = density_samples;
  j["sample_dump_cap"] = sample_dump_cap;
  j["cdf_points"] = cdf_points;
  j["warm_start"] = warm_start;
  j["dump_instances"] = dump_instances;
  return j;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  reject_unknown(doc, "",
                 {"mode", "degree", "weight", "spike", "theta", "c", "N", "instances", "popdyn", "lanczos", "seed",
                  "out_dir", "workers", "sampler", "density_samples", "sample_dump_cap", "cdf_points", "warm_start",
                  "dump_instances"});
  ExperimentConfig cfg;
  if (!doc.contains("mode") || !doc.at("mode").is_string()) field_error("mode", "missing or not a string");
  cfg.mode = parse_mode(doc.at("mode").get<std::string>());
  if (!doc.contains("degree")) field_error("degree", "missing");
  cfg.degree = doc.at("degree");
  cfg.weight = doc.contains("weight") ? doc.at("weight") : json{{"type", "constant"}, {"w", 1.0}};
  cfg.spike = doc.contains("spike") ? doc.at("spike") : json{{"type", "gaussian"}, {"variance", 1.0}};
  if (doc.contains("theta")) cfg.theta = number_list(doc.at("theta"), "theta");
  for (double t : cfg.theta)
    if (t < 0.0) field_error("theta", "values must be >= 0");
  if (doc.contains("c")) cfg.c = number_list(doc.at("c"), "c");
  for (double c : cfg.c)
    if (!(c > 0.0)) field_error("c", "values must be positive");
  cfg.n = static_cast<int>(integer(doc, "", "N", cfg.n));
  if (cfg.n < 2) field_error("N", "must be >= 2");
  cfg.instances = static_cast<int>(integer(doc, "", "instances", cfg.instances));
  const bool needs_instances = cfg.mode == Mode::diag || cfg.mode == Mode::sweep;
  if (cfg.instances < (needs_instances ? 1 : 0)) field_error("instances", needs_instances ? "must be >= 1" : "must be >= 0");
  if (doc.contains("popdyn")) cfg.popdyn = parse_popdyn(doc.at("popdyn"));
  if (doc.contains("lanczos")) cfg.lanczos = parse_lanczos(doc.at("lanczos"));
  const long long seed = integer(doc, "", "seed", 1);
  if (seed < 0) field_error("seed", "must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  if (doc.contains("out_dir")) {
    if (!doc.at("out_dir").is_string()) field_error("out_dir", "expected a string");
    cfg.out_dir = doc.at("out_dir").get<std::string>();
  }
  cfg.workers = static_cast<int>(integer(doc, "", "workers", 1));
  if (cfg.workers < 1) field_error("workers", "must be >= 1");
  if (doc.contains("sampler")) {
    const json& s = doc.at("sampler");
    const std::string name = s.is_string() ? s.get<std::string>() : "";
    if (name == "automatic") cfg.sampler = GraphSampler::automatic;
    else if (name == "rejection") cfg.sampler = GraphSampler::rejection;
    else if (name == "sequential") cfg.sampler = GraphSampler::sequential;
    else field_error("sampler", "expected automatic, rejection or sequential");
  }
  const long long ds = integer(doc, "", "density_samples", static_cast<long long>(cfg.density_samples));
  if (ds < 1) field_error("density_samples", "must be positive");
  cfg.density_samples = static_cast<std::size_t>(ds);
  const long long cap = integer(doc, "", "sample_dump_cap", static_cast<long long>(cfg.sample_dump_cap));
  if (cap < 0) field_error("sample_dump_cap", "must be >= 0");
  cfg.sample_dump_cap = static_cast<std::size_t>(cap);
  const long long cp = integer(doc, "", "cdf_points", static_cast<long long>(cfg.cdf_points));
  if (cp < 1) field_error("cdf_points", "must be positive");
  cfg.cdf_points = static_cast<std::size_t>(cp);
  cfg.warm_start = boolean(doc, "", "warm_start", false);
  cfg.dump_instances = boolean(doc, "", "dump_instances", false);

  // Build every grid ensemble once so model errors surface at parse time.
  for (const auto& c : c_grid(cfg)) build_ensemble(cfg, c);
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

Ensemble build_ensemble(const ExperimentConfig& config, std::optional<double> c) {
  DegreeModel degree = build_degree(config.degree, c);
  WeightModel weight = build_weight(config.weight, degree);
  SpikeModel spike = build_spike(config.spike);
  return Ensemble{std::move(degree), std::move(weight), std::move(spike)};
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const DimensionMismatch*>(&error)) return 2;
  if (dynamic_cast<const NonConvergence*>(&error)) return 3;
  if (dynamic_cast<const GenerationFailure*>(&error)) return 4;
  if (dynamic_cast<const std::invalid_argument*>(&error)) return 2;
  return 1;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, bool with_analytic) {
  return rows_from(config, diagonalise_grid(config, false), with_analytic);
}

namespace {

std::vector<SweepRow> rows_from(const ExperimentConfig& config, const std::vector<InstanceResult>& results,
                                bool with_analytic) {
  const auto cs = c_grid(config);
  const std::size_t nt = config.theta.size();
  const std::size_t ni = static_cast<std::size_t>(config.instances);
  std::vector<SweepRow> rows;
  for (std::size_t ci = 0; ci < cs.size(); ++ci) {
    const Ensemble e = build_ensemble(config, cs[ci]);
    std::optional<double> structural;
    if (with_analytic) structural = structural_for(config, e, ci);
    for (std::size_t ti = 0; ti < nt; ++ti) {
      std::vector<double> top, second, ov, ovs, ov2;
      for (std::size_t inst = 0; inst < ni; ++inst) {
        const EigReport& r = results[(ci * nt + ti) * ni + inst].report;
        top.push_back(r.lambda_top);
        second.push_back(r.lambda_second);
        ov.push_back(r.overlap);
        ovs.push_back(r.overlap_signed);
        ov2.push_back(r.overlap_sq);
      }
      SweepRow row;
      row.theta = config.theta[ti];
      row.c = cs[ci] ? *cs[ci] : connectivity(e.degree);
      row.instances = static_cast<int>(ni);
      row.flagged = ni < 2;
      const Stats st = stats(top), ss = stats(second), so = stats(ov), sos = stats(ovs), s2 = stats(ov2);
      row.mean_lambda_top = st.mean;
      row.std_lambda_top = st.std;
      row.se_lambda_top = st.se;
      row.mean_lambda_second = ss.mean;
      row.std_lambda_second = ss.std;
      row.se_lambda_second = ss.se;
      row.mean_overlap = so.mean;
      row.se_overlap = so.se;
      row.mean_overlap_signed = sos.mean;
      row.se_overlap_signed = sos.se;
      row.mean_overlap_sq = s2.mean;
      row.std_overlap_sq = s2.std;
      row.se_overlap_sq = s2.se;
      row.analytic_lambda_theta = kNaN;
      row.analytic_lambda_top = kNaN;
      row.analytic_overlap_sq = kNaN;
      row.theta_crit = kNaN;
      row.theta_b = kNaN;
      if (with_analytic) {
        const AnalyticReport r = analytic_for(e, row.theta, *structural);
        row.analytic_lambda_theta = r.lambda_theta ? *r.lambda_theta : kNaN;
        row.analytic_lambda_top = r.lambda_top;
        row.analytic_overlap_sq = r.overlap_sq;
        row.theta_crit = r.theta_crit;
        row.theta_b = r.theta_b ? *r.theta_b : kNaN;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace

void run(const ExperimentConfig& config, std::ostream& log) {
  std::filesystem::create_directories(config.out_dir);
  switch (config.mode) {
    case Mode::analytic: run_analytic(config, log); break;
    case Mode::popdyn: run_popdyn(config, log); break;
    case Mode::diag: run_diag(config, log); break;
    case Mode::densities: run_densities(config, log); break;
    case Mode::sweep: run_sweep_mode(config, log); break;
  }
}

}  // namespace sparsespike
