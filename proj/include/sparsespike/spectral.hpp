#pragma once

// Top and second eigenpairs of a SpikedMatrix and the empirical recovery
// observables built from them.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sparsespike/graphgen.hpp"

namespace sparsespike {

struct LanczosOptions {
  double tol = 1e-10;        // relative residual ||Av - lv|| / (|l| ||v||)
  int max_matvecs = 20000;   // NotConverged beyond this budget
  int krylov_dim = 100;      // basis size per restart cycle
  std::uint64_t start_seed = 0x5eedULL;
};

/// out = M v for a symmetric M.
using LinearMap = std::function<void(std::span<const double>, std::span<double>)>;

struct Eigenpair {
  double value = 0.0;
  std::vector<double> vector;  // scaled so that ||v||^2 = N
  double residual = 0.0;       // relative residual
  int matvecs = 0;
};

/// Largest eigenpair of `op` restricted to the orthogonal complement of
/// `locked` (any scaling), by thick-restarted Lanczos with full
/// reorthogonalisation. Throws NotConverged when the matvec budget runs out.
Eigenpair largest_eigenpair(int n, const LinearMap& op, std::span<const std::vector<double>> locked,
                            const LanczosOptions& options = {});

Eigenpair top_eigenpair(const SpikedMatrix& a, const LanczosOptions& options = {});

/// Largest eigenpair of A on the complement of v_top: the deflated operator
/// A - lambda_top v_top v_top^T / N with v_top itself excluded.
Eigenpair second_eigenpair(const SpikedMatrix& a, const Eigenpair& top, const LanczosOptions& options = {});
double second_eigenvalue(const SpikedMatrix& a, const Eigenpair& top, const LanczosOptions& options = {});

/// All eigenvalues in ascending order via dense symmetric decomposition.
/// Throws CapExceeded when N > cap.
std::vector<double> full_spectrum(const SpikedMatrix& a, int cap = 3000);

struct EigReport {
  double lambda_top = 0.0;
  double lambda_second = 0.0;
  std::vector<double> v_top;  // ||v||^2 = N, sign fixed so <x, v_top> >= 0
  double overlap = 0.0;       // <x, v_top>/N >= 0
  double overlap_sq = 0.0;
  /// <x, v>/N with the sign of v fixed by sum_i v_i >= 0, independent of x.
  /// Its mean vanishes below threshold, unlike the gauge-fixed overlap.
  double overlap_signed = 0.0;
  double residual_top = 0.0;
  double residual_second = 0.0;
  int iterations = 0;  // total matrix-vector products
  bool near_degenerate = false;  // lambda_top - lambda_second < 1e-6 |lambda_top|
};

EigReport eig_report(const SpikedMatrix& a, const LanczosOptions& options = {});

struct EmpiricalObservables {
  double overlap = 0.0;
  double overlap_sq = 0.0;
  std::vector<double> component_samples;          // v_top,i
  std::vector<double> overlap_component_samples;  // x_i v_top,i
};

/// Flips v_top first when <x, v_top> < 0.
EmpiricalObservables empirical_observables(const SpikedMatrix& a, const EigReport& report);

}  // namespace sparsespike
