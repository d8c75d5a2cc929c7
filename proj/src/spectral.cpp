#include "sparsespike/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "sparsespike/errors.hpp"

namespace sparsespike {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Removes the components of w along the orthonormal columns of `basis`
// (first `cols` of them), twice; returns the accumulated coefficients.
VectorXd orthogonalize(const MatrixXd& basis, Eigen::Index cols, VectorXd& w) {
  VectorXd coef = VectorXd::Zero(cols);
  if (cols == 0) return coef;
  for (int pass = 0; pass < 2; ++pass) {
    const VectorXd h = basis.leftCols(cols).transpose() * w;
    w.noalias() -= basis.leftCols(cols) * h;
    coef += h;
  }
  return coef;
}

void project_out(const MatrixXd& locked, VectorXd& w) {
  if (locked.cols() == 0) return;
  for (int pass = 0; pass < 2; ++pass) w.noalias() -= locked * (locked.transpose() * w);
}

// Random unit vector orthogonal to `locked` and the first `cols` columns of
// `basis`; returns false when the complement is numerically empty.
bool random_orthogonal(Rng& rng, const MatrixXd& locked, const MatrixXd& basis, Eigen::Index cols, VectorXd& out) {
  std::normal_distribution<double> gauss;
  for (int attempt = 0; attempt < 4; ++attempt) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = gauss(rng);
    project_out(locked, out);
    orthogonalize(basis, cols, out);
    const double norm = out.norm();
    if (norm > 1e-8) {
      out /= norm;
      return true;
    }
  }
  return false;
}

}  // namespace

Eigenpair largest_eigenpair(int n, const LinearMap& op, std::span<const std::vector<double>> locked_vectors,
                            const LanczosOptions& options) {
  if (n < 1) throw ConfigError("eigensolver: empty operator");
  // Orthonormal basis of the excluded subspace.
  MatrixXd locked(n, static_cast<Eigen::Index>(locked_vectors.size()));
  {
    Eigen::Index kept = 0;
    for (const auto& v : locked_vectors) {
      if (v.size() != static_cast<std::size_t>(n)) throw DimensionMismatch("locked vector length differs from N");
      VectorXd u = Eigen::Map<const VectorXd>(v.data(), n);
      orthogonalize(locked, kept, u);
      const double norm = u.norm();
      if (norm == 0.0) continue;
      locked.col(kept++) = u / norm;
    }
    locked.conservativeResize(n, kept);
  }
  const Eigen::Index space = n - locked.cols();
  if (space < 1) throw ConfigError("eigensolver: deflation leaves an empty subspace");

  const Eigen::Index m = std::max<Eigen::Index>(1, std::min<Eigen::Index>(options.krylov_dim, space));
  const Eigen::Index keep = std::max<Eigen::Index>(1, std::min<Eigen::Index>(m / 2, m - 1));

  MatrixXd basis(n, m + 1);
  MatrixXd projected = MatrixXd::Zero(m, m);
  VectorXd w(n), tmp(n);
  Rng rng(options.start_seed);

  auto apply = [&](const VectorXd& in, VectorXd& out) {
    op(std::span<const double>(in.data(), static_cast<std::size_t>(n)), std::span<double>(out.data(), static_cast<std::size_t>(n)));
  };

  {
    VectorXd start(n);
    if (!random_orthogonal(rng, locked, basis, 0, start)) throw ConfigError("eigensolver: cannot draw a start vector");
    basis.col(0) = start;
  }

  Eigen::Index kept = 0;  // leading columns that are locked Ritz vectors after a restart
  int matvecs = 0;
  while (true) {
    Eigen::Index filled = m;
    double coupling = 0.0;  // weight of basis.col(filled) in A * basis.col(filled - 1)
    for (Eigen::Index j = kept; j < m; ++j) {
      apply(basis.col(j), w);
      ++matvecs;
      project_out(locked, w);
      const double raw_norm = w.norm();
      const VectorXd h = orthogonalize(basis, j + 1, w);
      projected.block(0, j, j + 1, 1) = h;
      projected.block(j, 0, 1, j + 1) = h.transpose();
      double beta = w.norm();
      if (beta <= 1e-12 * std::max(raw_norm, h.cwiseAbs().maxCoeff())) {
        // Invariant subspace: continue with a fresh direction, coupling zero.
        beta = 0.0;
        if (j + 1 >= space || !random_orthogonal(rng, locked, basis, j + 1, tmp)) {
          filled = j + 1;
          coupling = 0.0;
          break;
        }
        basis.col(j + 1) = tmp;
      } else {
        basis.col(j + 1) = w / beta;
      }
      coupling = beta;
    }

    Eigen::SelfAdjointEigenSolver<MatrixXd> ritz(projected.topLeftCorner(filled, filled));
    const VectorXd& values = ritz.eigenvalues();  // ascending
    const MatrixXd& vectors = ritz.eigenvectors();
    const Eigen::Index top = filled - 1;
    const double theta = values(top);
    const double spread = std::max(values.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double estimate = std::fabs(coupling * vectors(filled - 1, top));
    const bool exhausted = filled >= space;

    if (estimate <= options.tol * std::max(std::fabs(theta), 1e-3 * spread) || exhausted) {
      VectorXd y = basis.leftCols(filled) * vectors.col(top);
      y /= y.norm();
      apply(y, w);
      ++matvecs;
      const double residual_norm = (w - theta * y).norm();
      Eigenpair out;
      out.value = theta;
      out.residual = theta != 0.0 ? residual_norm / std::fabs(theta) : residual_norm;
      out.matvecs = matvecs;
      out.vector.resize(static_cast<std::size_t>(n));
      const double s = std::sqrt(static_cast<double>(n));
      for (int i = 0; i < n; ++i) out.vector[static_cast<std::size_t>(i)] = s * y(i);
      return out;
    }
    if (matvecs >= options.max_matvecs)
      throw NotConverged("Lanczos: residual " + std::to_string(estimate) + " above tolerance after " +
                         std::to_string(matvecs) + " matvecs");

    // Thick restart: keep the `keep` largest Ritz vectors plus the residual direction.
    const Eigen::Index p = std::min(keep, filled - 1);
    const MatrixXd ritz_vectors = basis.leftCols(filled) * vectors.rightCols(p);
    const VectorXd residual_direction = basis.col(filled);
    basis.leftCols(p) = ritz_vectors;
    basis.col(p) = residual_direction;
    projected.setZero();
    for (Eigen::Index i = 0; i < p; ++i) projected(i, i) = values(filled - p + i);
    kept = p;
  }
}

Eigenpair top_eigenpair(const SpikedMatrix& a, const LanczosOptions& options) {
  if (a.size() < 2) throw ConfigError("top_eigenpair: N must be >= 2");
  LinearMap op = [&a](std::span<const double> v, std::span<double> out) { a.apply(v, out); };
  return largest_eigenpair(a.size(), op, {}, options);
}

Eigenpair second_eigenpair(const SpikedMatrix& a, const Eigenpair& top, const LanczosOptions& options) {
  LinearMap op = [&a](std::span<const double> v, std::span<double> out) { a.apply(v, out); };
  const std::vector<std::vector<double>> locked{top.vector};
  return largest_eigenpair(a.size(), op, locked, options);
}

double second_eigenvalue(const SpikedMatrix& a, const Eigenpair& top, const LanczosOptions& options) {
  return second_eigenpair(a, top, options).value;
}

std::vector<double> full_spectrum(const SpikedMatrix& a, int cap) {
  const Eigen::MatrixXd dense = a.dense(cap);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  return std::vector<double>(ev.data(), ev.data() + ev.size());
}

EigReport eig_report(const SpikedMatrix& a, const LanczosOptions& options) {
  Eigenpair top = top_eigenpair(a, options);
  const Eigenpair second = second_eigenpair(a, top, options);
  const auto n = static_cast<double>(a.size());
  const auto x = a.spike();

  EigReport r;
  r.lambda_top = top.value;
  r.lambda_second = second.value;
  r.residual_top = top.residual;
  r.residual_second = second.residual;
  r.iterations = top.matvecs + second.matvecs;
  r.near_degenerate = (top.value - second.value) < 1e-6 * std::fabs(top.value);

  double sum = 0.0, proj = 0.0;
  std::size_t largest = 0;
  for (std::size_t i = 0; i < top.vector.size(); ++i) {
    sum += top.vector[i];
    proj += x[i] * top.vector[i];
    if (std::fabs(top.vector[i]) > std::fabs(top.vector[largest])) largest = i;
  }
  const bool structural_positive =
      std::fabs(sum) > 1e-8 * std::sqrt(n) ? sum > 0.0 : top.vector[largest] > 0.0;
  r.overlap_signed = (structural_positive ? proj : -proj) / n;
  if (proj < 0.0) {
    for (double& v : top.vector) v = -v;
    proj = -proj;
  }
  r.overlap = proj / n;
  r.overlap_sq = r.overlap * r.overlap;
  r.v_top = std::move(top.vector);
  return r;
}

EmpiricalObservables empirical_observables(const SpikedMatrix& a, const EigReport& report) {
  const auto x = a.spike();
  if (report.v_top.size() != x.size()) throw DimensionMismatch("report eigenvector length differs from N");
  double proj = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) proj += x[i] * report.v_top[i];
  const double sign = proj < 0.0 ? -1.0 : 1.0;

  EmpiricalObservables out;
  out.overlap = std::fabs(proj) / static_cast<double>(x.size());
  out.overlap_sq = out.overlap * out.overlap;
  out.component_samples.resize(x.size());
  out.overlap_component_samples.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.component_samples[i] = sign * report.v_top[i];
    out.overlap_component_samples[i] = x[i] * out.component_samples[i];
  }
  return out;
}

}  // namespace sparsespike
