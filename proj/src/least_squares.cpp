#include "w2s/least_squares.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "w2s/errors.hpp"

namespace w2s {

namespace {

struct Factor {
  Matrix l;
  std::vector<bool> dropped;
};

// Lower-triangular factor L with L L^T = a. A column whose pivot collapses is
// a combination of earlier ones: it is dropped when allowed, otherwise the
// factorization fails.
std::optional<Factor> cholesky(const Matrix& a, bool drop_dependent) {
  const std::size_t n = a.rows();
  Factor f{Matrix(n, n), std::vector<bool>(n, false)};
  Matrix& l = f.l;
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    // Twelve digits lost relative to the diagonal.
    if (!(pivot > 1e-12 * std::abs(a(j, j))) || !(pivot > 0.0)) {
      if (!drop_dependent) return std::nullopt;
      f.dropped[j] = true;
      l(j, j) = 1.0;
      continue;
    }
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / d;
    }
  }
  return f;
}

Vector cholesky_solve(const Factor& f, std::span<const double> b) {
  const Matrix& l = f.l;
  const std::size_t n = l.rows();
  Vector y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (f.dropped[i]) {
      y[i] = 0.0;
      continue;
    }
    for (std::size_t k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    if (f.dropped[i]) {
      y[i] = 0.0;
      continue;
    }
    for (std::size_t k = i + 1; k < n; ++k) y[i] -= l(k, i) * y[k];
    y[i] /= l(i, i);
  }
  return y;
}

// (1/n) X^T (y - X w) - damping * w: the negative half-gradient of the objective.
Vector normal_residual(const Matrix& x, std::span<const double> y, std::span<const double> w, double damping) {
  Vector r(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) r[i] = y[i] - dot(x.row(i), w);
  Vector g = matvec_t(x, r);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = g[j] * inv_n - damping * w[j];
  return g;
}

}  // namespace

LeastSquaresSolution solve_least_squares(const Matrix& features, std::span<const double> targets,
                                         const LeastSquaresOptions& options) {
  if (features.rows() != targets.size()) {
    throw DimensionError("least squares: " + std::to_string(features.rows()) + " rows but " +
                         std::to_string(targets.size()) + " targets");
  }
  if (features.rows() == 0 || features.cols() == 0) throw DimensionError("least squares: empty design");
  if (options.ridge < 0.0) throw std::invalid_argument("least squares: ridge must be non-negative");

  const Matrix design = options.fit_bias ? append_ones_column(features) : features;
  const std::size_t p = design.cols();
  const double inv_n = 1.0 / static_cast<double>(design.rows());

  Matrix gram = matmul_tn(design, design);
  double mean_diag = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = 0; k < p; ++k) gram(j, k) *= inv_n;
    mean_diag += gram(j, j);
  }
  mean_diag /= static_cast<double>(p);

  const double damping = options.ridge * mean_diag;
  for (std::size_t j = 0; j < p; ++j) gram(j, j) += damping;

  LeastSquaresSolution solution;
  const std::optional<Factor> factor = cholesky(gram, options.fallback_on_singular);
  if (!factor) {
    throw RankDeficientError("least squares: normal equations are singular (" + std::to_string(p) +
                             " columns, " + std::to_string(design.rows()) + " rows)");
  }
  for (bool d : factor->dropped) solution.dropped_columns += d ? 1 : 0;

  Vector rhs = matvec_t(design, targets);
  for (double& v : rhs) v *= inv_n;
  Vector w = cholesky_solve(*factor, rhs);
  for (int round = 0; round < 2; ++round) {
    const Vector correction = cholesky_solve(*factor, normal_residual(design, targets, w, damping));
    for (std::size_t j = 0; j < p; ++j) w[j] += correction[j];
  }

  for (double v : w) {
    if (!std::isfinite(v)) throw NonFiniteError("least squares: non-finite solution");
  }
  if (options.fit_bias) {
    solution.bias = w.back();
    w.pop_back();
  }
  solution.weights = std::move(w);
  return solution;
}

double orthogonality_residual(const Matrix& design, std::span<const double> weights,
                              std::span<const double> targets) {
  Vector r(design.rows());
  for (std::size_t i = 0; i < design.rows(); ++i) r[i] = dot(design.row(i), weights) - targets[i];
  return max_abs(matvec_t(design, r)) / (1.0 + max_abs(targets));
}

}  // namespace w2s
