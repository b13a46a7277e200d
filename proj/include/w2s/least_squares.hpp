#pragma once

#include <span>

#include "w2s/matrix.hpp"

namespace w2s {

struct LeastSquaresOptions {
  // Append a column of ones and return its coefficient separately.
  bool fit_bias = false;
  // Damping added to the mean-scaled normal matrix, relative to its mean
  // diagonal entry.
  double ridge = 0.0;
  // Instead of throwing when singular, give columns that are (numerically)
  // combinations of earlier ones a zero coefficient. The result is still an
  // exact minimizer.
  bool fallback_on_singular = false;
};

struct LeastSquaresSolution {
  Vector weights;
  double bias = 0.0;
  // Columns given a zero coefficient by the singular fallback.
  std::size_t dropped_columns = 0;
};

// Minimizes (1/n) * |features * w + bias - targets|^2 (+ ridge * |w, bias|^2)
// through the normal equations with a Cholesky factorization and two rounds
// of iterative refinement against the original data.
//
// Throws RankDeficientError when the normal matrix is singular and neither
// ridge nor fallback is in effect.
LeastSquaresSolution solve_least_squares(const Matrix& features, std::span<const double> targets,
                                         const LeastSquaresOptions& options = {});

// max |X^T (X w - y)| / (1 + max |y|), the scaled normal-equation residual.
double orthogonality_residual(const Matrix& design, std::span<const double> weights,
                              std::span<const double> targets);

}  // namespace w2s
