#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "w2s/errors.hpp"
#include "w2s/least_squares.hpp"
#include "w2s/matrix.hpp"
#include "w2s/rng.hpp"

namespace w2s {
namespace {

// Independent reference: Gaussian elimination with partial pivoting on the
// raw (unscaled) normal equations X^T X w = X^T y.
Vector normal_equations_by_elimination(const Matrix& x, std::span<const double> y) {
  const std::size_t p = x.cols();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t r = 0; r < x.rows(); ++r) a[i][j] += x(r, i) * x(r, j);
    }
    for (std::size_t r = 0; r < x.rows(); ++r) a[i][p] += x(r, i) * y[r];
  }
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < p; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    for (std::size_t r = col + 1; r < p; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Vector w(p);
  for (std::size_t i = p; i-- > 0;) {
    double s = a[i][p];
    for (std::size_t j = i + 1; j < p; ++j) s -= a[i][j] * w[j];
    w[i] = s / a[i][i];
  }
  return w;
}

TEST(Matrix, ConstructorRejectsWrongLength) {
  EXPECT_THROW(Matrix(2, 2, Vector{1.0, 2.0, 3.0}), DimensionError);
}

TEST(Matrix, MatmulSmallExample) {
  const Matrix a(2, 3, Vector{1, 2, 3, 4, 5, 6});
  const Matrix b(3, 2, Vector{7, 8, 9, 10, 11, 12});
  EXPECT_EQ(matmul(a, b), Matrix(2, 2, Vector{58, 64, 139, 154}));
  EXPECT_EQ(matmul_tn(a.transpose(), b), matmul(a, b));
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Matrix, MatvecAndTranspose) {
  const Matrix a(2, 3, Vector{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(matvec(a, Vector{1, 0, -1}), (Vector{-2, -2}));
  EXPECT_EQ(matvec_t(a, Vector{1, 1}), (Vector{5, 7, 9}));
  EXPECT_EQ(a.transpose().transpose(), a);
}

TEST(Matrix, ProductAssociativityOnRandomTriples) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = gaussian_matrix(7, 5, 0.0, 1.0, rng);
    const Matrix b = gaussian_matrix(5, 6, 0.0, 1.0, rng);
    const Matrix c = gaussian_matrix(6, 4, 0.0, 1.0, rng);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    const double scale = std::max(max_abs(left.data()), 1.0);
    for (std::size_t i = 0; i < left.size(); ++i) {
      EXPECT_LE(std::abs(left.data()[i] - right.data()[i]), 1e-10 * scale);
    }
  }
}

TEST(Matrix, AppendOnesAndRowOps) {
  const Matrix a(2, 1, Vector{3, 4});
  EXPECT_EQ(append_ones_column(a), Matrix(2, 2, Vector{3, 1, 4, 1}));
  const Matrix m(3, 2, Vector{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.slice_rows(1, 2), Matrix(2, 2, Vector{3, 4, 5, 6}));
  const std::size_t idx[] = {2, 0};
  EXPECT_EQ(m.gather_rows(idx), Matrix(2, 2, Vector{5, 6, 1, 2}));
}

TEST(Rng, SameSeedSameStream) {
  Rng a(123);
  Rng b(123);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, ChildStreamsAreReproducibleAndDistinct) {
  const Rng root(5);
  Rng c1 = root.child(1);
  Rng c1_again = root.child(1);
  Rng c2 = root.child(2);
  EXPECT_EQ(c1.next_u64(), c1_again.next_u64());
  EXPECT_NE(root.child(1).next_u64(), c2.next_u64());
  EXPECT_NE(root.child({1, 2}).next_u64(), root.child({2, 1}).next_u64());
}

TEST(Rng, ChildDoesNotAdvanceParent) {
  Rng a(9);
  Rng b(9);
  (void)a.child(3);
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformInOpenUnitInterval) {
  Rng rng(4);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000.0, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / 100000.0));
}

TEST(Rng, UniformIndexCoversRange) {
  Rng rng(8);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto k = rng.uniform_index(7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(2);
  std::vector<std::size_t> items(50);
  std::iota(items.begin(), items.end(), std::size_t{0});
  rng.shuffle(items);
  std::vector<std::size_t> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(GaussianMatrix, ZeroStdGivesConstant) {
  Rng rng(1);
  const Matrix m = gaussian_matrix(2, 3, 5.0, 0.0, rng);
  for (double v : m.data()) EXPECT_EQ(v, 5.0);
}

TEST(GaussianMatrix, DeterministicPerSeed) {
  Rng a(7);
  Rng b(7);
  EXPECT_EQ(gaussian_matrix(4, 4, 0.0, 1.0, a), gaussian_matrix(4, 4, 0.0, 1.0, b));
}

TEST(GaussianMatrix, MomentsOfLargeSample) {
  Rng rng(3);
  const Matrix m = gaussian_matrix(1000, 1000, 0.0, 2.0, rng);
  const double n = static_cast<double>(m.size());
  const double mean = std::accumulate(m.data().begin(), m.data().end(), 0.0) / n;
  double ss = 0.0;
  for (double v : m.data()) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  // 3 standard errors: 3 * 2 / 1000 for the mean, 3 * 2 / sqrt(2 * 1e6) for the std.
  EXPECT_LT(std::abs(mean), 0.01);
  EXPECT_LT(std::abs(sd - 2.0), 0.01);
}

TEST(GaussianMatrix, RejectsBadArguments) {
  Rng rng(1);
  EXPECT_THROW(gaussian_matrix(0, 3, 0.0, 1.0, rng), DimensionError);
  EXPECT_THROW(gaussian_matrix(3, 0, 0.0, 1.0, rng), DimensionError);
  EXPECT_THROW(gaussian_matrix(3, 3, 0.0, -1.0, rng), std::invalid_argument);
}

TEST(LeastSquares, ExactLine) {
  const Matrix x(2, 1, Vector{1, 2});
  const auto sol = solve_least_squares(x, Vector{2, 4});
  ASSERT_EQ(sol.weights.size(), 1u);
  EXPECT_NEAR(sol.weights[0], 2.0, 1e-14);
}

TEST(LeastSquares, IdentityDesign) {
  const auto sol = solve_least_squares(Matrix::identity(2), Vector{3, 5});
  EXPECT_NEAR(sol.weights[0], 3.0, 1e-14);
  EXPECT_NEAR(sol.weights[1], 5.0, 1e-14);
}

TEST(LeastSquares, LineWithBias) {
  const Matrix x(3, 1, Vector{1, 2, 3});
  LeastSquaresOptions options;
  options.fit_bias = true;
  const auto sol = solve_least_squares(x, Vector{3, 5, 7}, options);
  EXPECT_NEAR(sol.weights[0], 2.0, 1e-12);
  EXPECT_NEAR(sol.bias, 1.0, 1e-12);
}

TEST(LeastSquares, MatchesIndependentEliminationSolve) {
  Rng rng(21);
  const Matrix x = gaussian_matrix(50, 3, 0.0, 1.0, rng);
  const Vector w_true{1.0, -2.0, 0.5};
  Vector y = matvec(x, w_true);
  for (double& v : y) v += rng.normal(0.0, 0.1);
  const auto sol = solve_least_squares(x, y);
  const Vector oracle = normal_equations_by_elimination(x, y);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(sol.weights[j], oracle[j], 1e-8);
  EXPECT_LE(orthogonality_residual(x, sol.weights, y), 1e-8);
}

TEST(LeastSquares, ResidualOrthogonalOnBadlyScaledFeatures) {
  Rng rng(5);
  Matrix x = gaussian_matrix(400, 6, 0.0, 500.0, rng);
  for (std::size_t r = 0; r < x.rows(); ++r) x(r, 5) = x(r, 0) + rng.normal(0.0, 0.5);
  Vector y(400);
  for (auto& v : y) v = rng.normal(0.0, 1000.0);
  LeastSquaresOptions options;
  options.fit_bias = true;
  const auto sol = solve_least_squares(x, y, options);
  Vector w = sol.weights;
  w.push_back(sol.bias);
  EXPECT_LE(orthogonality_residual(append_ones_column(x), w, y), 1e-8);
}

TEST(LeastSquares, SingularWithoutRidgeThrows) {
  const Matrix x(3, 1, Vector{1, 1, 1});
  LeastSquaresOptions options;
  options.fit_bias = true;
  EXPECT_THROW(solve_least_squares(x, Vector{0, 1, 2}, options), RankDeficientError);
}

TEST(LeastSquares, SingularFallsBackWhenAllowed) {
  const Matrix x(3, 1, Vector{1, 1, 1});
  LeastSquaresOptions options;
  options.fit_bias = true;
  options.fallback_on_singular = true;
  const auto sol = solve_least_squares(x, Vector{0, 1, 2}, options);
  EXPECT_EQ(sol.dropped_columns, 1u);
  // The bias column repeats the feature column and is dropped; the kept
  // coefficient carries the mean.
  EXPECT_EQ(sol.bias, 0.0);
  EXPECT_NEAR(sol.weights[0], 1.0, 1e-14);
}

TEST(LeastSquares, DroppedColumnsKeepTheFitExact) {
  Rng rng(6);
  Matrix x = gaussian_matrix(200, 4, 0.0, 1.0, rng);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    x(r, 2) = 0.0;
    x(r, 3) = 2.0 * x(r, 0) - x(r, 1);
  }
  const Vector y = matvec(x, Vector{1.5, -0.5, 0.0, 0.25});
  LeastSquaresOptions options;
  options.fallback_on_singular = true;
  const auto sol = solve_least_squares(x, y, options);
  EXPECT_EQ(sol.dropped_columns, 2u);
  const Vector fit = matvec(x, sol.weights);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(fit[i], y[i], 1e-12);
}

TEST(LeastSquares, RejectsMismatchedTargets) {
  EXPECT_THROW(solve_least_squares(Matrix::identity(2), Vector{1.0}), DimensionError);
}

}  // namespace
}  // namespace w2s
