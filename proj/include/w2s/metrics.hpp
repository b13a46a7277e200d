#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "w2s/head.hpp"
#include "w2s/matrix.hpp"
#include "w2s/mlp.hpp"
#include "w2s/rng.hpp"

namespace w2s {

// Isotropic Gaussian marginal N(0, sigma^2 I) on R^dim.
struct DataDistribution {
  std::size_t dim = 8;
  double sigma = 500.0;

  DataDistribution() = default;
  DataDistribution(std::size_t dim, double sigma);

  // n x dim matrix of i.i.d. draws.
  Matrix sample(std::size_t n, Rng& rng) const;
};

// A function evaluated on a batch of inputs, one output per row.
using BatchFn = std::function<Vector(const Matrix&)>;

// head o rep, with shared ownership of the (immutable) representation.
struct Predictor {
  std::shared_ptr<const Mlp> rep;
  Head head;

  Vector operator()(const Matrix& inputs) const { return apply_head(head, rep->forward(inputs)); }
};

BatchFn constant_fn(double value);

// Empirical squared distance with its sampling spread.
struct DistanceEstimate {
  double value = 0.0;
  // Sample standard deviation of the per-point squared differences.
  double sample_std = 0.0;
  std::size_t n = 0;

  double standard_error() const;
};

// (1/n) sum (f_i - g_i)^2 over paired evaluations. Throws NonFiniteError if
// any evaluation is not finite.
DistanceEstimate distance_on_sample(std::span<const double> f, std::span<const double> g);

// Monte-Carlo estimate of d_P(f, g) = E_{x~P} (f(x) - g(x))^2 from n fresh draws.
double estimate_dp(const BatchFn& f, const BatchFn& g, const DataDistribution& dist, std::size_t n, Rng& rng);
DistanceEstimate estimate_dp_detailed(const BatchFn& f, const BatchFn& g, const DataDistribution& dist,
                                      std::size_t n, Rng& rng);

// Per-task evaluation: (b) weak true error, (a) weak-to-strong true error,
// (c) misfit of the strong model on the weak labels.
struct EvalRecord {
  std::string experiment_id;
  std::size_t task_id = 0;
  std::string weak_model_id;
  std::uint64_t seed = 0;
  double weak_true_err = 0.0;  // (b)
  double w2s_true_err = 0.0;   // (a)
  double misfit = 0.0;         // (c)
  double gain = 0.0;           // b - a, stored exactly
  std::optional<double> epsilon_hat;
  std::size_t n_eval = 0;

  // Standard errors of the three estimates, and of b - a - c.
  double weak_true_err_se = 0.0;
  double w2s_true_err_se = 0.0;
  double misfit_se = 0.0;
  double gap_se = 0.0;

  // Checks that distances are finite and non-negative and gain == b - a.
  void validate() const;
};

// Builds a record whose gain is b - a exactly.
EvalRecord make_record(double weak_true_err, double w2s_true_err, double misfit);

enum class EvalSampling { fresh, shared };

EvalRecord evaluate_triplet(const BatchFn& true_fn, const BatchFn& weak_fn, const BatchFn& w2s_fn,
                            const DataDistribution& dist, std::size_t n_eval, Rng& rng,
                            EvalSampling sampling = EvalSampling::fresh);

struct EpsilonEstimate {
  double epsilon = 0.0;
  double standard_error = 0.0;
  Head fitted;
};

// Fits a linear head on `strong_rep` against truly labeled data by least
// squares (n_fit samples), then measures its d_P to `true_fn` on n_eval fresh samples.
EpsilonEstimate estimate_epsilon(const Mlp& strong_rep, const BatchFn& true_fn, const DataDistribution& dist,
                                 std::size_t n_fit, std::size_t n_eval, Rng& rng, bool bias_enabled = true);

}  // namespace w2s
