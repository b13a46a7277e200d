#include "w2s/metrics.hpp"

#include <cmath>
#include <string>

#include "w2s/errors.hpp"

namespace w2s {

DataDistribution::DataDistribution(std::size_t dim_, double sigma_) : dim(dim_), sigma(sigma_) {
  if (dim == 0) throw DimensionError("distribution: dim must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("distribution: sigma must be positive");
}

Matrix DataDistribution::sample(std::size_t n, Rng& rng) const { return gaussian_matrix(n, dim, 0.0, sigma, rng); }

BatchFn constant_fn(double value) {
  return [value](const Matrix& inputs) { return Vector(inputs.rows(), value); };
}

double DistanceEstimate::standard_error() const {
  return n == 0 ? 0.0 : sample_std / std::sqrt(static_cast<double>(n));
}

DistanceEstimate distance_on_sample(std::span<const double> f, std::span<const double> g) {
  if (f.size() != g.size()) throw DimensionError("distance: evaluation lengths differ");
  if (f.empty()) throw DimensionError("distance: empty sample");
  const std::size_t n = f.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(f[i]) || !std::isfinite(g[i])) {
      throw NonFiniteError("distance: non-finite function value at sample " + std::to_string(i));
    }
    const double d = f[i] - g[i];
    sum += d * d;
  }
  DistanceEstimate est;
  est.n = n;
  est.value = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = f[i] - g[i];
      const double dev = d * d - est.value;
      ss += dev * dev;
    }
    est.sample_std = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return est;
}

DistanceEstimate estimate_dp_detailed(const BatchFn& f, const BatchFn& g, const DataDistribution& dist,
                                      std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("estimate_dp: n must be positive");
  const Matrix x = dist.sample(n, rng);
  const Vector fv = f(x);
  const Vector gv = g(x);
  return distance_on_sample(fv, gv);
}

double estimate_dp(const BatchFn& f, const BatchFn& g, const DataDistribution& dist, std::size_t n, Rng& rng) {
  return estimate_dp_detailed(f, g, dist, n, rng).value;
}

void EvalRecord::validate() const {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument(std::string("record: ") + name + " must be finite and non-negative");
    }
  };
  check(weak_true_err, "weak_true_err");
  check(w2s_true_err, "w2s_true_err");
  check(misfit, "misfit");
  if (epsilon_hat) check(*epsilon_hat, "epsilon_hat");
  if (gain != weak_true_err - w2s_true_err) throw std::invalid_argument("record: gain must equal b - a");
}

EvalRecord make_record(double weak_true_err, double w2s_true_err, double misfit) {
  EvalRecord r;
  r.weak_true_err = weak_true_err;
  r.w2s_true_err = w2s_true_err;
  r.misfit = misfit;
  r.gain = weak_true_err - w2s_true_err;
  return r;
}

EvalRecord evaluate_triplet(const BatchFn& true_fn, const BatchFn& weak_fn, const BatchFn& w2s_fn,
                            const DataDistribution& dist, std::size_t n_eval, Rng& rng, EvalSampling sampling) {
  if (n_eval == 0) throw std::invalid_argument("evaluate_triplet: n_eval must be positive");
  DistanceEstimate a;
  DistanceEstimate b;
  DistanceEstimate c;
  double gap_se = 0.0;
  if (sampling == EvalSampling::shared) {
    Rng stream = rng.child(0);
    const Matrix x = dist.sample(n_eval, stream);
    const Vector truth = true_fn(x);
    const Vector weak = weak_fn(x);
    const Vector strong = w2s_fn(x);
    a = distance_on_sample(strong, truth);
    b = distance_on_sample(weak, truth);
    c = distance_on_sample(strong, weak);
    // Per-point b_i - a_i - c_i, whose mean is the estimated gap.
    if (n_eval > 1) {
      const double mean = b.value - a.value - c.value;
      double ss = 0.0;
      for (std::size_t i = 0; i < n_eval; ++i) {
        const double db = weak[i] - truth[i];
        const double da = strong[i] - truth[i];
        const double dc = strong[i] - weak[i];
        const double dev = db * db - da * da - dc * dc - mean;
        ss += dev * dev;
      }
      gap_se = std::sqrt(ss / static_cast<double>(n_eval - 1)) / std::sqrt(static_cast<double>(n_eval));
    }
  } else {
    Rng stream_a = rng.child(1);
    Rng stream_b = rng.child(2);
    Rng stream_c = rng.child(3);
    a = estimate_dp_detailed(w2s_fn, true_fn, dist, n_eval, stream_a);
    b = estimate_dp_detailed(weak_fn, true_fn, dist, n_eval, stream_b);
    c = estimate_dp_detailed(w2s_fn, weak_fn, dist, n_eval, stream_c);
    const double sa = a.standard_error();
    const double sb = b.standard_error();
    const double sc = c.standard_error();
    gap_se = std::sqrt(sa * sa + sb * sb + sc * sc);
  }

  EvalRecord r = make_record(b.value, a.value, c.value);
  r.n_eval = n_eval;
  r.w2s_true_err_se = a.standard_error();
  r.weak_true_err_se = b.standard_error();
  r.misfit_se = c.standard_error();
  r.gap_se = gap_se;
  return r;
}

EpsilonEstimate estimate_epsilon(const Mlp& strong_rep, const BatchFn& true_fn, const DataDistribution& dist,
                                 std::size_t n_fit, std::size_t n_eval, Rng& rng, bool bias_enabled) {
  if (n_fit == 0 || n_eval == 0) throw std::invalid_argument("estimate_epsilon: sample sizes must be positive");
  Rng fit_stream = rng.child(0);
  Rng eval_stream = rng.child(1);
  const Matrix x = dist.sample(n_fit, fit_stream);
  const Vector y = true_fn(x);
  HeadTrainOptions options;
  options.kind = HeadKind::linear;
  options.method = HeadTrainMethod::closed_form;
  options.bias_enabled = bias_enabled;
  options.fallback_on_singular = true;
  EpsilonEstimate out;
  out.fitted = train_head(strong_rep, x, y, options, fit_stream);

  auto rep = std::make_shared<const Mlp>(strong_rep);
  const Predictor fitted{rep, out.fitted};
  const DistanceEstimate d = estimate_dp_detailed(fitted, true_fn, dist, n_eval, eval_stream);
  out.epsilon = d.value;
  out.standard_error = d.standard_error();
  return out;
}

}  // namespace w2s
