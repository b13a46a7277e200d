#include "w2s/head.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "w2s/errors.hpp"
#include "w2s/least_squares.hpp"
#include "w2s/mlp.hpp"

namespace w2s {

std::string_view to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::linear: return "linear";
    case HeadKind::sigmoid: return "sigmoid";
    case HeadKind::tanh: return "tanh";
    case HeadKind::relu: return "relu";
  }
  return "linear";
}

std::string_view to_string(HeadOrigin origin) {
  switch (origin) {
    case HeadOrigin::manual: return "manual";
    case HeadOrigin::sampled: return "sampled";
    case HeadOrigin::gd: return "gd";
    case HeadOrigin::closed_form: return "closed_form";
  }
  return "manual";
}

HeadKind parse_head_kind(std::string_view text) {
  if (text == "linear") return HeadKind::linear;
  if (text == "sigmoid") return HeadKind::sigmoid;
  if (text == "tanh") return HeadKind::tanh;
  if (text == "relu") return HeadKind::relu;
  throw std::invalid_argument("unknown head kind '" + std::string(text) + "'");
}

HeadOrigin parse_head_origin(std::string_view text) {
  if (text == "manual") return HeadOrigin::manual;
  if (text == "sampled") return HeadOrigin::sampled;
  if (text == "gd") return HeadOrigin::gd;
  if (text == "closed_form") return HeadOrigin::closed_form;
  throw std::invalid_argument("unknown head origin '" + std::string(text) + "'");
}

double activate(HeadKind kind, double p) {
  switch (kind) {
    case HeadKind::linear: return p;
    case HeadKind::sigmoid: return 1.0 / (1.0 + std::exp(-p));
    case HeadKind::tanh: return std::tanh(p);
    case HeadKind::relu: return p > 0.0 ? p : 0.0;
  }
  return p;
}

double activate_derivative(HeadKind kind, double p) {
  switch (kind) {
    case HeadKind::linear: return 1.0;
    case HeadKind::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-p));
      return s * (1.0 - s);
    }
    case HeadKind::tanh: {
      const double t = std::tanh(p);
      return 1.0 - t * t;
    }
    case HeadKind::relu: return p > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

double Head::preactivation(std::span<const double> z) const {
  if (z.size() != weights.size()) {
    throw DimensionError("head: input has " + std::to_string(z.size()) + " entries, expected " +
                         std::to_string(weights.size()));
  }
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) s += weights[j] * z[j];
  return bias_enabled ? s + bias : s;
}

double apply_head(const Head& head, std::span<const double> z) { return activate(head.kind, head.preactivation(z)); }

Vector apply_head(const Head& head, const Matrix& features) {
  Vector out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out[i] = apply_head(head, features.row(i));
  return out;
}

Head sample_linear_task(std::size_t dim, Rng& rng, const TaskSampling& sampling, HeadKind kind) {
  if (dim == 0) throw DimensionError("sample_linear_task: dim must be positive");
  Head head;
  head.kind = kind;
  head.origin = HeadOrigin::sampled;
  head.weights.resize(dim);
  for (double& w : head.weights) w = rng.normal(0.0, sampling.weight_std);
  head.bias_enabled = sampling.bias_enabled;
  head.bias = sampling.bias_enabled ? rng.normal(0.0, sampling.bias_std) : 0.0;
  return head;
}

double head_mse(const Head& head, const Matrix& features, std::span<const double> targets) {
  if (features.rows() != targets.size()) throw DimensionError("head_mse: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const double r = apply_head(head, features.row(i)) - targets[i];
    s += r * r;
  }
  return s / static_cast<double>(features.rows());
}

namespace {

Head fit_closed_form(const Matrix& features, std::span<const double> targets, const HeadTrainOptions& options) {
  if (options.kind != HeadKind::linear) {
    throw std::invalid_argument("train_head: closed_form requires a linear head, got " +
                                std::string(to_string(options.kind)));
  }
  LeastSquaresOptions ls;
  ls.fit_bias = options.bias_enabled;
  ls.ridge = options.ridge;
  ls.fallback_on_singular = options.fallback_on_singular;
  LeastSquaresSolution sol = solve_least_squares(features, targets, ls);
  Head head;
  head.kind = HeadKind::linear;
  head.origin = HeadOrigin::closed_form;
  head.weights = std::move(sol.weights);
  head.bias_enabled = options.bias_enabled;
  head.bias = sol.bias;
  return head;
}

Head fit_gd(const Matrix& features, std::span<const double> targets, const HeadTrainOptions& options, Rng& rng) {
  const std::size_t n = features.rows();
  const std::size_t dim = features.cols();
  const TrainOptions& train = options.train;
  if (train.batch_size == 0) throw std::invalid_argument("train_head: batch size must be positive");

  Head head;
  head.kind = options.kind;
  head.origin = HeadOrigin::gd;
  head.bias_enabled = options.bias_enabled;
  head.weights.resize(dim);
  for (double& w : head.weights) w = rng.normal(0.0, options.init_std);

  AdamState adam(train.adam);
  Vector grad_w(dim);
  double grad_b = 0.0;
  std::vector<std::span<double>> params{std::span<double>(head.weights)};
  std::vector<std::span<const double>> grads{std::span<const double>(grad_w)};
  if (head.bias_enabled) {
    params.emplace_back(&head.bias, 1);
    grads.emplace_back(&grad_b, 1);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += train.batch_size) {
      const std::size_t count = std::min(train.batch_size, n - start);
      const double scale = 2.0 / static_cast<double>(count);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      grad_b = 0.0;
      for (std::size_t k = start; k < start + count; ++k) {
        const auto z = features.row(order[k]);
        const double p = head.preactivation(z);
        const double d = scale * (activate(head.kind, p) - targets[order[k]]) * activate_derivative(head.kind, p);
        for (std::size_t j = 0; j < dim; ++j) grad_w[j] += d * z[j];
        grad_b += d;
      }
      adam.step(params, grads);
    }
  }
  for (double w : head.weights) {
    if (!std::isfinite(w)) throw NonFiniteError("train_head: gradient descent diverged");
  }
  if (!head.bias_enabled) head.bias = 0.0;
  return head;
}

}  // namespace

Head train_head_on_features(const Matrix& features, std::span<const double> targets,
                            const HeadTrainOptions& options, Rng& rng) {
  if (features.rows() == 0) throw DimensionError("train_head: empty data");
  if (features.rows() != targets.size()) throw DimensionError("train_head: feature/target length mismatch");
  if (options.method == HeadTrainMethod::closed_form) return fit_closed_form(features, targets, options);
  return fit_gd(features, targets, options, rng);
}

Head train_head(const Mlp& rep, const Matrix& inputs, std::span<const double> targets,
                const HeadTrainOptions& options, Rng& rng) {
  if (options.method == HeadTrainMethod::closed_form && options.kind != HeadKind::linear) {
    throw std::invalid_argument("train_head: closed_form requires a linear head");
  }
  if (inputs.rows() == 0) throw DimensionError("train_head: empty data");
  return train_head_on_features(rep.forward(inputs), targets, options, rng);
}

}  // namespace w2s
