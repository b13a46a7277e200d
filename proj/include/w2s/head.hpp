#pragma once

#include <span>
#include <string>
#include <string_view>

#include "w2s/adam.hpp"
#include "w2s/matrix.hpp"
#include "w2s/rng.hpp"

namespace w2s {

class Mlp;

// Output activation applied after the affine map. `linear` heads form a
// convex class; the activated kinds do not.
enum class HeadKind { linear, sigmoid, tanh, relu };

// How a head's parameters were produced. Exact-projection checks only accept
// closed_form heads.
enum class HeadOrigin { manual, sampled, gd, closed_form };

std::string_view to_string(HeadKind kind);
std::string_view to_string(HeadOrigin origin);
HeadKind parse_head_kind(std::string_view text);
HeadOrigin parse_head_origin(std::string_view text);

double activate(HeadKind kind, double preactivation);
// d activate / d preactivation; relu'(0) is taken as 0.
double activate_derivative(HeadKind kind, double preactivation);

// A single-output finetuning function on representation space:
// z -> act(w . z + b).
struct Head {
  HeadKind kind = HeadKind::linear;
  Vector weights;
  double bias = 0.0;
  bool bias_enabled = true;
  HeadOrigin origin = HeadOrigin::manual;

  std::size_t dim() const noexcept { return weights.size(); }
  bool convex() const noexcept { return kind == HeadKind::linear; }

  double preactivation(std::span<const double> z) const;
  friend bool operator==(const Head&, const Head&) = default;
};

double apply_head(const Head& head, std::span<const double> z);
// One output per row of `features`.
Vector apply_head(const Head& head, const Matrix& features);

struct TaskSampling {
  double weight_std = 1.0;
  bool bias_enabled = false;
  double bias_std = 1.0;
  friend bool operator==(const TaskSampling&, const TaskSampling&) = default;
};

// Random ground-truth task: i.i.d. Normal(0, weight_std^2) weights.
Head sample_linear_task(std::size_t dim, Rng& rng, const TaskSampling& sampling = {},
                        HeadKind kind = HeadKind::linear);

enum class HeadTrainMethod { gd, closed_form };

struct TrainOptions {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t epochs = 1000;
};

struct HeadTrainOptions {
  HeadKind kind = HeadKind::linear;
  HeadTrainMethod method = HeadTrainMethod::gd;
  bool bias_enabled = true;
  TrainOptions train;
  // Std of the Normal initialization of gd heads. Must be non-zero for relu
  // heads, whose gradient vanishes at the all-zero starting point.
  double init_std = 0.01;
  // Closed form only: ridge damping and singular fallback.
  double ridge = 0.0;
  bool fallback_on_singular = false;
};

// Fits a head on precomputed features (one row per sample). `rng` drives the
// initialization and mini-batch order of gd; closed_form ignores it.
Head train_head_on_features(const Matrix& features, std::span<const double> targets,
                            const HeadTrainOptions& options, Rng& rng);

// Fits a head over a frozen representation: features are rep(x_i).
Head train_head(const Mlp& rep, const Matrix& inputs, std::span<const double> targets,
                const HeadTrainOptions& options, Rng& rng);

// Mean squared error of `head` on (features, targets).
double head_mse(const Head& head, const Matrix& features, std::span<const double> targets);

}  // namespace w2s
