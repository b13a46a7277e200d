#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "w2s/head.hpp"
#include "w2s/matrix.hpp"
#include "w2s/rng.hpp"

namespace w2s {

enum class Activation { identity, relu };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view text);

// Affine map followed by an activation. `weight` is (out x in).
struct Layer {
  Matrix weight;
  Vector bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
  friend bool operator==(const Layer&, const Layer&) = default;
};

// Shape of a representation network: `depth` affine layers, ReLU after every
// one but the last.
struct MlpArch {
  std::size_t input_dim = 8;
  std::size_t hidden_dim = 16;
  std::size_t output_dim = 16;
  std::size_t depth = 2;
  friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

class Mlp {
 public:
  Mlp() = default;
  // Validates that layer dims chain and that the last layer is identity.
  explicit Mlp(std::vector<Layer> layers);

  // He initialization: weights Normal(0, 2 / fan_in), biases zero.
  static Mlp random(const MlpArch& arch, Rng& rng);

  std::size_t input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  std::size_t output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t parameter_count() const noexcept;
  bool all_finite() const noexcept;

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  // Mutable access for optimizers; callers must keep shapes intact.
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }

  // Views of every weight and bias tensor, in layer order (weight, bias).
  std::vector<std::span<double>> parameter_views();

  Vector forward(std::span<const double> x) const;
  // One output row per input row.
  Matrix forward(const Matrix& inputs) const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<Layer> layers_;
};

Vector mlp_forward(const Mlp& net, std::span<const double> x);

// Copy of `net` with independent Normal(0, noise_std^2) noise added to every
// weight and bias entry.
Mlp perturb_mlp(const Mlp& net, double noise_std, Rng& rng);

enum class Trainable { representation, head, both };

struct MlpGradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  bool empty() const noexcept { return weight.empty(); }
  std::vector<std::span<const double>> views() const;
};

struct HeadGradients {
  Vector weights;
  double bias = 0.0;
};

struct LossGradients {
  double loss = 0.0;
  // Empty in head-only mode.
  MlpGradients representation;
  // One entry per head in head or both mode; empty in representation mode.
  std::vector<HeadGradients> heads;
};

// Exact reverse-mode gradients of the mean squared error
//   (1/B) sum_i (head_{task[i]}(net(x_i)) - y_i)^2
// over a batch in which every sample names the head that scores it.
LossGradients multitask_gradients(const Mlp& net, const Matrix& inputs, std::span<const double> targets,
                                  std::span<const Head> heads, std::span<const std::size_t> task_of,
                                  Trainable trainable);

// Single-head form of the above.
LossGradients mlp_gradients(const Mlp& net, const Matrix& inputs, std::span<const double> targets,
                            const Head& head, Trainable trainable);

struct RepresentationTrainResult {
  // Mean mini-batch loss of every epoch.
  std::vector<double> epoch_loss;
  // Full-data loss after the last epoch.
  double final_loss = 0.0;
};

// Trains `net` by Adam on a multi-task dataset. When `train_heads` is false the
// heads stay fixed (only representation parameters move).
RepresentationTrainResult train_representation(Mlp& net, const Matrix& inputs, std::span<const double> targets,
                                               std::span<const std::size_t> task_of, std::vector<Head>& heads,
                                               bool train_heads, const TrainOptions& options, Rng& shuffle_rng);

// Mean squared multi-task loss, evaluated in one pass.
double multitask_mse(const Mlp& net, const Matrix& inputs, std::span<const double> targets,
                     std::span<const Head> heads, std::span<const std::size_t> task_of);

}  // namespace w2s
