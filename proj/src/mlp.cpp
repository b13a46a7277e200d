#include "w2s/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "w2s/errors.hpp"

namespace w2s {

std::string_view to_string(Activation act) { return act == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::relu;
  if (text == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(text) + "'");
}

namespace {

// z = in * W^T + b, one row per sample.
Matrix affine(const Matrix& in, const Layer& layer) {
  Matrix z = matmul(in, layer.weight.transpose());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
  }
  return z;
}

void apply_activation(Activation act, Matrix& m) {
  if (act == Activation::relu) {
    for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
  }
}

}  // namespace

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw DimensionError("mlp: at least one layer required");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.bias.size() != layer.out_dim()) {
      throw DimensionError("mlp: layer " + std::to_string(l) + " bias length does not match its output dim");
    }
    if (l > 0 && layer.in_dim() != layers_[l - 1].out_dim()) {
      throw DimensionError("mlp: layer " + std::to_string(l) + " input dim " + std::to_string(layer.in_dim()) +
                           " does not chain with previous output dim " + std::to_string(layers_[l - 1].out_dim()));
    }
  }
  if (layers_.back().activation != Activation::identity) {
    throw DimensionError("mlp: final layer must use the identity activation");
  }
}

Mlp Mlp::random(const MlpArch& arch, Rng& rng) {
  if (arch.depth == 0 || arch.input_dim == 0 || arch.output_dim == 0 || (arch.depth > 1 && arch.hidden_dim == 0)) {
    throw DimensionError("mlp: architecture dimensions must be positive");
  }
  std::vector<Layer> layers;
  std::size_t fan_in = arch.input_dim;
  for (std::size_t l = 0; l < arch.depth; ++l) {
    const bool last = l + 1 == arch.depth;
    const std::size_t fan_out = last ? arch.output_dim : arch.hidden_dim;
    Layer layer;
    layer.weight = gaussian_matrix(fan_out, fan_in, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
    layer.bias.assign(fan_out, 0.0);
    layer.activation = last ? Activation::identity : Activation::relu;
    layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

bool Mlp::all_finite() const noexcept {
  return std::all_of(layers_.begin(), layers_.end(), [](const Layer& layer) {
    return layer.weight.all_finite() &&
           std::all_of(layer.bias.begin(), layer.bias.end(), [](double v) { return std::isfinite(v); });
  });
}

std::vector<std::span<double>> Mlp::parameter_views() {
  std::vector<std::span<double>> views;
  for (auto& layer : layers_) {
    views.push_back(layer.weight.data());
    views.push_back(layer.bias);
  }
  return views;
}

Vector Mlp::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw DimensionError("mlp forward: input has " + std::to_string(x.size()) + " entries, expected " +
                         std::to_string(input_dim()));
  }
  Vector a(x.begin(), x.end());
  for (const auto& layer : layers_) {
    Vector z = matvec(layer.weight, a);
    for (std::size_t j = 0; j < z.size(); ++j) {
      z[j] += layer.bias[j];
      if (layer.activation == Activation::relu && !(z[j] > 0.0)) z[j] = 0.0;
    }
    a = std::move(z);
  }
  return a;
}

Matrix Mlp::forward(const Matrix& inputs) const {
  if (inputs.cols() != input_dim()) {
    throw DimensionError("mlp forward: inputs have " + std::to_string(inputs.cols()) + " columns, expected " +
                         std::to_string(input_dim()));
  }
  Matrix a = inputs;
  for (const auto& layer : layers_) {
    a = affine(a, layer);
    apply_activation(layer.activation, a);
  }
  return a;
}

Vector mlp_forward(const Mlp& net, std::span<const double> x) { return net.forward(x); }

Mlp perturb_mlp(const Mlp& net, double noise_std, Rng& rng) {
  if (!(noise_std >= 0.0)) throw std::invalid_argument("perturb_mlp: noise std must be non-negative");
  Mlp out = net;
  if (noise_std == 0.0) return out;
  for (auto& layer : out.mutable_layers()) {
    for (double& w : layer.weight.data()) w += rng.normal(0.0, noise_std);
    for (double& b : layer.bias) b += rng.normal(0.0, noise_std);
  }
  return out;
}

std::vector<std::span<const double>> MlpGradients::views() const {
  std::vector<std::span<const double>> out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    out.push_back(weight[l].data());
    out.push_back(bias[l]);
  }
  return out;
}

LossGradients multitask_gradients(const Mlp& net, const Matrix& inputs, std::span<const double> targets,
                                  std::span<const Head> heads, std::span<const std::size_t> task_of,
                                  Trainable trainable) {
  const std::size_t batch = inputs.rows();
  if (batch == 0) throw DimensionError("gradients: empty batch");
  if (targets.size() != batch || task_of.size() != batch) throw DimensionError("gradients: batch length mismatch");
  if (inputs.cols() != net.input_dim()) throw DimensionError("gradients: input dim mismatch");
  for (const auto& head : heads) {
    if (head.dim() != net.output_dim()) throw DimensionError("gradients: head dim does not match representation");
  }

  const auto& layers = net.layers();
  const std::size_t depth = layers.size();
  std::vector<Matrix> pre(depth);
  std::vector<Matrix> act(depth + 1);
  act[0] = inputs;
  for (std::size_t l = 0; l < depth; ++l) {
    pre[l] = affine(act[l], layers[l]);
    act[l + 1] = pre[l];
    apply_activation(layers[l].activation, act[l + 1]);
  }
  const Matrix& features = act[depth];

  LossGradients out;
  Vector dpre(batch);
  const double scale = 2.0 / static_cast<double>(batch);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (task_of[i] >= heads.size()) throw DimensionError("gradients: task index out of range");
    const Head& head = heads[task_of[i]];
    const double p = head.preactivation(features.row(i));
    const double residual = activate(head.kind, p) - targets[i];
    loss += residual * residual;
    dpre[i] = scale * residual * activate_derivative(head.kind, p);
  }
  out.loss = loss / static_cast<double>(batch);

  if (trainable != Trainable::representation) {
    out.heads.resize(heads.size());
    for (std::size_t t = 0; t < heads.size(); ++t) out.heads[t].weights.assign(heads[t].dim(), 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
      auto& g = out.heads[task_of[i]];
      const auto z = features.row(i);
      for (std::size_t j = 0; j < z.size(); ++j) g.weights[j] += dpre[i] * z[j];
      if (heads[task_of[i]].bias_enabled) g.bias += dpre[i];
    }
  }
  if (trainable == Trainable::head) return out;

  // d loss / d net output, one row per sample.
  Matrix delta(batch, net.output_dim());
  for (std::size_t i = 0; i < batch; ++i) {
    const auto& w = heads[task_of[i]].weights;
    auto row = delta.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = dpre[i] * w[j];
  }

  MlpGradients& grads = out.representation;
  grads.weight.resize(depth);
  grads.bias.resize(depth);
  for (std::size_t l = depth; l-- > 0;) {
    if (layers[l].activation == Activation::relu) {
      auto d = delta.data();
      auto z = pre[l].data();
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (!(z[k] > 0.0)) d[k] = 0.0;
      }
    }
    grads.weight[l] = matmul_tn(delta, act[l]);
    grads.bias[l].assign(layers[l].out_dim(), 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto row = delta.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) grads.bias[l][j] += row[j];
    }
    if (l > 0) delta = matmul(delta, layers[l].weight);
  }
  return out;
}

LossGradients mlp_gradients(const Mlp& net, const Matrix& inputs, std::span<const double> targets,
                            const Head& head, Trainable trainable) {
  const std::vector<std::size_t> task_of(inputs.rows(), 0);
  return multitask_gradients(net, inputs, targets, std::span<const Head>(&head, 1), task_of, trainable);
}

double multitask_mse(const Mlp& net, const Matrix& inputs, std::span<const double> targets,
                     std::span<const Head> heads, std::span<const std::size_t> task_of) {
  const Matrix features = net.forward(inputs);
  double loss = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const double r = apply_head(heads[task_of[i]], features.row(i)) - targets[i];
    loss += r * r;
  }
  return loss / static_cast<double>(features.rows());
}

RepresentationTrainResult train_representation(Mlp& net, const Matrix& inputs, std::span<const double> targets,
                                               std::span<const std::size_t> task_of, std::vector<Head>& heads,
                                               bool train_heads, const TrainOptions& options, Rng& shuffle_rng) {
  const std::size_t n = inputs.rows();
  if (n == 0) throw DimensionError("train_representation: empty dataset");
  if (targets.size() != n || task_of.size() != n) throw DimensionError("train_representation: length mismatch");
  if (options.batch_size == 0) throw std::invalid_argument("train_representation: batch size must be positive");

  AdamState adam(options.adam);
  const Trainable mode = train_heads ? Trainable::both : Trainable::representation;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> batch_idx;
  Vector batch_y;
  std::vector<std::size_t> batch_task;

  RepresentationTrainResult result;
  result.epoch_loss.reserve(options.epochs);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t count = std::min(options.batch_size, n - start);
      batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(start + count));
      batch_y.resize(count);
      batch_task.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        batch_y[i] = targets[batch_idx[i]];
        batch_task[i] = task_of[batch_idx[i]];
      }
      const Matrix batch_x = inputs.gather_rows(batch_idx);
      LossGradients g = multitask_gradients(net, batch_x, batch_y, heads, batch_task, mode);
      epoch_loss += g.loss;
      ++steps;

      std::vector<std::span<double>> params = net.parameter_views();
      std::vector<std::span<const double>> grads = g.representation.views();
      if (train_heads) {
        for (std::size_t t = 0; t < heads.size(); ++t) {
          params.push_back(heads[t].weights);
          grads.push_back(g.heads[t].weights);
          if (heads[t].bias_enabled) {
            params.push_back(std::span<double>(&heads[t].bias, 1));
            grads.push_back(std::span<const double>(&g.heads[t].bias, 1));
          }
        }
      }
      adam.step(params, grads);
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(steps));
  }
  if (!net.all_finite()) throw NonFiniteError("train_representation: parameters diverged");
  result.final_loss = multitask_mse(net, inputs, targets, heads, task_of);
  return result;
}

}  // namespace w2s
