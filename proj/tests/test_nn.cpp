#include <gtest/gtest.h>

#include <cmath>

#include "w2s/adam.hpp"
#include "w2s/errors.hpp"
#include "w2s/mlp.hpp"
#include "w2s/serialize.hpp"

namespace w2s {
namespace {

// Straight-line re-evaluation of a network, one scalar at a time.
Vector reference_forward(const Mlp& net, Vector x) {
  for (const auto& layer : net.layers()) {
    Vector next(layer.out_dim());
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      double s = layer.bias[o];
      for (std::size_t i = 0; i < layer.in_dim(); ++i) s += layer.weight(o, i) * x[i];
      next[o] = layer.activation == Activation::relu ? (s > 0.0 ? s : 0.0) : s;
    }
    x = std::move(next);
  }
  return x;
}

double batch_loss(const Mlp& net, const Matrix& x, std::span<const double> y, const Head& head) {
  const Vector pred = apply_head(head, net.forward(x));
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return s / static_cast<double>(y.size());
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// Max relative error between backprop and central differences (step 1e-5)
// over every parameter of the net and the head.
double gradient_check(std::size_t depth, std::uint64_t seed, HeadKind kind = HeadKind::linear) {
  Rng rng(seed);
  // He init leaves biases at zero, so a layer fed only dead units sits exactly
  // on the ReLU kink; jittered biases keep central differences well defined.
  Mlp net = perturb_mlp(Mlp::random({4, 6, 5, depth}, rng), 0.1, rng);
  Head head = sample_linear_task(5, rng, {1.0, true, 1.0}, kind);
  const Matrix x = gaussian_matrix(8, 4, 0.0, 1.0, rng);
  Vector y(8);
  for (auto& v : y) v = rng.normal();

  const LossGradients g = mlp_gradients(net, x, y, head, Trainable::both);
  const double h = 1e-5;
  double worst = 0.0;
  auto views = net.parameter_views();
  const auto analytic = g.representation.views();
  for (std::size_t k = 0; k < views.size(); ++k) {
    for (std::size_t j = 0; j < views[k].size(); ++j) {
      const double saved = views[k][j];
      views[k][j] = saved + h;
      const double up = batch_loss(net, x, y, head);
      views[k][j] = saved - h;
      const double down = batch_loss(net, x, y, head);
      views[k][j] = saved;
      worst = std::max(worst, relative_error(analytic[k][j], (up - down) / (2 * h)));
    }
  }
  for (std::size_t j = 0; j <= head.weights.size(); ++j) {
    double& p = j < head.weights.size() ? head.weights[j] : head.bias;
    const double analytic_head = j < head.weights.size() ? g.heads[0].weights[j] : g.heads[0].bias;
    const double saved = p;
    p = saved + h;
    const double up = batch_loss(net, x, y, head);
    p = saved - h;
    const double down = batch_loss(net, x, y, head);
    p = saved;
    worst = std::max(worst, relative_error(analytic_head, (up - down) / (2 * h)));
  }
  return worst;
}

TEST(Mlp, ZeroNetworkGivesZero) {
  Rng rng(1);
  Mlp net = Mlp::random({3, 4, 2, 3}, rng);
  for (auto view : net.parameter_views()) std::fill(view.begin(), view.end(), 0.0);
  EXPECT_EQ(net.forward(Vector{1.0, -2.0, 3.0}), (Vector{0.0, 0.0}));
}

TEST(Mlp, IdentityLayer) {
  Layer layer{Matrix::identity(2), Vector{0.0, 0.0}, Activation::identity};
  const Mlp net({layer});
  EXPECT_EQ(mlp_forward(net, Vector{1.0, -2.0}), (Vector{1.0, -2.0}));
}

TEST(Mlp, MatchesHandComposedEvaluation) {
  Rng rng(42);
  const Mlp net = Mlp::random({8, 16, 16, 2}, rng);
  Vector e1(8, 0.0);
  e1[0] = 1.0;
  const Vector out = net.forward(e1);
  const Vector ref = reference_forward(net, e1);
  ASSERT_EQ(out.size(), 16u);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
}

TEST(Mlp, BatchedForwardMatchesSingle) {
  Rng rng(3);
  const Mlp net = Mlp::random({8, 16, 16, 5}, rng);
  const Matrix x = gaussian_matrix(10, 8, 0.0, 500.0, rng);
  const Matrix out = net.forward(x);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Vector single = net.forward(Vector(x.row(r).begin(), x.row(r).end()));
    for (std::size_t c = 0; c < single.size(); ++c) EXPECT_EQ(out(r, c), single[c]);
  }
  EXPECT_EQ(net.forward(x), out);
}

TEST(Mlp, ValidatesStructure) {
  Layer a{Matrix(3, 2), Vector(3, 0.0), Activation::relu};
  Layer b{Matrix(1, 4), Vector(1, 0.0), Activation::identity};
  EXPECT_THROW(Mlp({a, b}), DimensionError);
  Layer last_relu{Matrix(1, 3), Vector(1, 0.0), Activation::relu};
  EXPECT_THROW(Mlp({a, last_relu}), DimensionError);
  Rng rng(1);
  const Mlp net = Mlp::random({3, 4, 2, 2}, rng);
  EXPECT_THROW(net.forward(Vector{1.0, 2.0}), DimensionError);
}

TEST(Mlp, HeInitializationScale) {
  Rng rng(10);
  const Mlp net = Mlp::random({8, 400, 16, 2}, rng);
  const auto& w = net.layers()[1].weight;
  double ss = 0.0;
  for (double v : w.data()) ss += v * v;
  const double var = ss / static_cast<double>(w.size());
  EXPECT_NEAR(var, 2.0 / 400.0, 3.0 * (2.0 / 400.0) * std::sqrt(2.0 / static_cast<double>(w.size())));
  for (double b : net.layers()[0].bias) EXPECT_EQ(b, 0.0);
}

TEST(Gradients, ZeroAtGlobalMinimum) {
  Rng rng(2);
  const Mlp net = Mlp::random({4, 6, 5, 3}, rng);
  const Head head = sample_linear_task(5, rng);
  const Matrix x = gaussian_matrix(8, 4, 0.0, 1.0, rng);
  const Vector y = apply_head(head, net.forward(x));
  const LossGradients g = mlp_gradients(net, x, y, head, Trainable::both);
  EXPECT_EQ(g.loss, 0.0);
  for (const auto& view : g.representation.views()) {
    for (double v : view) EXPECT_EQ(v, 0.0);
  }
  for (double v : g.heads[0].weights) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, HeadOnlyModeHasNoRepresentationBlock) {
  Rng rng(2);
  const Mlp net = Mlp::random({4, 6, 5, 3}, rng);
  const Head head = sample_linear_task(5, rng);
  const Matrix x = gaussian_matrix(8, 4, 0.0, 1.0, rng);
  const Vector y(8, 1.0);
  const LossGradients g = mlp_gradients(net, x, y, head, Trainable::head);
  EXPECT_TRUE(g.representation.empty());
  ASSERT_EQ(g.heads.size(), 1u);
  const LossGradients r = mlp_gradients(net, x, y, head, Trainable::representation);
  EXPECT_TRUE(r.heads.empty());
  EXPECT_FALSE(r.representation.empty());
}

TEST(Gradients, EmptyBatchRejected) {
  Rng rng(2);
  const Mlp net = Mlp::random({4, 6, 5, 3}, rng);
  const Head head = sample_linear_task(5, rng);
  EXPECT_THROW(mlp_gradients(net, Matrix(0, 4), Vector{}, head, Trainable::both), DimensionError);
}

TEST(Gradients, FiniteDifferencesSeed13ThreeLayers) { EXPECT_LE(gradient_check(3, 13), 1e-4); }

TEST(Gradients, FiniteDifferencesAcrossDepths) {
  for (std::size_t depth : {2u, 5u, 8u}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      EXPECT_LE(gradient_check(depth, seed), 1e-4) << "depth " << depth << " seed " << seed;
    }
  }
}

TEST(Gradients, FiniteDifferencesActivatedHeads) {
  for (HeadKind kind : {HeadKind::sigmoid, HeadKind::tanh, HeadKind::relu}) {
    EXPECT_LE(gradient_check(3, 4, kind), 1e-4) << to_string(kind);
  }
}

TEST(Gradients, MultitaskRoutesSamplesToTheirHeads) {
  Rng rng(6);
  const Mlp net = Mlp::random({4, 6, 5, 2}, rng);
  const std::vector<Head> heads{sample_linear_task(5, rng), sample_linear_task(5, rng)};
  const Matrix x = gaussian_matrix(6, 4, 0.0, 1.0, rng);
  const Vector y{1, 2, 3, 4, 5, 6};
  const std::vector<std::size_t> task_of{0, 1, 0, 1, 1, 0};
  const LossGradients g = multitask_gradients(net, x, y, heads, task_of, Trainable::both);
  double expected = 0.0;
  const Matrix z = net.forward(x);
  for (std::size_t i = 0; i < 6; ++i) {
    const double d = apply_head(heads[task_of[i]], z.row(i)) - y[i];
    expected += d * d;
  }
  EXPECT_NEAR(g.loss, expected / 6.0, 1e-12);
  EXPECT_NEAR(multitask_mse(net, x, y, heads, task_of), expected / 6.0, 1e-12);
}

TEST(Adam, FirstStepMatchesHandComputedUpdate) {
  Vector p{0.0};
  const Vector g{0.5};
  AdamState state;
  std::span<double> params[] = {p};
  std::span<const double> grads[] = {g};
  adam_step(params, grads, state);
  // m = 0.05, v = 0.00025; bias corrected m_hat = 0.5, v_hat = 0.25.
  const double m_hat = (0.1 * 0.5) / (1 - 0.9);
  const double v_hat = (0.001 * 0.25) / (1 - 0.999);
  const double expected = -1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8);
  EXPECT_NEAR(p[0], expected, 1e-18);
  EXPECT_NEAR(p[0], -9.99999e-4, 1e-9);
  EXPECT_EQ(state.step_count(), 1u);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Vector p{1.5, -2.0};
  const Vector g{0.0, 0.0};
  AdamState state;
  std::span<double> params[] = {p};
  std::span<const double> grads[] = {g};
  for (int i = 0; i < 5; ++i) adam_step(params, grads, state);
  EXPECT_EQ(p, (Vector{1.5, -2.0}));
}

TEST(Adam, ConstantGradientMonotoneDecrease) {
  Vector p{0.0};
  const Vector g{0.5};
  AdamState state;
  std::span<double> params[] = {p};
  std::span<const double> grads[] = {g};
  double prev = p[0];
  for (int i = 0; i < 100; ++i) {
    adam_step(params, grads, state);
    ASSERT_LT(p[0], prev);
    prev = p[0];
  }
  // With a constant gradient every bias-corrected step is lr * g / (|g| + eps').
  EXPECT_NEAR(p[0], -0.1, 1e-6);
}

TEST(Adam, RejectsShapeChanges) {
  Vector p{0.0, 0.0};
  Vector q{0.0};
  const Vector g2{1.0, 1.0};
  const Vector g1{1.0};
  AdamState state;
  std::span<double> params[] = {p};
  std::span<const double> wrong[] = {g1};
  EXPECT_THROW(adam_step(params, wrong, state), DimensionError);
  std::span<const double> grads[] = {g2};
  adam_step(params, grads, state);
  std::span<double> other[] = {q};
  std::span<const double> other_grads[] = {g1};
  EXPECT_THROW(adam_step(other, other_grads, state), DimensionError);
}

TEST(Perturb, ZeroStdIsIdentity) {
  Rng rng(1);
  const Mlp net = Mlp::random({8, 16, 16, 5}, rng);
  Rng noise(2);
  EXPECT_EQ(perturb_mlp(net, 0.0, noise), net);
}

TEST(Perturb, NoiseStatisticsAndReproducibility) {
  Rng rng(1);
  const Mlp net = Mlp::random({8, 16, 16, 5}, rng);
  ASSERT_GE(net.parameter_count(), 1000u);
  const Mlp copy = net;
  const Rng base(77);
  Rng s1 = base.child(1);
  Rng s1_again = base.child(1);
  Rng s2 = base.child(2);
  const Mlp a = perturb_mlp(net, 0.05, s1);
  EXPECT_EQ(a, perturb_mlp(net, 0.05, s1_again));
  EXPECT_NE(a, perturb_mlp(net, 0.05, s2));
  EXPECT_EQ(net, copy);

  double ss = 0.0;
  std::size_t n = 0;
  bool bias_moved = false;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& w0 = net.layers()[l].weight.data();
    const auto& w1 = a.layers()[l].weight.data();
    for (std::size_t j = 0; j < w0.size(); ++j, ++n) ss += (w1[j] - w0[j]) * (w1[j] - w0[j]);
    for (std::size_t j = 0; j < net.layers()[l].bias.size(); ++j, ++n) {
      const double d = a.layers()[l].bias[j] - net.layers()[l].bias[j];
      bias_moved = bias_moved || d != 0.0;
      ss += d * d;
    }
  }
  EXPECT_TRUE(bias_moved);
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(n)), 0.05, 0.005);
}

TEST(Perturb, NegativeStdRejected) {
  Rng rng(1);
  const Mlp net = Mlp::random({2, 2, 2, 2}, rng);
  EXPECT_THROW(perturb_mlp(net, -0.1, rng), std::invalid_argument);
}

TEST(TrainRepresentation, ReducesLossAndIsReproducible) {
  Rng rng(8);
  const Mlp target = Mlp::random({4, 8, 6, 3}, rng);
  const std::vector<Head> heads{sample_linear_task(6, rng), sample_linear_task(6, rng)};
  const Matrix x = gaussian_matrix(200, 4, 0.0, 1.0, rng);
  std::vector<std::size_t> task_of(200);
  Vector y(200);
  const Matrix z = target.forward(x);
  for (std::size_t i = 0; i < 200; ++i) {
    task_of[i] = i % 2;
    y[i] = apply_head(heads[task_of[i]], z.row(i));
  }
  TrainOptions options;
  options.epochs = 30;
  auto run = [&](Mlp& net) {
    std::vector<Head> h = heads;
    Rng order(3);
    return train_representation(net, x, y, task_of, h, false, options, order);
  };
  Rng init(4);
  Mlp net = Mlp::random({4, 8, 6, 2}, init);
  Mlp net2 = net;
  const double before = multitask_mse(net, x, y, heads, task_of);
  const auto history = run(net);
  EXPECT_LT(history.final_loss, before);
  EXPECT_EQ(history.epoch_loss.size(), 30u);
  run(net2);
  EXPECT_EQ(net, net2);
}

TEST(Serialize, HexDoubleRoundTrip) {
  for (double v : {0.0, -0.0, 1.0, -2.5, 0.1, 1e-300, 6.02214076e23, 5e-324}) {
    const double back = parse_hex_double(hex_double(v));
    EXPECT_EQ(std::signbit(back), std::signbit(v));
    EXPECT_EQ(back, v);
  }
  EXPECT_EQ(hex_double(3.0), "0x1.8p+1");
  EXPECT_THROW(parse_hex_double("zz"), std::invalid_argument);
}

TEST(Serialize, MlpRoundTripIsBitExact) {
  Rng rng(12);
  const Mlp net = perturb_mlp(Mlp::random({8, 16, 16, 5}, rng), 0.01, rng);
  const auto doc = mlp_to_json(net);
  EXPECT_EQ(doc["dims"], nlohmann::json({8, 16, 16, 16, 16, 16}));
  const Mlp back = mlp_from_json(nlohmann::json::parse(doc.dump()));
  EXPECT_EQ(back, net);
}

TEST(Serialize, HeadRoundTrip) {
  Rng rng(3);
  Head h = sample_linear_task(16, rng, {1.0, true, 1.0}, HeadKind::tanh);
  h.origin = HeadOrigin::gd;
  EXPECT_EQ(head_from_json(head_to_json(h)), h);
}

}  // namespace
}  // namespace w2s
