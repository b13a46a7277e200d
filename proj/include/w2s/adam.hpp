#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "w2s/matrix.hpp"

namespace w2s {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

// First/second moment accumulators for a list of parameter tensors. The
// accumulators are sized on the first step and the shapes are fixed from then on.
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return step_; }
  const std::vector<Vector>& first_moment() const noexcept { return m_; }
  const std::vector<Vector>& second_moment() const noexcept { return v_; }

  // One bias-corrected Adam update, in place. `params[k]` and `grads[k]` must
  // have equal lengths, and the tensor list must match earlier steps.
  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Vector> m_;
  std::vector<Vector> v_;
};

inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state) {
  state.step(params, grads);
}

}  // namespace w2s
