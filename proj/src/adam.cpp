#include "w2s/adam.hpp"

#include <cmath>
#include <string>

#include "w2s/errors.hpp"

namespace w2s {

void AdamState::step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw DimensionError("adam: parameter and gradient lists differ in length");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size()) {
      throw DimensionError("adam: tensor " + std::to_string(k) + " has " + std::to_string(params[k].size()) +
                           " parameters but " + std::to_string(grads[k].size()) + " gradients");
    }
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  } else {
    if (m_.size() != params.size()) throw DimensionError("adam: tensor count changed between steps");
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (m_[k].size() != params[k].size()) throw DimensionError("adam: tensor shape changed between steps");
    }
  }

  ++step_;
  const auto t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* p = params[k].data();
    const double* g = grads[k].data();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace w2s
