#include "poselift/optimizer.hpp"

#include <cmath>

namespace poselift {

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>> parameters,
                             AdamConfig config)
    : parameters_(std::move(parameters)), config_(config) {
  if (config_.learning_rate < 0.0) {
    throw ConfigError("learning rate must be non-negative");
  }
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
      config_.beta2 >= 1.0) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  first_moment_.reserve(parameters_.size());
  second_moment_.reserve(parameters_.size());
  for (const auto& [path, tensor] : parameters_) {
    if (!tensor.defined()) {
      throw ConfigError("parameter '" + path + "' is undefined");
    }
    first_moment_.emplace_back(tensor.numel(), 0.0);
    second_moment_.emplace_back(tensor.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  for (const auto& [path, tensor] : parameters_) {
    if (!tensor.has_grad()) continue;
    const auto& grad = tensor.grad();
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (!std::isfinite(grad[i])) {
        throw NonFiniteError("non-finite gradient for parameter '" + path +
                                 "'; step aborted",
                             i);
      }
    }
  }

  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);

  for (std::size_t p = 0; p < parameters_.size(); ++p) {
    Tensor& tensor = parameters_[p].second;
    if (!tensor.has_grad()) continue;
    const auto& grad = tensor.grad();
    auto& values = tensor.mutable_values();
    auto& m = first_moment_[p];
    auto& v = second_moment_[p];
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      values[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& [path, tensor] : parameters_) tensor.zero_grad();
}

void AdamOptimizer::scale_learning_rate(double factor) {
  if (factor < 0.0) throw ConfigError("learning rate factor must be non-negative");
  config_.learning_rate *= factor;
}

}  // namespace poselift
