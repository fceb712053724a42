#include "sctlab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sctlab::num {

double warmup_lr(double base_lr, std::size_t step, std::size_t warmup_steps) {
  if (warmup_steps == 0) return base_lr;
  return base_lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

AdamW::AdamW(ParameterList params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  state_.base_lr = config.lr;
  state_.weight_decay = config.weight_decay;
  state_.warmup_steps = config.warmup_steps;
  for (const auto& p : params_) {
    state_.first_moment.emplace_back(p.tensor.size(), 0.0);
    state_.second_moment.emplace_back(p.tensor.size(), 0.0);
  }
}

double AdamW::next_lr() const {
  return warmup_lr(config_.lr, state_.step_count + 1, config_.warmup_steps);
}

double AdamW::step() {
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "' at step " +
                           std::to_string(state_.step_count + 1));
      }
    }
  }
  const std::size_t t = ++state_.step_count;
  const double lr = warmup_lr(config_.lr, t, config_.warmup_steps);
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor tensor = params_[k].tensor;
    auto values = tensor.mutable_values();
    const auto grad = tensor.grad();
    auto& m = state_.first_moment[k];
    auto& v = state_.second_moment[k];
    const double decay = params_[k].decay ? config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= lr * decay * values[i];
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
  return lr;
}

void AdamW::restore(OptimizerState state) {
  if (state.first_moment.size() != params_.size() || state.second_moment.size() != params_.size()) {
    throw DimensionError("optimizer state holds " + std::to_string(state.first_moment.size()) +
                         " moment buffers for " + std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (state.first_moment[k].size() != params_[k].tensor.size() ||
        state.second_moment[k].size() != params_[k].tensor.size()) {
      throw DimensionError("optimizer moments for '" + params_[k].name + "' have wrong size");
    }
  }
  config_.lr = state.base_lr;
  config_.weight_decay = state.weight_decay;
  config_.warmup_steps = state.warmup_steps;
  state_ = std::move(state);
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      Tensor t = p.tensor;
      if (!t.has_grad()) continue;
      for (double& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace sctlab::num
