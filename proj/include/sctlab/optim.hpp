#pragma once

#include <cstddef>
#include <vector>

#include "sctlab/tensor.hpp"

namespace sctlab::num {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::size_t warmup_steps = 10000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::size_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  double base_lr = 1e-4;
  double weight_decay = 1e-4;
  std::size_t warmup_steps = 10000;
};

/// Linear warmup multiplier: base_lr · min(1, t / warmup_steps).
double warmup_lr(double base_lr, std::size_t step, std::size_t warmup_steps);

/// Adam with decoupled weight decay and linear warmup.
///
/// Parameters flagged `decay = false` (biases, layer-norm affine terms) skip
/// the decay term.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config);

  /// Applies one update from the accumulated gradients and returns the
  /// learning rate used. Throws NumericError, leaving every parameter and the
  /// state untouched, when any gradient is non-finite.
  double step();

  /// Learning rate the next call to `step` will use.
  double next_lr() const;

  const OptimizerState& state() const { return state_; }
  void restore(OptimizerState state);
  const ParameterList& params() const { return params_; }
  const AdamWConfig& config() const { return config_; }

 private:
  ParameterList params_;
  AdamWConfig config_;
  OptimizerState state_;
};

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

}  // namespace sctlab::num
