#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sctlab/tensor.hpp"

namespace sctlab::num {

struct GradCheckOptions {
  double step = 1e-5;
  /// Tensors larger than this are probed on a random subsample of this many
  /// coordinates.
  std::size_t max_coords_per_tensor = 200;
  std::uint64_t seed = 0;
  /// Each coordinate's central difference is confirmed against one at a
  /// tenfold smaller step; on disagreement (a kink such as relu at zero
  /// inside the step) the step shrinks and the comparison repeats up to this
  /// many times before the coordinate is skipped. 0 disables the check.
  int kink_retries = 2;
  /// Lower bound on the error denominator, so gradients at roundoff level
  /// are compared in absolute terms.
  double denominator_floor = 1e-5;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  /// Coordinates left out because a kink (relu, clip) lay within the
  /// smallest step.
  std::size_t kinks = 0;
};

/// Compares reverse-mode gradients of a deterministic scalar function against
/// central differences. Per coordinate the error is
/// |analytic − numeric| / max(floor, |analytic| + |numeric|), taken over the
/// coordinates where f is smooth at the probe scale.
GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace sctlab::num
