#include "sctlab/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sctlab/random.hpp"

namespace sctlab::num {

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                           const GradCheckOptions& options) {
  for (Tensor p : params) p.zero_grad();
  const Tensor loss = f();
  const double base = loss.item();
  loss.backward();

  std::vector<std::vector<double>> analytic;
  for (Tensor p : params) {
    std::vector<double> g(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
    analytic.push_back(std::move(g));
  }

  Rng rng(options.seed);
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.max_coords_per_tensor) {
      // Partial Fisher-Yates: first max_coords entries become a uniform sample.
      for (std::size_t i = 0; i < options.max_coords_per_tensor; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(options.max_coords_per_tensor);
    }
    auto values = p.mutable_values();
    // Central difference and the gap between the one-sided slopes.
    auto probe = [&](std::size_t i, double h) {
      const double saved = values[i];
      values[i] = saved + h;
      const double plus = f().item();
      values[i] = saved - h;
      const double minus = f().item();
      values[i] = saved;
      return std::pair{(plus - minus) / (2.0 * h), (plus - 2.0 * base + minus) / h};
    };
    for (std::size_t i : coords) {
      // Smooth f: central differences agree across step sizes and the
      // one-sided gap shrinks with the step. A kink inside the larger step
      // breaks the agreement (retry smaller); a kink at the point itself keeps
      // the gap from shrinking (skip).
      double h = options.step;
      auto [numeric, gap] = probe(i, h);
      bool smooth = options.kink_retries == 0;
      bool at_kink = false;
      for (int attempt = 0; attempt < options.kink_retries && !smooth && !at_kink; ++attempt) {
        const auto [finer, finer_gap] = probe(i, h / 10.0);
        const double noise = 16.0 * std::numeric_limits<double>::epsilon() * std::abs(base) / (h / 10.0);
        const double tol = 1e-5 * (std::abs(numeric) + std::abs(finer)) + noise;
        if (std::abs(finer_gap) > 0.5 * std::abs(gap) + noise && std::abs(finer_gap) > tol) {
          at_kink = true;
        } else if (std::abs(numeric - finer) <= tol) {
          smooth = true;
        } else {
          numeric = finer;
          gap = finer_gap;
          h /= 10.0;
        }
      }
      if (!smooth) {
        ++result.kinks;
        continue;
      }
      const double a = analytic[k][i];
      const double err =
          std::abs(a - numeric) / std::max(options.denominator_floor, std::abs(a) + std::abs(numeric));
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.coords_checked;
    }
  }
  return result;
}

}  // namespace sctlab::num
