#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sctlab/errors.hpp"

namespace sctlab::num {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Tensor storage. Every buffer starts on the same alignment so vectorized
/// kernels take identical code paths regardless of heap history.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

namespace detail {

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

/// Reference-counted handle to a dense row-major tensor of doubles.
///
/// Values are fixed after construction. Leaves created with
/// `Tensor::parameter` accumulate gradients and may be updated in place by an
/// optimizer through `mutable_values`. Every other tensor records how it was
/// produced so that `backward` can propagate gradients to its leaves.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  /// Leading extent for 2-d tensors; 1 for vectors.
  std::size_t rows() const;
  /// Trailing extent.
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }
  bool requires_grad() const { return node_->requires_grad; }

  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  /// In-place access for optimizers and finite-difference probes. Only valid
  /// on leaves.
  std::span<double> mutable_values();
  std::span<double> mutable_grad();

  /// Reverse-mode sweep from a scalar. Gradients accumulate into leaves.
  void backward() const;

  /// Drops the recorded history so the tensor becomes a constant leaf view.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }

  /// Builds a result node. Parents that do not require gradients are pruned;
  /// when none remain the backward closure is dropped.
  static Tensor make_result(Shape shape, Buffer values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Named learnable tensor; `decay` selects decoupled weight decay.
struct NamedParameter {
  std::string name;
  Tensor tensor;
  bool decay = true;
};

using ParameterList = std::vector<NamedParameter>;

void zero_grads(const ParameterList& params);

}  // namespace sctlab::num
