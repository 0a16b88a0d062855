#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coboom {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

// Backward record. `backward` reads the output's gradient and accumulates into
// the parents that require one.
struct Node {
  std::string_view op;
  std::vector<ImplPtr> parents;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty when absent
  bool requires_grad = false;
  std::unique_ptr<Node> node;

  // Null when this tensor does not take gradient. Allocates a zeroed buffer on
  // first use.
  double* grad_sink();
};

}  // namespace detail

// Shape-tagged dense float64 array. Copies are shallow handles onto the same
// storage and graph node, as with most autograd libraries; use clone() for an
// independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const;
  // Leaf tensors only: mutating an interior value would desynchronize the graph.
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  std::string_view op() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  // The gradient, or zeros when no gradient has been accumulated.
  std::vector<double> grad_or_zero() const;
  void zero_grad();

  // Deep copy of the values. The copy is a leaf with the same requires_grad flag.
  Tensor clone() const;

  const detail::TensorImpl* id() const { return impl_.get(); }

  static Tensor from_impl(detail::ImplPtr impl);
  const detail::ImplPtr& impl() const { return impl_; }

 private:
  detail::TensorImpl& checked() const;
  detail::ImplPtr impl_;
};

// Reverse pass from a scalar. Interior gradients are recomputed on every call;
// leaf gradients accumulate until zero_grad().
void backward(const Tensor& loss);

void zero_grad(std::span<Tensor> params);

}  // namespace coboom
