#include "coboom/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "coboom/error.hpp"

namespace coboom {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

double* TensorImpl::grad_sink() {
  if (!requires_grad) return nullptr;
  if (grad.empty()) grad.assign(values.size(), 0.0);
  return grad.data();
}

}  // namespace detail

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) {
  check_shape(shape);
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->values.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::from_impl(detail::ImplPtr impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

detail::TensorImpl& Tensor::checked() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }
std::size_t Tensor::numel() const { return checked().values.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::span<const double> Tensor::values() const { return checked().values; }

std::span<double> Tensor::mutable_values() {
  auto& impl = checked();
  if (impl.node) throw ContractError("cannot mutate values of a non-leaf tensor");
  return impl.values;
}

double Tensor::item() const {
  const auto& impl = checked();
  if (impl.values.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(impl.shape));
  }
  return impl.values[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  auto& impl = checked();
  if (impl.node) throw ContractError("requires_grad can only be changed on leaf tensors");
  impl.requires_grad = on;
  if (!on) impl.grad.clear();
  return *this;
}

bool Tensor::is_leaf() const { return checked().node == nullptr; }

std::string_view Tensor::op() const {
  const auto& impl = checked();
  return impl.node ? impl.node->op : std::string_view{"leaf"};
}

bool Tensor::has_grad() const { return !checked().grad.empty(); }
std::span<const double> Tensor::grad() const { return checked().grad; }

std::vector<double> Tensor::grad_or_zero() const {
  const auto& impl = checked();
  if (impl.grad.empty()) return std::vector<double>(impl.values.size(), 0.0);
  return impl.grad;
}

void Tensor::zero_grad() { checked().grad.clear(); }

Tensor Tensor::clone() const {
  const auto& impl = checked();
  Tensor t(impl.shape, impl.values);
  t.impl_->requires_grad = impl.requires_grad;
  return t;
}

void zero_grad(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  detail::TensorImpl* root = loss.impl().get();
  if (!root->requires_grad) return;
  if (!root->node) {
    root->grad_sink()[0] += 1.0;
    return;
  }

  // Post-order DFS gives a topological order of the interior nodes.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<const detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (next < impl->node->parents.size()) {
      detail::TensorImpl* parent = impl->node->parents[next++].get();
      if (parent->node && parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  for (auto* impl : order) impl->grad.assign(impl->values.size(), 0.0);
  root->grad[0] = 1.0;

  std::unordered_set<detail::TensorImpl*> leaves;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* impl = *it;
    impl->node->backward(*impl);
    for (const auto& p : impl->node->parents) {
      if (!p->node && p->requires_grad) leaves.insert(p.get());
    }
  }
  for (auto* leaf : leaves) {
    for (double g : leaf->grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient reached a leaf tensor");
    }
  }
}

}  // namespace coboom
