#include "poselift/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace poselift {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

namespace detail {

void TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
}

std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace detail

using detail::TensorNode;

Tensor Tensor::wrap(std::shared_ptr<TensorNode> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->values.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  node->seq = detail::next_seq();
  return wrap(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_values: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " elements, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = detail::next_seq();
  return wrap(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_values({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::numel() const { return node_->values.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("dim: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(node_->shape));
  }
  return node_->shape[axis];
}

const std::vector<double>& Tensor::values() const { return node_->values; }

std::vector<double>& Tensor::mutable_values() { return node_->values; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor of shape " + shape_str(shape()) +
                        " is not a single element");
  }
  return node_->values[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) {
    throw ShapeError("at: index rank " + std::to_string(index.size()) +
                     " does not match shape " + shape_str(shape()));
  }
  auto strides = row_major_strides(shape());
  std::size_t flat = 0, axis = 0;
  for (std::size_t i : index) {
    if (i >= shape()[axis]) {
      throw ShapeError("at: index " + std::to_string(i) + " out of range on axis " +
                       std::to_string(axis) + " of shape " + shape_str(shape()));
    }
    flat += i * strides[axis++];
  }
  return node_->values[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool enabled) {
  node_->requires_grad = enabled;
  if (!enabled) node_->grad.clear();
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) {
    throw ContractError("grad: no gradient buffer present; run backward() first");
  }
  return node_->grad;
}

std::vector<double>& Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detached() const {
  return from_values(shape(), values(), false);
}

bool Tensor::all_finite() const {
  for (double v : node_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::backward() const {
  if (!node_) throw ContractError("backward: undefined tensor");
  if (numel() != 1) {
    throw ContractError("backward: loss must be a single element, got shape " +
                        shape_str(shape()));
  }
  if (!node_->requires_grad) return;  // nothing reachable requires grad

  // Reachable interior nodes, replayed in reverse construction order.
  std::vector<TensorNode*> nodes;
  std::unordered_set<TensorNode*> visited;
  std::vector<TensorNode*> stack{node_.get()};
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !visited.insert(n).second) continue;
    if (n->backward_fn) nodes.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->seq > b->seq; });

  for (TensorNode* n : nodes) {
    if (n->consumed) {
      throw ContractError(
          "backward: graph already consumed by a previous backward pass (op '" +
          std::string(n->op) + "')");
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (TensorNode* n : nodes) {
    n->backward_fn();
    n->consumed = true;
  }
}

}  // namespace poselift
