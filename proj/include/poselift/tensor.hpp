#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace poselift {

/// Dimension sizes, outermost first. Rank 0 (empty shape) is a scalar with one element.
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
std::vector<std::size_t> row_major_strides(const Shape& shape);

/// Shape or axis mismatch in a primitive; the message names the primitive and axes.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation contract (non-scalar loss, second backward, bad argument).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (file or structural).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File input/output failure; message carries the location when known.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN/Inf surfaced where finite values are required. `index` is the flat
/// coordinate that triggered it, or SIZE_MAX when not coordinate-specific.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& msg, std::size_t index)
      : std::runtime_error(msg), index(index) {}
  std::size_t index;
};

namespace detail {

/// One record of the computation graph. Nodes are created in construction
/// order (`seq` is monotone), so traversing reachable nodes by descending
/// seq replays exactly the reverse construction order.
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // allocated lazily, same layout as values

  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;  // unset on leaves and constants
  std::uint64_t seq = 0;
  bool consumed = false;  // a backward pass already ran through this node
  const char* op = "";

  void ensure_grad();
};

std::uint64_t next_seq();

}  // namespace detail

/// Dense row-major double tensor with a reverse-mode autodiff handle.
/// Cheap to copy: copies share the underlying node (PyTorch-style handle).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();
  double item() const;  // single-element tensors only
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool enabled);

  bool has_grad() const;
  const std::vector<double>& grad() const;
  std::vector<double>& mutable_grad();  // allocates zeros if absent
  void zero_grad();

  /// Reverse-mode pass from this scalar. Gradients accumulate (+=) into every
  /// requires_grad tensor reachable through the graph. Running a second pass
  /// through the same graph is a contract error.
  void backward() const;

  /// Value-only copy: fresh storage, no graph, no grad, requires_grad off.
  Tensor detached() const;

  bool all_finite() const;

  // Graph plumbing for the op layer.
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::TensorNode> node);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

}  // namespace poselift
