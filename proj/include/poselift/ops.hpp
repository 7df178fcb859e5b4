#pragma once

#include <vector>

#include "poselift/tensor.hpp"

namespace poselift::ops {

/// Running batch-norm statistics (exponential moving average), one entry per
/// channel. Mean starts at 0, variance at 1.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

// Every primitive records a graph node when any input requires grad and
// supplies the matching backward rule. Broadcasting (where noted) aligns
// shapes on trailing axes and expands size-1 axes; backward reduces over
// the broadcast axes.

/// [..., m, k] x [..., k, n] -> [..., m, n]; either operand may be rank-2 and
/// is then shared across the other's leading batch axes.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);   // broadcasting
Tensor sub(const Tensor& a, const Tensor& b);   // broadcasting
Tensor mul(const Tensor& a, const Tensor& b);   // broadcasting, elementwise
Tensor scalar_mul(const Tensor& a, double factor);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& x, std::size_t axis,
                          const std::vector<std::size_t>& sizes);
/// Concat along a fresh axis inserted at `axis` (every part keeps its shape).
Tensor stack(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& x, std::size_t axis);   // drops the axis
Tensor mean(const Tensor& x, std::size_t axis);  // drops the axis
Tensor sum_all(const Tensor& x);                 // rank-0 result
Tensor mean_all(const Tensor& x);

Tensor exp(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sqrt(const Tensor& x);  // d/dx at 0 taken as 0 (subgradient)

Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes over the last axis with population variance; gain/bias shapes
/// must equal the last-axis extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Normalizes a [B, C] tensor over the batch (leading) axis per channel.
/// Training mode uses batch statistics (population variance) and folds them
/// into `state` with the given momentum; eval mode normalizes with `state`.
Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  BatchNormState& state, bool training, double momentum = 0.1,
                  double eps = 1e-5);

/// x [..., in] * weight [in, out] + bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // swaps the last two axes

}  // namespace poselift::ops
