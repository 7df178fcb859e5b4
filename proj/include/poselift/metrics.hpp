#pragma once

#include <stdexcept>

#include "poselift/skeleton.hpp"
#include "poselift/tensor.hpp"

namespace poselift {

// Degenerate geometry (collinear target, collapsed prediction) makes the
// similarity alignment of Protocol#2 ill-posed.
class AlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mean over joints of the Euclidean distance per joint; differentiable.
Tensor mpjpe_loss(const Tensor& pred, const Tensor& gt);

// Value-only convenience wrapper around mpjpe_loss.
double mpjpe(const Tensor& pred, const Tensor& gt);

// Protocol#2: rigidly aligns pred to gt with the optimal translation,
// rotation (no reflection), and uniform scale, then measures MPJPE.
double p_mpjpe(const Tensor& pred, const Tensor& gt);

struct FlippedPair {
  Tensor seq2d;  // [T, J, 2]
  Tensor gt3d;   // [J, 3]
};

// Mirrors a sample: negates x coordinates and swaps each (left, right) joint
// pair in both the 2D sequence and the 3D target.
FlippedPair flip_augment(const Tensor& seq2d, const Tensor& gt3d,
                         const SkeletonTopology& topology);

}  // namespace poselift
