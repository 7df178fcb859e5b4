#pragma once

#include "poselift/ops.hpp"
#include "poselift/tensor.hpp"

namespace poselift {

struct JwaResult {
  Tensor weighted;  // [T,J,D]
  Tensor jtt;       // [T,J], softmax over the frame axis per joint
  Tensor logits;    // [T,J], pre-softmax
};

// Joints Weighted Attention: logits = mean_D(x) * W^J elementwise, Jtt is the
// per-joint softmax over frames, output scales each joint vector by Jtt.
JwaResult jwa_forward(const Tensor& x, const Tensor& w_j);

// P_scl = exp(-pos_factor * W^F * (Pos - center)^2) with Pos evenly spaced on
// [0,1] (single frame sits at 0). w_f is a one-element learnable tensor.
Tensor central_scaling(std::size_t frames, double center, double pos_factor,
                       const Tensor& w_f);

enum class BcmaScaling { Keys, Queries, Post };

struct BcmaParams {
  std::vector<Tensor> w_q, w_k, w_v;  // per head, each [G, G/n]
  Tensor w_o;                         // [G, G]
  Tensor w_f;                         // [1], learnable scale inside P_scl
  double pos_factor = 1.0;
  double center = 0.5;
};

struct BcmaResult {
  Tensor out;        // [T, G]
  Tensor attention;  // [n, T, T], rows = queries
  Tensor pscl;       // [T]
};

// Body-Centred Multi-head Attention. Scores use 1/sqrt(G) and are scaled by
// P_scl along the axis selected by `scaling` (keys by default) before the
// key-axis softmax; Post scales the stochastic matrix instead.
BcmaResult bcma_forward(const Tensor& x, const BcmaParams& params,
                        BcmaScaling scaling = BcmaScaling::Keys);

struct BatBlockParams {
  Tensor w_j;                             // [T, J]
  BcmaParams bcma;
  Tensor ln1_gain, ln1_bias;              // [D], before JWA
  Tensor ln2_gain, ln2_bias;              // [G], before BCMA
  Tensor bn_gain, bn_bias;                // [G], after the first residual
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;  // G -> 2G -> G
};

struct BatBlockResult {
  Tensor out;  // [T, G]
  JwaResult jwa;
  BcmaResult bcma;
};

BatBlockResult bat_block_forward(const Tensor& x, const BatBlockParams& params,
                                 ops::BatchNormState& bn_state, bool training,
                                 BcmaScaling scaling = BcmaScaling::Keys);

}  // namespace poselift
