#pragma once

#include "poselift/ops.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/tensor.hpp"

namespace poselift {

struct GoaParams {
  Tensor w_q;  // [D, D]
  Tensor w_k;  // [D, D]
  Tensor w_o;  // [D]
};

struct SpatialParams {
  std::vector<Tensor> order_weights;  // one [in_dim, D] per order 0..R
  GoaParams goa;
};

// Per order k: S^k = A~^k . S . W^k (no activation), stacked along a new
// order axis. Accepts a single frame [J, in] -> [J, R+1, D] or a whole
// sequence [T, J, in] -> [T, J, R+1, D].
Tensor mo_gcn_forward(const Tensor& frames, const OrderedAdjacencySet& adjacency,
                      const std::vector<Tensor>& order_weights);

struct GoaResult {
  Tensor activated;       // relu(pre_activation)
  Tensor pre_activation;  // weighted sum over orders, pre nonlinearity
  Tensor ott;             // order attention, [.., J, R+1]
};

// Graph Order Attention: logits = tanh(OrdS.W_q + OrdS.W_k).W_o, softmax over
// the order axis, then a weighted sum of the order slices. Accepts
// [J, R+1, D] or [T, J, R+1, D].
GoaResult goa_forward(const Tensor& ord_s, const GoaParams& params);

}  // namespace poselift
