#include "poselift/spatial.hpp"

namespace poselift {

Tensor mo_gcn_forward(const Tensor& frames, const OrderedAdjacencySet& adjacency,
                      const std::vector<Tensor>& order_weights) {
  if (frames.rank() != 2 && frames.rank() != 3) {
    throw ShapeError("mo_gcn_forward: expects [J,in] or [T,J,in], got " +
                     shape_str(frames.shape()));
  }
  const bool single = frames.rank() == 2;
  Tensor x = single ? ops::reshape(frames, {1, frames.dim(0), frames.dim(1)}) : frames;
  const std::size_t joints = x.dim(1);
  if (joints != adjacency.num_joints) {
    throw ShapeError("mo_gcn_forward: input has " + std::to_string(joints) +
                     " joints but adjacency expects " +
                     std::to_string(adjacency.num_joints));
  }
  if (order_weights.size() != adjacency.matrices.size()) {
    throw ShapeError("mo_gcn_forward: " + std::to_string(order_weights.size()) +
                     " order weights for " + std::to_string(adjacency.matrices.size()) +
                     " adjacency orders");
  }
  std::vector<Tensor> slices;
  slices.reserve(order_weights.size());
  for (std::size_t k = 0; k < order_weights.size(); ++k) {
    if (order_weights[k].rank() != 2 || order_weights[k].dim(0) != x.dim(2)) {
      throw ShapeError("mo_gcn_forward: order " + std::to_string(k) + " weight " +
                       shape_str(order_weights[k].shape()) + " does not accept " +
                       std::to_string(x.dim(2)) + " input features");
    }
    Tensor gathered = ops::matmul(adjacency.matrices[k], x);  // [T,J,in]
    slices.push_back(ops::matmul(gathered, order_weights[k]));  // [T,J,D]
  }
  Tensor stacked = ops::stack(slices, 2);  // [T,J,R+1,D]
  if (single) {
    return ops::reshape(stacked, {joints, slices.size(), stacked.dim(3)});
  }
  return stacked;
}

GoaResult goa_forward(const Tensor& ord_s, const GoaParams& params) {
  if (ord_s.rank() != 3 && ord_s.rank() != 4) {
    throw ShapeError("goa_forward: expects [J,orders,D] or [T,J,orders,D], got " +
                     shape_str(ord_s.shape()));
  }
  const bool single = ord_s.rank() == 3;
  Tensor x = single
                 ? ops::reshape(ord_s, {1, ord_s.dim(0), ord_s.dim(1), ord_s.dim(2)})
                 : ord_s;
  const std::size_t frames = x.dim(0), joints = x.dim(1);
  const std::size_t orders = x.dim(2), dim = x.dim(3);
  if (params.w_q.shape() != Shape{dim, dim} || params.w_k.shape() != Shape{dim, dim} ||
      params.w_o.numel() != dim) {
    throw ShapeError("goa_forward: attention weights do not match feature dim " +
                     std::to_string(dim));
  }
  Tensor q = ops::matmul(x, params.w_q);
  Tensor k = ops::matmul(x, params.w_k);
  Tensor mixed = ops::tanh(ops::add(q, k));  // [T,J,orders,D]
  Tensor logits = ops::reshape(
      ops::matmul(mixed, ops::reshape(params.w_o, {dim, 1})),
      {frames, joints, orders});
  Tensor ott = ops::softmax(logits, 2);
  Tensor weighted = ops::mul(x, ops::reshape(ott, {frames, joints, orders, 1}));
  Tensor pre = ops::sum(weighted, 2);  // [T,J,D]

  GoaResult result;
  if (single) {
    pre = ops::reshape(pre, {joints, dim});
    ott = ops::reshape(ott, {joints, orders});
  }
  result.pre_activation = pre;
  result.activated = ops::relu(pre);
  result.ott = ott;
  return result;
}

}  // namespace poselift
