#include "poselift/temporal.hpp"

#include <cmath>

namespace poselift {

JwaResult jwa_forward(const Tensor& x, const Tensor& w_j) {
  if (x.rank() != 3) {
    throw ShapeError("jwa_forward: expects [T,J,D], got " + shape_str(x.shape()));
  }
  const std::size_t frames = x.dim(0), joints = x.dim(1);
  if (w_j.shape() != Shape{frames, joints}) {
    throw ShapeError("jwa_forward: weight " + shape_str(w_j.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  JwaResult result;
  result.logits = ops::mul(ops::mean(x, 2), w_j);          // [T,J]
  result.jtt = ops::softmax(result.logits, 0);             // over frames
  result.weighted = ops::mul(x, ops::reshape(result.jtt, {frames, joints, 1}));
  return result;
}

Tensor central_scaling(std::size_t frames, double center, double pos_factor,
                       const Tensor& w_f) {
  if (frames < 1) throw ContractError("central_scaling: need at least one frame");
  if (w_f.numel() != 1) {
    throw ShapeError("central_scaling: w_f must hold one value, got " +
                     shape_str(w_f.shape()));
  }
  std::vector<double> dis(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const double pos =
        frames == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(frames - 1);
    dis[t] = (pos - center) * (pos - center);
  }
  Tensor dis_t = Tensor::from_values({frames}, dis);
  Tensor w = w_f.rank() == 1 ? w_f : ops::reshape(w_f, {1});
  return ops::exp(ops::scalar_mul(ops::mul(dis_t, w), -pos_factor));
}

BcmaResult bcma_forward(const Tensor& x, const BcmaParams& params,
                        BcmaScaling scaling) {
  if (x.rank() != 2) {
    throw ShapeError("bcma_forward: expects [T,G], got " + shape_str(x.shape()));
  }
  const std::size_t frames = x.dim(0), width = x.dim(1);
  const std::size_t heads = params.w_q.size();
  if (heads == 0 || params.w_k.size() != heads || params.w_v.size() != heads) {
    throw ConfigError("bcma_forward: need matching W_q/W_k/W_v per head");
  }
  if (width % heads != 0) {
    throw ConfigError("bcma_forward: width " + std::to_string(width) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t head_dim = width / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    const Shape expect{width, head_dim};
    if (params.w_q[h].shape() != expect || params.w_k[h].shape() != expect ||
        params.w_v[h].shape() != expect) {
      throw ShapeError("bcma_forward: head " + std::to_string(h) +
                       " weights must be " + shape_str(expect));
    }
  }
  if (params.w_o.shape() != Shape{width, width}) {
    throw ShapeError("bcma_forward: W_o must be " + shape_str({width, width}) +
                     ", got " + shape_str(params.w_o.shape()));
  }

  Tensor pscl = central_scaling(frames, params.center, params.pos_factor, params.w_f);
  const double inv_sqrt_width = 1.0 / std::sqrt(static_cast<double>(width));

  std::vector<Tensor> head_outputs, head_attention;
  head_outputs.reserve(heads);
  head_attention.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor q = ops::matmul(x, params.w_q[h]);  // [T, G/n]
    Tensor k = ops::matmul(x, params.w_k[h]);
    Tensor v = ops::matmul(x, params.w_v[h]);
    Tensor scores = ops::scalar_mul(ops::matmul(q, ops::transpose(k)), inv_sqrt_width);
    Tensor attn;
    switch (scaling) {
      case BcmaScaling::Keys:
        attn = ops::softmax(ops::mul(scores, pscl), 1);
        break;
      case BcmaScaling::Queries:
        attn = ops::softmax(ops::mul(scores, ops::reshape(pscl, {frames, 1})), 1);
        break;
      case BcmaScaling::Post:
        attn = ops::mul(ops::softmax(scores, 1), pscl);
        break;
    }
    head_attention.push_back(attn);
    head_outputs.push_back(ops::matmul(attn, v));  // [T, G/n]
  }
  BcmaResult result;
  result.out = ops::matmul(ops::concat(head_outputs, 1), params.w_o);
  result.attention = ops::stack(head_attention, 0);  // [n,T,T]
  result.pscl = pscl;
  return result;
}

BatBlockResult bat_block_forward(const Tensor& x, const BatBlockParams& params,
                                 ops::BatchNormState& bn_state, bool training,
                                 BcmaScaling scaling) {
  if (x.rank() != 3) {
    throw ShapeError("bat_block_forward: expects [T,J,D], got " + shape_str(x.shape()));
  }
  const std::size_t frames = x.dim(0), joints = x.dim(1), dim = x.dim(2);
  const std::size_t width = joints * dim;

  BatBlockResult result;
  Tensor normed = ops::layer_norm(x, params.ln1_gain, params.ln1_bias);
  result.jwa = jwa_forward(normed, params.w_j);
  Tensor flat = ops::reshape(result.jwa.weighted, {frames, width});
  Tensor pre_attn = ops::layer_norm(flat, params.ln2_gain, params.ln2_bias);
  result.bcma = bcma_forward(pre_attn, params.bcma, scaling);

  Tensor residual = ops::add(result.bcma.out, ops::reshape(x, {frames, width}));
  Tensor y3 = ops::batch_norm(residual, params.bn_gain, params.bn_bias, bn_state,
                              training);
  Tensor hidden = ops::relu(ops::linear(y3, params.mlp_w1, params.mlp_b1));
  Tensor mlp_out = ops::linear(hidden, params.mlp_w2, params.mlp_b2);
  result.out = ops::add(y3, mlp_out);
  return result;
}

}  // namespace poselift
