#include "poselift/model.hpp"

#include <cmath>

#include "poselift/rng.hpp"

namespace poselift {

std::size_t ModelConfig::frames_after_drop() const {
  return (input_frames + drop_rate) / (drop_rate + 1);
}

void ModelConfig::validate() const {
  if (num_joints == 0) throw ConfigError("config: num_joints must be positive");
  if (input_frames == 0) throw ConfigError("config: input_frames must be positive");
  if (hidden_dim == 0) throw ConfigError("config: hidden_dim must be positive");
  if (num_blocks == 0) throw ConfigError("config: num_blocks must be positive");
  if (num_heads == 0) throw ConfigError("config: num_heads must be positive");
  if (feature_width() % num_heads != 0) {
    throw ConfigError("config: feature width " + std::to_string(feature_width()) +
                      " not divisible by " + std::to_string(num_heads) + " heads");
  }
  if (center < 0.0 || center > 1.0) {
    throw ConfigError("config: center must lie in [0,1], got " + std::to_string(center));
  }
  if (pos_factor < 0.0) {
    throw ConfigError("config: pos_factor must be non-negative");
  }
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> named;
  for (std::size_t k = 0; k < spatial.order_weights.size(); ++k) {
    named.emplace_back("spatial.order_weight." + std::to_string(k),
                       spatial.order_weights[k]);
  }
  named.emplace_back("spatial.goa.w_q", spatial.goa.w_q);
  named.emplace_back("spatial.goa.w_k", spatial.goa.w_k);
  named.emplace_back("spatial.goa.w_o", spatial.goa.w_o);
  named.emplace_back("spatial.bn.gain", spatial_bn_gain);
  named.emplace_back("spatial.bn.bias", spatial_bn_bias);
  named.emplace_back("pos_embedding", pos_embedding);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string base = "block." + std::to_string(i) + ".";
    const BatBlockParams& b = blocks[i];
    named.emplace_back(base + "w_j", b.w_j);
    for (std::size_t h = 0; h < b.bcma.w_q.size(); ++h) {
      const std::string head = base + "bcma.head." + std::to_string(h) + ".";
      named.emplace_back(head + "w_q", b.bcma.w_q[h]);
      named.emplace_back(head + "w_k", b.bcma.w_k[h]);
      named.emplace_back(head + "w_v", b.bcma.w_v[h]);
    }
    named.emplace_back(base + "bcma.w_o", b.bcma.w_o);
    named.emplace_back(base + "bcma.w_f", b.bcma.w_f);
    named.emplace_back(base + "ln1.gain", b.ln1_gain);
    named.emplace_back(base + "ln1.bias", b.ln1_bias);
    named.emplace_back(base + "ln2.gain", b.ln2_gain);
    named.emplace_back(base + "ln2.bias", b.ln2_bias);
    named.emplace_back(base + "bn.gain", b.bn_gain);
    named.emplace_back(base + "bn.bias", b.bn_bias);
    named.emplace_back(base + "mlp.w1", b.mlp_w1);
    named.emplace_back(base + "mlp.b1", b.mlp_b1);
    named.emplace_back(base + "mlp.w2", b.mlp_w2);
    named.emplace_back(base + "mlp.b2", b.mlp_b2);
  }
  named.emplace_back("head.ln.gain", head_ln_gain);
  named.emplace_back("head.ln.bias", head_ln_bias);
  named.emplace_back("head.w", head_w);
  named.emplace_back("head.b", head_b);
  return named;
}

namespace {

Tensor uniform_init(std::mt19937_64& gen, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> vals(shape_numel(shape));
  for (double& v : vals) v = uniform_range(gen, -bound, bound);
  return Tensor::from_values(std::move(shape), std::move(vals), true);
}

Tensor normal_init(std::mt19937_64& gen, Shape shape, double stddev) {
  std::vector<double> vals(shape_numel(shape));
  for (double& v : vals) v = normal_draw(gen, 0.0, stddev);
  return Tensor::from_values(std::move(shape), std::move(vals), true);
}

Tensor const_init(Shape shape, double value) {
  return Tensor::full(std::move(shape), value, true);
}

}  // namespace

Model build_model(const ModelConfig& config, const SkeletonTopology& topology,
                  std::uint64_t seed) {
  config.validate();
  topology.validate();
  if (topology.num_joints != config.num_joints) {
    throw ConfigError("config: num_joints " + std::to_string(config.num_joints) +
                      " does not match topology with " +
                      std::to_string(topology.num_joints) + " joints");
  }
  Model model;
  model.config = config;
  model.topology = topology;
  model.adjacency =
      build_ordered_adjacency(topology, static_cast<int>(config.highest_order));

  const std::size_t frames = config.frames_after_drop();
  const std::size_t joints = config.num_joints;
  const std::size_t dim = config.hidden_dim;
  const std::size_t width = config.feature_width();
  const std::size_t head_dim = width / config.num_heads;

  auto gen = seeded_stream(seed, "init");
  ModelParams& p = model.params;
  for (std::size_t k = 0; k <= config.highest_order; ++k) {
    p.spatial.order_weights.push_back(uniform_init(gen, {2, dim}, 2));
  }
  p.spatial.goa.w_q = uniform_init(gen, {dim, dim}, dim);
  p.spatial.goa.w_k = uniform_init(gen, {dim, dim}, dim);
  p.spatial.goa.w_o = uniform_init(gen, {dim}, dim);
  p.spatial_bn_gain = const_init({width}, 1.0);
  p.spatial_bn_bias = const_init({width}, 0.0);
  p.pos_embedding = normal_init(gen, {frames, width}, 0.02);
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    BatBlockParams b;
    b.w_j = const_init({frames, joints}, 1.0);
    for (std::size_t h = 0; h < config.num_heads; ++h) {
      b.bcma.w_q.push_back(uniform_init(gen, {width, head_dim}, width));
      b.bcma.w_k.push_back(uniform_init(gen, {width, head_dim}, width));
      b.bcma.w_v.push_back(uniform_init(gen, {width, head_dim}, width));
    }
    b.bcma.w_o = uniform_init(gen, {width, width}, width);
    b.bcma.w_f = const_init({1}, 1.0);
    b.bcma.pos_factor = config.pos_factor;
    b.bcma.center = config.center;
    b.ln1_gain = const_init({dim}, 1.0);
    b.ln1_bias = const_init({dim}, 0.0);
    b.ln2_gain = const_init({width}, 1.0);
    b.ln2_bias = const_init({width}, 0.0);
    b.bn_gain = const_init({width}, 1.0);
    b.bn_bias = const_init({width}, 0.0);
    b.mlp_w1 = uniform_init(gen, {width, 2 * width}, width);
    b.mlp_b1 = const_init({2 * width}, 0.0);
    b.mlp_w2 = uniform_init(gen, {2 * width, width}, 2 * width);
    b.mlp_b2 = const_init({width}, 0.0);
    p.blocks.push_back(std::move(b));
  }
  p.head_ln_gain = const_init({width}, 1.0);
  p.head_ln_bias = const_init({width}, 0.0);
  p.head_w = uniform_init(gen, {width, 3 * joints}, width);
  p.head_b = const_init({3 * joints}, 0.0);

  model.state.spatial_bn = ops::BatchNormState(width);
  model.state.block_bn.assign(config.num_blocks, ops::BatchNormState(width));
  return model;
}

Tensor drop_frames(const Tensor& seq, std::size_t drop_rate) {
  if (seq.rank() == 0) {
    throw ShapeError("drop_frames: input must have a frame axis");
  }
  if (drop_rate == 0) return seq;
  const std::size_t stride = drop_rate + 1;
  std::vector<Tensor> kept;
  for (std::size_t t = 0; t < seq.dim(0); t += stride) {
    kept.push_back(ops::slice(seq, 0, t, 1));
  }
  return ops::concat(kept, 0);
}

Tensor model_forward(Model& model, const Tensor& seq2d, bool training,
                     ModelTrace* trace) {
  const ModelConfig& cfg = model.config;
  if (seq2d.rank() != 3 || seq2d.dim(2) != 2) {
    throw ShapeError("model_forward: expects [T_in,J,2], got " +
                     shape_str(seq2d.shape()));
  }
  if (seq2d.dim(0) != cfg.input_frames) {
    throw ShapeError("model_forward: got " + std::to_string(seq2d.dim(0)) +
                     " frames, config expects " + std::to_string(cfg.input_frames));
  }
  if (seq2d.dim(1) != cfg.num_joints) {
    throw ShapeError("model_forward: got " + std::to_string(seq2d.dim(1)) +
                     " joints, config expects " + std::to_string(cfg.num_joints));
  }
  for (std::size_t i = 0; i < seq2d.numel(); ++i) {
    if (!std::isfinite(seq2d.values()[i])) {
      throw NonFiniteError("model_forward: non-finite input coordinate", i);
    }
  }

  const std::size_t frames = cfg.frames_after_drop();
  const std::size_t joints = cfg.num_joints;
  const std::size_t dim = cfg.hidden_dim;
  const std::size_t width = cfg.feature_width();
  ModelParams& p = model.params;

  Tensor x = drop_frames(seq2d, cfg.drop_rate);  // [T,J,2]
  Tensor ord_s = mo_gcn_forward(x, model.adjacency, p.spatial.order_weights);
  GoaResult goa = goa_forward(ord_s, p.spatial.goa);
  Tensor flat = ops::reshape(goa.pre_activation, {frames, width});
  Tensor normed = ops::batch_norm(flat, p.spatial_bn_gain, p.spatial_bn_bias,
                                  model.state.spatial_bn, training);
  Tensor features = ops::add(ops::relu(normed), p.pos_embedding);  // [T,G]

  if (trace) {
    trace->ott = goa.ott;
    trace->jtt.clear();
    trace->attention.clear();
    trace->pscl.clear();
  }
  Tensor current = features;
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    Tensor shaped = ops::reshape(current, {frames, joints, dim});
    BatBlockResult block = bat_block_forward(shaped, p.blocks[i],
                                             model.state.block_bn[i], training,
                                             cfg.bcma_scaling);
    if (trace) {
      trace->jtt.push_back(block.jwa.jtt);
      trace->attention.push_back(block.bcma.attention);
      trace->pscl.push_back(block.bcma.pscl);
    }
    current = block.out;  // [T,G]
  }

  Tensor reduced;
  if (cfg.central_reduction == CentralReduction::Central) {
    reduced = ops::slice(current, 0, cfg.central_index(), 1);  // [1,G]
  } else {
    reduced = ops::reshape(ops::mean(current, 0), {1, width});
  }
  Tensor head_in = ops::layer_norm(reduced, p.head_ln_gain, p.head_ln_bias);
  Tensor out = ops::linear(head_in, p.head_w, p.head_b);  // [1, 3J]
  return ops::reshape(out, {joints, 3});
}

ParameterCount count_parameters(const ModelParams& params) {
  ParameterCount count;
  for (const auto& [path, tensor] : params.named_parameters()) {
    count.per_path.emplace_back(path, tensor.numel());
    count.total += tensor.numel();
  }
  return count;
}

ParameterCount count_parameters(const ModelConfig& config) {
  config.validate();
  const std::size_t frames = config.frames_after_drop();
  const std::size_t joints = config.num_joints;
  const std::size_t dim = config.hidden_dim;
  const std::size_t width = config.feature_width();
  const std::size_t head_dim = width / config.num_heads;

  ParameterCount count;
  const auto put = [&count](const std::string& path, std::size_t n) {
    count.per_path.emplace_back(path, n);
    count.total += n;
  };
  for (std::size_t k = 0; k <= config.highest_order; ++k) {
    put("spatial.order_weight." + std::to_string(k), 2 * dim);
  }
  put("spatial.goa.w_q", dim * dim);
  put("spatial.goa.w_k", dim * dim);
  put("spatial.goa.w_o", dim);
  put("spatial.bn.gain", width);
  put("spatial.bn.bias", width);
  put("pos_embedding", frames * width);
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    const std::string base = "block." + std::to_string(i) + ".";
    put(base + "w_j", frames * joints);
    for (std::size_t h = 0; h < config.num_heads; ++h) {
      const std::string head = base + "bcma.head." + std::to_string(h) + ".";
      put(head + "w_q", width * head_dim);
      put(head + "w_k", width * head_dim);
      put(head + "w_v", width * head_dim);
    }
    put(base + "bcma.w_o", width * width);
    put(base + "bcma.w_f", 1);
    put(base + "ln1.gain", dim);
    put(base + "ln1.bias", dim);
    put(base + "ln2.gain", width);
    put(base + "ln2.bias", width);
    put(base + "bn.gain", width);
    put(base + "bn.bias", width);
    put(base + "mlp.w1", width * 2 * width);
    put(base + "mlp.b1", 2 * width);
    put(base + "mlp.w2", 2 * width * width);
    put(base + "mlp.b2", width);
  }
  put("head.ln.gain", width);
  put("head.ln.bias", width);
  put("head.w", width * 3 * joints);
  put("head.b", 3 * joints);
  return count;
}

}  // namespace poselift
