#include "poselift/gradcheck_suite.hpp"

#include <algorithm>

#include "poselift/gradcheck.hpp"
#include "poselift/ops.hpp"
#include "poselift/rng.hpp"

namespace poselift {

namespace {

Tensor seeded_tensor(Shape shape, double lo, double hi, std::uint64_t stream) {
  auto gen = seeded_stream(0x9c7d, "gradcheck", stream);
  std::size_t numel = 1;
  for (std::size_t d : shape) numel *= d;
  std::vector<double> values(numel);
  for (double& v : values) v = uniform_range(gen, lo, hi);
  return Tensor::from_values(std::move(shape), std::move(values));
}

double check_spatial(const ModelConfig& config, const SkeletonTopology& topology) {
  const std::size_t joints = config.num_joints;
  const std::size_t dim = config.hidden_dim;
  auto adjacency = build_ordered_adjacency(
      topology, static_cast<int>(config.highest_order));
  const std::size_t orders = config.highest_order + 1;

  Tensor mixer = seeded_tensor({joints, dim}, 0.2, 1.0, 1);
  const std::size_t frame_n = joints * 2;
  const std::size_t w_n = 2 * dim;
  const std::size_t wq_n = dim * dim;
  std::vector<std::size_t> sizes = {frame_n};
  for (std::size_t k = 0; k < orders; ++k) sizes.push_back(w_n);
  sizes.push_back(wq_n);
  sizes.push_back(wq_n);
  sizes.push_back(dim);
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;

  auto f = [&](const Tensor& packed) {
    auto parts = ops::split(packed, 0, sizes);
    Tensor frame = ops::reshape(parts[0], {joints, 2});
    std::vector<Tensor> weights;
    for (std::size_t k = 0; k < orders; ++k) {
      weights.push_back(ops::reshape(parts[1 + k], {2, dim}));
    }
    GoaParams goa;
    goa.w_q = ops::reshape(parts[1 + orders], {dim, dim});
    goa.w_k = ops::reshape(parts[2 + orders], {dim, dim});
    goa.w_o = parts[3 + orders];
    auto result = goa_forward(mo_gcn_forward(frame, adjacency, weights), goa);
    return ops::sum_all(ops::mul(result.pre_activation, mixer));
  };
  return finite_difference_check(f, seeded_tensor({total}, -0.9, 0.9, 2));
}

double check_temporal(const ModelConfig& config, const SkeletonTopology& topology) {
  Model model = build_model(config, topology, 5);
  const std::size_t frames = config.frames_after_drop();
  const std::size_t joints = config.num_joints;
  const std::size_t dim = config.hidden_dim;
  const std::size_t width = config.feature_width();
  const BatBlockParams& block = model.params.blocks.front();

  Tensor mixer = seeded_tensor({frames, width}, 0.2, 1.0, 3);
  auto run_block = [&](const Tensor& x, const BatBlockParams& params) {
    ops::BatchNormState state(width);
    auto result = bat_block_forward(x, params, state, true, config.bcma_scaling);
    return ops::sum_all(ops::mul(result.out, mixer));
  };

  auto wrt_input = [&](const Tensor& packed) {
    return run_block(ops::reshape(packed, {frames, joints, dim}), block);
  };
  double err = finite_difference_check(
      wrt_input, seeded_tensor({frames * joints * dim}, -0.8, 0.8, 4));

  Tensor x = seeded_tensor({frames, joints, dim}, -0.8, 0.8, 5);
  const std::size_t wj_n = frames * joints;
  auto wrt_params = [&](const Tensor& packed) {
    BatBlockParams forked = block;
    forked.w_j = ops::reshape(ops::slice(packed, 0, 0, wj_n), {frames, joints});
    forked.bcma.w_f = ops::slice(packed, 0, wj_n, 1);
    forked.bn_gain = ops::slice(packed, 0, wj_n + 1, width);
    forked.bn_bias = ops::slice(packed, 0, wj_n + 1 + width, width);
    return run_block(x, forked);
  };
  err = std::max(err, finite_difference_check(
                          wrt_params,
                          seeded_tensor({wj_n + 1 + 2 * width}, 0.2, 1.0, 6)));
  return err;
}

double check_model(const ModelConfig& config, const SkeletonTopology& topology) {
  Model model = build_model(config, topology, 7);
  const std::size_t frames = config.input_frames;
  const std::size_t joints = config.num_joints;
  const std::size_t width = config.feature_width();
  const std::size_t blocks = config.num_blocks;

  auto fresh_state = [&]() {
    return ModelState{ops::BatchNormState(width),
                      std::vector<ops::BatchNormState>(blocks,
                                                       ops::BatchNormState(width))};
  };
  Tensor mixer = seeded_tensor({joints, 3}, 0.2, 1.0, 7);

  auto wrt_input = [&](const Tensor& packed) {
    Model fork = model;  // shares parameter tensors, forks batch-norm state
    fork.state = fresh_state();
    Tensor out = model_forward(fork, ops::reshape(packed, {frames, joints, 2}), true);
    return ops::sum_all(ops::mul(out, mixer));
  };
  double err = finite_difference_check(
      wrt_input, seeded_tensor({frames * joints * 2}, -0.8, 0.8, 8));

  Tensor seq = seeded_tensor({frames, joints, 2}, -0.8, 0.8, 9);
  const std::size_t dim = config.hidden_dim;
  const std::size_t wq_n = dim * dim;
  auto wrt_params = [&](const Tensor& packed) {
    Model fork = model;
    fork.state = fresh_state();
    fork.params.spatial.goa.w_q =
        ops::reshape(ops::slice(packed, 0, 0, wq_n), {dim, dim});
    fork.params.head_b = ops::slice(packed, 0, wq_n, 3 * joints);
    Tensor out = model_forward(fork, seq, true);
    return ops::sum_all(ops::mul(out, mixer));
  };
  err = std::max(err, finite_difference_check(
                          wrt_params,
                          seeded_tensor({wq_n + 3 * joints}, -0.5, 0.5, 10)));
  return err;
}

}  // namespace

std::vector<ModuleCheck> run_gradcheck_suite(const ModelConfig& config,
                                             const SkeletonTopology& topology,
                                             const std::string& module) {
  config.validate();
  if (module != "all" && module != "spatial" && module != "temporal" &&
      module != "model") {
    throw ConfigError("gradcheck module must be all, spatial, temporal, or model");
  }
  std::vector<ModuleCheck> results;
  if (module == "all" || module == "spatial") {
    results.push_back({"spatial", check_spatial(config, topology)});
  }
  if (module == "all" || module == "temporal") {
    results.push_back({"temporal", check_temporal(config, topology)});
  }
  if (module == "all" || module == "model") {
    results.push_back({"model", check_model(config, topology)});
  }
  return results;
}

}  // namespace poselift
