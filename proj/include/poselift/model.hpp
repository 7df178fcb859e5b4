#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "poselift/skeleton.hpp"
#include "poselift/spatial.hpp"
#include "poselift/temporal.hpp"

namespace poselift {

enum class CentralReduction { Central, Mean };

struct ModelConfig {
  std::size_t num_joints = 17;
  std::size_t input_frames = 9;
  std::size_t drop_rate = 0;      // keep every (drop_rate+1)-th frame
  std::size_t hidden_dim = 32;    // D
  std::size_t highest_order = 3;  // R
  std::size_t num_blocks = 2;     // N
  std::size_t num_heads = 2;      // n
  double center = 0.5;            // P_c
  double pos_factor = 1.0;        // F_pos
  BcmaScaling bcma_scaling = BcmaScaling::Keys;
  CentralReduction central_reduction = CentralReduction::Central;

  std::size_t frames_after_drop() const;  // ceil(input_frames / (drop_rate+1))
  std::size_t feature_width() const { return num_joints * hidden_dim; }
  std::size_t central_index() const { return frames_after_drop() / 2; }
  void validate() const;  // throws ConfigError
};

struct ModelParams {
  SpatialParams spatial;
  Tensor spatial_bn_gain, spatial_bn_bias;  // [G]
  Tensor pos_embedding;                     // [T, G]
  std::vector<BatBlockParams> blocks;
  Tensor head_ln_gain, head_ln_bias;  // [G]
  Tensor head_w, head_b;              // [G, 3J], [3J]

  // Stable dotted paths in a fixed order; the same order drives
  // initialization, optimizer state, and checkpoints.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

struct ModelState {
  ops::BatchNormState spatial_bn;
  std::vector<ops::BatchNormState> block_bn;
};

struct Model {
  ModelConfig config;
  SkeletonTopology topology;
  OrderedAdjacencySet adjacency;
  ModelParams params;
  ModelState state;
};

Model build_model(const ModelConfig& config, const SkeletonTopology& topology,
                  std::uint64_t seed);

// Keeps frame indices 0, r+1, 2(r+1), ...; differentiable.
Tensor drop_frames(const Tensor& seq, std::size_t drop_rate);

struct ModelTrace {
  Tensor ott;                     // [T, J, R+1]
  std::vector<Tensor> jtt;        // per block [T, J]
  std::vector<Tensor> attention;  // per block [n, T, T]
  std::vector<Tensor> pscl;       // per block [T]
};

// seq2d: [T_in, J, 2] -> [J, 3] central-frame pose. Training mode updates
// batch-norm running statistics.
Tensor model_forward(Model& model, const Tensor& seq2d, bool training,
                     ModelTrace* trace = nullptr);

struct ParameterCount {
  std::size_t total = 0;
  std::vector<std::pair<std::string, std::size_t>> per_path;
};

ParameterCount count_parameters(const ModelParams& params);
// Analytic twin computed from shapes alone; must agree with the tensor-backed
// count and stays cheap for multi-million-parameter configs.
ParameterCount count_parameters(const ModelConfig& config);

}  // namespace poselift
