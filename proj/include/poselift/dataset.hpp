#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poselift/skeleton.hpp"
#include "poselift/tensor.hpp"

namespace poselift {

struct PoseSequenceRecord {
  std::string id;
  Tensor frames_2d;   // [T, J, 2]
  Tensor target_3d;   // [J, 3] central-frame target; undefined when absent
  std::string topology_id;

  bool has_target() const { return target_3d.defined(); }
};

// One JSON object per line. A stored [T, J, 3] target collapses to its
// central frame on load. Joint counts are checked against the topology;
// failures report the 1-based line number.
std::vector<PoseSequenceRecord> load_dataset(const std::string& path,
                                             const SkeletonTopology& topology);
void save_dataset(const std::string& path,
                  const std::vector<PoseSequenceRecord>& records);

struct SyntheticOptions {
  double noise_sigma = 0.01;      // 2d noise std dev; skeleton scale is 1
  double motion_amplitude = 1.0;  // 0 freezes the pose across frames
  std::string topology_id = "synthetic";
};

// Rigid skeletons: fixed-length bone vectors rotated smoothly over time by
// per-joint sinusoidal angles. The farthest joint starts at distance 1 from
// the root, so noise and error thresholds read as fractions of skeleton
// scale. Targets are the central frame, root-relative. When frames_3d_out is
// given it receives the full noise-free [T, J, 3] sequence per record.
std::vector<PoseSequenceRecord> generate_synthetic(std::size_t num_sequences,
                                                   std::size_t frames,
                                                   const SkeletonTopology& topology,
                                                   std::uint64_t seed,
                                                   const SyntheticOptions& options = {},
                                                   std::vector<Tensor>* frames_3d_out = nullptr);

}  // namespace poselift
