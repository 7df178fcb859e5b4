#pragma once

#include <string>
#include <utility>
#include <vector>

#include "poselift/tensor.hpp"

namespace poselift {

struct SkeletonTopology {
  std::size_t num_joints = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;       // unordered pairs
  std::vector<std::pair<std::size_t, std::size_t>> flip_pairs;  // (left, right)
  std::size_t root = 0;

  // Throws ConfigError on out-of-range indices, self-loops, duplicate edges,
  // or flip pairs that reuse a joint.
  void validate() const;
};

SkeletonTopology parse_topology_json(const std::string& text);
SkeletonTopology load_topology(const std::string& path);

// Built-in 5-joint fixture (two chains 0-1-2 and 0-3-4 sharing the root);
// small enough for fast finite-difference sweeps.
SkeletonTopology tiny5_topology();

// Exact-distance hop matrices A^0..A^R: A^k[i][j] = 1 iff the shortest path
// from i to j has exactly k edges. A^0 is the identity.
std::vector<Tensor> build_khop_adjacency(const SkeletonTopology& topology, int highest_order);

// D^(-1/2) A D^(-1/2) with zero-degree rows mapped to zero. Input must be
// square, symmetric, and binary.
Tensor normalize_adjacency(const Tensor& a);

struct OrderedAdjacencySet {
  std::size_t num_joints = 0;
  std::size_t highest_order = 0;
  std::vector<Tensor> matrices;  // normalized, index = order
};

OrderedAdjacencySet build_ordered_adjacency(const SkeletonTopology& topology,
                                            int highest_order);

}  // namespace poselift
