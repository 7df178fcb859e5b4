#include "poselift/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace poselift {

void SkeletonTopology::validate() const {
  if (num_joints == 0) throw ConfigError("topology: num_joints must be positive");
  if (root >= num_joints) {
    throw ConfigError("topology: root " + std::to_string(root) + " out of range for " +
                      std::to_string(num_joints) + " joints");
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [a, b] : edges) {
    if (a >= num_joints || b >= num_joints) {
      throw ConfigError("topology: edge (" + std::to_string(a) + "," + std::to_string(b) +
                        ") out of range for " + std::to_string(num_joints) + " joints");
    }
    if (a == b) {
      throw ConfigError("topology: self-loop on joint " + std::to_string(a));
    }
    auto key = std::minmax(a, b);
    if (!seen.insert(key).second) {
      throw ConfigError("topology: duplicate edge (" + std::to_string(key.first) + "," +
                        std::to_string(key.second) + ")");
    }
  }
  std::set<std::size_t> used;
  for (const auto& [l, r] : flip_pairs) {
    if (l >= num_joints || r >= num_joints) {
      throw ConfigError("topology: flip pair (" + std::to_string(l) + "," +
                        std::to_string(r) + ") out of range");
    }
    if (l == r || !used.insert(l).second || !used.insert(r).second) {
      throw ConfigError("topology: flip pairs must use each joint at most once");
    }
  }
}

SkeletonTopology parse_topology_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("topology: invalid JSON: ") + e.what());
  }
  SkeletonTopology topo;
  try {
    topo.num_joints = j.at("num_joints").get<std::size_t>();
    for (const auto& e : j.at("edges")) {
      topo.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    }
    for (const auto& p : j.at("flip_pairs")) {
      topo.flip_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    }
    topo.root = j.at("root").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("topology: missing or malformed field: ") + e.what());
  }
  topo.validate();
  return topo;
}

SkeletonTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("topology: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_topology_json(buf.str());
}

SkeletonTopology tiny5_topology() {
  SkeletonTopology t;
  t.num_joints = 5;
  t.edges = {{0, 1}, {1, 2}, {0, 3}, {3, 4}};
  t.flip_pairs = {{1, 3}, {2, 4}};
  t.root = 0;
  return t;
}

std::vector<Tensor> build_khop_adjacency(const SkeletonTopology& topology,
                                         int highest_order) {
  if (highest_order < 0) {
    throw ContractError("build_khop_adjacency: highest order must be >= 0, got " +
                        std::to_string(highest_order));
  }
  topology.validate();
  const std::size_t j = topology.num_joints;
  const auto idx = [j](std::size_t r, std::size_t c) { return r * j + c; };

  // reach[i] = 1 iff distance <= current k; grown by boolean products with
  // (A + I). A^k falls out as the newly reached pairs at each step.
  std::vector<char> step(j * j, 0);  // A + I
  for (std::size_t d = 0; d < j; ++d) step[idx(d, d)] = 1;
  for (const auto& [a, b] : topology.edges) {
    step[idx(a, b)] = 1;
    step[idx(b, a)] = 1;
  }

  std::vector<char> reach(j * j, 0);
  for (std::size_t d = 0; d < j; ++d) reach[idx(d, d)] = 1;

  std::vector<Tensor> hops;
  hops.reserve(static_cast<std::size_t>(highest_order) + 1);
  std::vector<double> eye(j * j, 0.0);
  for (std::size_t d = 0; d < j; ++d) eye[idx(d, d)] = 1.0;
  hops.push_back(Tensor::from_values({j, j}, eye));

  for (int k = 1; k <= highest_order; ++k) {
    std::vector<char> next(j * j, 0);
    for (std::size_t r = 0; r < j; ++r) {
      for (std::size_t m = 0; m < j; ++m) {
        if (!reach[idx(r, m)]) continue;
        for (std::size_t c = 0; c < j; ++c) {
          if (step[idx(m, c)]) next[idx(r, c)] = 1;
        }
      }
    }
    std::vector<double> fresh(j * j, 0.0);
    for (std::size_t i = 0; i < j * j; ++i) {
      if (next[i] && !reach[i]) fresh[i] = 1.0;
    }
    hops.push_back(Tensor::from_values({j, j}, fresh));
    reach = std::move(next);
  }
  return hops;
}

Tensor normalize_adjacency(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw ContractError("normalize_adjacency: expects a square matrix, got " +
                        shape_str(a.shape()));
  }
  const std::size_t j = a.dim(0);
  const auto& av = a.values();
  for (std::size_t r = 0; r < j; ++r) {
    for (std::size_t c = 0; c < j; ++c) {
      const double v = av[r * j + c];
      if (v != 0.0 && v != 1.0) {
        throw ContractError("normalize_adjacency: entry (" + std::to_string(r) + "," +
                            std::to_string(c) + ") is not binary");
      }
      if (v != av[c * j + r]) {
        throw ContractError("normalize_adjacency: asymmetric at (" + std::to_string(r) +
                            "," + std::to_string(c) + ")");
      }
    }
  }
  std::vector<double> inv_sqrt_deg(j, 0.0);
  for (std::size_t r = 0; r < j; ++r) {
    double deg = 0.0;
    for (std::size_t c = 0; c < j; ++c) deg += av[r * j + c];
    if (deg > 0.0) inv_sqrt_deg[r] = 1.0 / std::sqrt(deg);
  }
  std::vector<double> out(j * j, 0.0);
  for (std::size_t r = 0; r < j; ++r) {
    for (std::size_t c = 0; c < j; ++c) {
      out[r * j + c] = inv_sqrt_deg[r] * av[r * j + c] * inv_sqrt_deg[c];
    }
  }
  return Tensor::from_values({j, j}, out);
}

OrderedAdjacencySet build_ordered_adjacency(const SkeletonTopology& topology,
                                            int highest_order) {
  OrderedAdjacencySet set;
  set.num_joints = topology.num_joints;
  set.highest_order = static_cast<std::size_t>(highest_order);
  for (const Tensor& hop : build_khop_adjacency(topology, highest_order)) {
    set.matrices.push_back(normalize_adjacency(hop));
  }
  return set;
}

}  // namespace poselift
