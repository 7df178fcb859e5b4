#include "poselift/serialize.hpp"

#include <set>
#include <string>

namespace poselift {

namespace {

using nlohmann::json;

std::string scaling_name(BcmaScaling scaling) {
  switch (scaling) {
    case BcmaScaling::Keys: return "keys";
    case BcmaScaling::Queries: return "queries";
    case BcmaScaling::Post: return "post";
  }
  throw ConfigError("unknown bcma scaling value");
}

BcmaScaling scaling_from_name(const std::string& name) {
  if (name == "keys") return BcmaScaling::Keys;
  if (name == "queries") return BcmaScaling::Queries;
  if (name == "post") return BcmaScaling::Post;
  throw ConfigError("bcma_scaling must be keys, queries, or post, got '" + name + "'");
}

std::string reduction_name(CentralReduction reduction) {
  return reduction == CentralReduction::Central ? "central" : "mean";
}

CentralReduction reduction_from_name(const std::string& name) {
  if (name == "central") return CentralReduction::Central;
  if (name == "mean") return CentralReduction::Mean;
  throw ConfigError("central_reduction must be central or mean, got '" + name + "'");
}

void read_size(const json& entry, const char* key, std::size_t& out) {
  if (!entry.contains(key)) return;
  if (!entry[key].is_number_unsigned()) {
    throw ConfigError(std::string("config field '") + key +
                      "' must be a non-negative integer");
  }
  out = entry[key].get<std::size_t>();
}

void read_double(const json& entry, const char* key, double& out) {
  if (!entry.contains(key)) return;
  if (!entry[key].is_number()) {
    throw ConfigError(std::string("config field '") + key + "' must be a number");
  }
  out = entry[key].get<double>();
}

void reject_unknown_keys(const json& entry, const std::set<std::string>& known,
                         const char* what) {
  for (const auto& [key, value] : entry.items()) {
    if (!known.count(key)) {
      throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace

json model_config_to_json(const ModelConfig& config) {
  json entry;
  entry["num_joints"] = config.num_joints;
  entry["input_frames"] = config.input_frames;
  entry["drop_rate"] = config.drop_rate;
  entry["hidden_dim"] = config.hidden_dim;
  entry["highest_order"] = config.highest_order;
  entry["num_blocks"] = config.num_blocks;
  entry["num_heads"] = config.num_heads;
  entry["center"] = config.center;
  entry["pos_factor"] = config.pos_factor;
  entry["bcma_scaling"] = scaling_name(config.bcma_scaling);
  entry["central_reduction"] = reduction_name(config.central_reduction);
  return entry;
}

ModelConfig model_config_from_json(const json& entry) {
  if (!entry.is_object()) throw ConfigError("model config must be a JSON object");
  reject_unknown_keys(entry,
                      {"num_joints", "input_frames", "drop_rate", "hidden_dim",
                       "highest_order", "num_blocks", "num_heads", "center",
                       "pos_factor", "bcma_scaling", "central_reduction"},
                      "model config");
  ModelConfig config;
  read_size(entry, "num_joints", config.num_joints);
  read_size(entry, "input_frames", config.input_frames);
  read_size(entry, "drop_rate", config.drop_rate);
  read_size(entry, "hidden_dim", config.hidden_dim);
  read_size(entry, "highest_order", config.highest_order);
  read_size(entry, "num_blocks", config.num_blocks);
  read_size(entry, "num_heads", config.num_heads);
  read_double(entry, "center", config.center);
  read_double(entry, "pos_factor", config.pos_factor);
  if (entry.contains("bcma_scaling")) {
    config.bcma_scaling = scaling_from_name(entry["bcma_scaling"].get<std::string>());
  }
  if (entry.contains("central_reduction")) {
    config.central_reduction =
        reduction_from_name(entry["central_reduction"].get<std::string>());
  }
  return config;
}

json topology_to_json(const SkeletonTopology& topology) {
  json entry;
  entry["num_joints"] = topology.num_joints;
  json edges = json::array();
  for (const auto& [a, b] : topology.edges) edges.push_back({a, b});
  entry["edges"] = std::move(edges);
  json pairs = json::array();
  for (const auto& [l, r] : topology.flip_pairs) pairs.push_back({l, r});
  entry["flip_pairs"] = std::move(pairs);
  entry["root"] = topology.root;
  return entry;
}

SkeletonTopology topology_from_json(const json& entry) {
  return parse_topology_json(entry.dump());
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.num_joints == b.num_joints && a.input_frames == b.input_frames &&
         a.drop_rate == b.drop_rate && a.hidden_dim == b.hidden_dim &&
         a.highest_order == b.highest_order && a.num_blocks == b.num_blocks &&
         a.num_heads == b.num_heads && a.center == b.center &&
         a.pos_factor == b.pos_factor && a.bcma_scaling == b.bcma_scaling &&
         a.central_reduction == b.central_reduction;
}

}  // namespace poselift
