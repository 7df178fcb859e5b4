#pragma once

#include <json.hpp>

#include "poselift/model.hpp"

namespace poselift {

// Missing keys keep their defaults; unknown keys are rejected so typos in
// hand-written configs fail loudly.
nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& entry);

nlohmann::json topology_to_json(const SkeletonTopology& topology);
SkeletonTopology topology_from_json(const nlohmann::json& entry);

bool operator==(const ModelConfig& a, const ModelConfig& b);

}  // namespace poselift
