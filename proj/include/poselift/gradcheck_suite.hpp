#pragma once

#include <string>
#include <vector>

#include "poselift/model.hpp"

namespace poselift {

struct ModuleCheck {
  std::string module;
  double max_rel_error = 0.0;
};

// Finite-difference sweeps with inputs and parameters packed into flat
// tensors, one entry per checked module. module selects "spatial",
// "temporal", "model", or "all". Base points are seeded, so results are
// reproducible.
std::vector<ModuleCheck> run_gradcheck_suite(const ModelConfig& config,
                                             const SkeletonTopology& topology,
                                             const std::string& module);

}  // namespace poselift
