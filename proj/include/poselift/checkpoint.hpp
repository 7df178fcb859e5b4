#pragma once

#include <string>

#include "poselift/model.hpp"

namespace poselift {

// Binary container: magic, version, JSON header (config, topology, tensor
// directory), then raw little-endian doubles. Identical models produce
// byte-identical files. Batch-norm running statistics are included so a
// reloaded model evaluates exactly like the saved one.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace poselift
