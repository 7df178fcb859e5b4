#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "poselift/tensor.hpp"

namespace poselift {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed named parameter list. Moment buffers are keyed by list
// position, so the list order must stay stable across steps.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor>> parameters,
                AdamConfig config = {});

  // Scans every gradient before touching any parameter; a non-finite entry
  // aborts the whole step with the offending parameter path.
  void step();
  void zero_grad();
  void scale_learning_rate(double factor);

  double learning_rate() const { return config_.learning_rate; }
  std::size_t step_count() const { return step_count_; }

 private:
  std::vector<std::pair<std::string, Tensor>> parameters_;
  AdamConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::size_t step_count_ = 0;
};

}  // namespace poselift
