#pragma once

#include <functional>

#include "poselift/tensor.hpp"

namespace poselift {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the analytic gradient of f at x against central differences.
// f must build a fresh scalar-valued graph on every call and must not keep
// state between calls. Relative error per coordinate is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport finite_difference_report(const std::function<Tensor(const Tensor&)>& f,
                                         const Tensor& x, double epsilon = 1e-6);

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double epsilon = 1e-6);

}  // namespace poselift
