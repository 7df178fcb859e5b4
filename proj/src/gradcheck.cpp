#include "poselift/gradcheck.hpp"

#include <cmath>
#include <string>

namespace poselift {

namespace {

double eval_scalar(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                   std::size_t coord) {
  Tensor y = f(x);
  if (y.numel() != 1) {
    throw ContractError("finite_difference_check: f returned shape " +
                        shape_str(y.shape()) + ", expected a scalar");
  }
  const double v = y.values()[0];
  if (!std::isfinite(v)) {
    throw NonFiniteError("finite_difference_check: non-finite loss while perturbing", coord);
  }
  return v;
}

}  // namespace

GradCheckReport finite_difference_report(const std::function<Tensor(const Tensor&)>& f,
                                         const Tensor& x, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4)) {
    throw ContractError("finite_difference_check: epsilon " + std::to_string(epsilon) +
                        " outside [1e-7, 1e-4]");
  }
  Tensor leaf = Tensor::from_values(x.shape(), x.values());
  leaf.set_requires_grad(true);
  Tensor y = f(leaf);
  if (y.numel() != 1) {
    throw ContractError("finite_difference_check: f returned shape " +
                        shape_str(y.shape()) + ", expected a scalar");
  }
  y.backward();
  std::vector<double> analytic = leaf.has_grad()
                                     ? leaf.grad()
                                     : std::vector<double>(x.numel(), 0.0);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (!std::isfinite(analytic[i])) {
      throw NonFiniteError("finite_difference_check: non-finite analytic gradient", i);
    }
  }

  GradCheckReport report;
  std::vector<double> vals = x.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + epsilon;
    const double plus = eval_scalar(f, Tensor::from_values(x.shape(), vals), i);
    vals[i] = orig - epsilon;
    const double minus = eval_scalar(f, Tensor::from_values(x.shape(), vals), i);
    vals[i] = orig;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double scale = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    const double rel = std::abs(analytic[i] - numeric) / scale;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double epsilon) {
  return finite_difference_report(f, x, epsilon).max_rel_error;
}

}  // namespace poselift
