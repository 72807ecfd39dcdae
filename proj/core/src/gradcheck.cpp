#include "bitta/gradcheck.hpp"

#include <cmath>

#include "bitta/errors.hpp"

namespace bitta {

std::vector<double> central_differences(const ScalarLossFn& loss,
                                        std::span<const double> params,
                                        double epsilon) {
  if (!(epsilon > 0.0)) {
    throw ValueError("central_differences: epsilon must be positive");
  }
  std::vector<double> work(params.begin(), params.end());
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = work[i];
    work[i] = saved + epsilon;
    const double up = loss(work);
    work[i] = saved - epsilon;
    const double down = loss(work);
    work[i] = saved;
    grad[i] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

double finite_diff_check(const ScalarLossFn& loss,
                         std::span<const double> params,
                         std::span<const double> analytic_grad,
                         double epsilon) {
  if (analytic_grad.size() != params.size()) {
    throw ValueError("finite_diff_check: gradient length " +
                     std::to_string(analytic_grad.size()) +
                     " != parameter length " + std::to_string(params.size()));
  }
  const std::vector<double> cd = central_differences(loss, params, epsilon);
  double worst = 0.0;
  for (std::size_t i = 0; i < cd.size(); ++i) {
    const double denom = std::max(1e-12, std::fabs(cd[i]));
    const double rel = std::fabs(analytic_grad[i] - cd[i]) / denom;
    if (rel > worst) worst = rel;
  }
  return worst;
}

}  // namespace bitta
