#ifndef BITTA_GRADCHECK_HPP
#define BITTA_GRADCHECK_HPP

#include <functional>
#include <span>
#include <vector>

namespace bitta {

/// Scalar loss as a function of a flat parameter vector. Must be
/// deterministic: the checker calls it repeatedly on perturbed copies.
using ScalarLossFn = std::function<double(std::span<const double>)>;

/// Central-difference gradient check.
///
/// Returns max over parameters of
///   |analytic[i] - cd[i]| / max(1e-12, |cd[i]|)
/// where cd[i] = (f(p + eps*e_i) - f(p - eps*e_i)) / (2*eps).
double finite_diff_check(const ScalarLossFn& loss,
                         std::span<const double> params,
                         std::span<const double> analytic_grad,
                         double epsilon);

/// Central-difference gradient vector (the oracle itself).
std::vector<double> central_differences(const ScalarLossFn& loss,
                                        std::span<const double> params,
                                        double epsilon);

}  // namespace bitta

#endif  // BITTA_GRADCHECK_HPP
