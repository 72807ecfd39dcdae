#ifndef BITTA_PRIORS_HPP
#define BITTA_PRIORS_HPP

#include <span>
#include <string>
#include <vector>

#include "bitta/graph.hpp"
#include "bitta/network.hpp"
#include "bitta/tensor.hpp"

namespace bitta {

/// Weights and tolerances of the two self-supervised consistency losses.
struct PriorConfig {
  double spatial_weight = 0.001;   // on the spatial consistency term
  double temporal_weight = 0.01;   // on the temporal consistency term
  double hr_tolerance = 8.0;       // bpm band where HR deviations cost nothing
  std::size_t spatial_shift = 1;   // column offset compared by the spatial term
  std::size_t max_temporal_shift = 59;  // window-shift bound for the pair

  void validate() const;
  bool operator==(const PriorConfig&) const = default;
};

std::string prior_config_to_json(const PriorConfig& cfg);
PriorConfig prior_config_from_json(const std::string& text);

/// Hinged L1 between two HR vectors: sum_i max(0, |a_i - b_i| - tolerance).
/// Deviations inside the tolerance band cost nothing and carry no gradient.
Value temporal_consistency(Value hr_a, Value hr_b, double tolerance_bpm);

/// Multi-depth spatial consistency: for every feature map, the L1 distance
/// between each spatial column and the column `shift` positions over,
/// summed across maps. Maps whose spatial extent is <= shift contribute 0.
Value spatial_consistency(Graph& g, std::span<const Value> features,
                          std::size_t shift);

struct PriorLoss {
  Value total;     // spatial_weight * spatial + temporal_weight * temporal
  Value temporal;
  Value spatial;
  ForwardPass current;  // forward pass of the unshifted window
};

/// Runs the network on both windows of a pair and combines the two priors.
/// The spatial term reads only the unshifted window's features.
PriorLoss prior_loss(Graph& g, const NetworkConfig& net,
                     std::span<const Value> param_leaves,
                     const Tensor& window, const Tensor& shifted_window,
                     const PriorConfig& cfg);

/// Whole-loss evaluation against a flat parameter vector, including the
/// gradient. One self-contained graph per call.
struct PriorLossEval {
  double total = 0.0;
  double temporal = 0.0;
  double spatial = 0.0;
  std::vector<double> grad;
};

PriorLossEval evaluate_prior_loss(const NetworkConfig& net,
                                  std::span<const double> flat_params,
                                  const Tensor& window,
                                  const Tensor& shifted_window,
                                  const PriorConfig& cfg);

}  // namespace bitta

#endif  // BITTA_PRIORS_HPP
