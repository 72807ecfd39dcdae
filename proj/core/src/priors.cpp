#include "bitta/priors.hpp"

#include "bitta/errors.hpp"
#include "file_format.hpp"

namespace bitta {

void PriorConfig::validate() const {
  if (spatial_weight < 0.0 || temporal_weight < 0.0 || hr_tolerance < 0.0) {
    throw ValueError("prior weights and tolerance must be non-negative");
  }
  if (spatial_shift < 1) {
    throw ValueError("spatial_shift must be at least 1");
  }
  if (max_temporal_shift < 1) {
    throw ValueError("max_temporal_shift must be at least 1");
  }
}

std::string prior_config_to_json(const PriorConfig& cfg) {
  return nlohmann::json{
      {"spatial_weight", cfg.spatial_weight},
      {"temporal_weight", cfg.temporal_weight},
      {"hr_tolerance", cfg.hr_tolerance},
      {"spatial_shift", cfg.spatial_shift},
      {"max_temporal_shift", cfg.max_temporal_shift},
  }.dump();
}

PriorConfig prior_config_from_json(const std::string& text) {
  using detail::header_field;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeaderError(std::string("prior config: ") + e.what());
  }
  PriorConfig cfg;
  cfg.spatial_weight = header_field<double>(j, "spatial_weight");
  cfg.temporal_weight = header_field<double>(j, "temporal_weight");
  cfg.hr_tolerance = header_field<double>(j, "hr_tolerance");
  cfg.spatial_shift = header_field<std::size_t>(j, "spatial_shift");
  cfg.max_temporal_shift =
      header_field<std::size_t>(j, "max_temporal_shift");
  cfg.validate();
  return cfg;
}

Value temporal_consistency(Value hr_a, Value hr_b, double tolerance_bpm) {
  return sum(hinge(abs(subtract(hr_a, hr_b)), tolerance_bpm));
}

Value spatial_consistency(Graph& g, std::span<const Value> features,
                          std::size_t shift) {
  if (shift < 1) throw ValueError("spatial shift must be at least 1");
  Value total;
  bool any = false;
  for (const Value& f : features) {
    const Tensor& t = f.tensor();
    if (t.rank() < 2) {
      throw ShapeError("spatial-consistency",
                       "feature map must be at least rank 2, got " +
                           t.shape_str());
    }
    const std::size_t extent = t.extent(1);
    if (extent <= shift) continue;  // empty sum
    Value left = slice(f, 1, 0, extent - shift);
    Value right = slice(f, 1, shift, extent);
    Value term = sum(abs(subtract(left, right)));
    total = any ? add(total, term) : term;
    any = true;
  }
  if (!any) return g.constant(Tensor::scalar(0.0));
  return total;
}

PriorLoss prior_loss(Graph& g, const NetworkConfig& net,
                     std::span<const Value> param_leaves,
                     const Tensor& window, const Tensor& shifted_window,
                     const PriorConfig& cfg) {
  cfg.validate();
  PriorLoss out;
  out.current = build_forward(g, net, param_leaves, window);
  ForwardPass shifted = build_forward(g, net, param_leaves, shifted_window);
  out.temporal =
      temporal_consistency(out.current.hr, shifted.hr, cfg.hr_tolerance);
  out.spatial = spatial_consistency(g, out.current.features,
                                    cfg.spatial_shift);
  out.total = add(scale(out.spatial, cfg.spatial_weight),
                  scale(out.temporal, cfg.temporal_weight));
  return out;
}

PriorLossEval evaluate_prior_loss(const NetworkConfig& net,
                                  std::span<const double> flat_params,
                                  const Tensor& window,
                                  const Tensor& shifted_window,
                                  const PriorConfig& cfg) {
  Graph g;
  const auto leaves = make_param_leaves(g, net, flat_params);
  const PriorLoss loss =
      prior_loss(g, net, leaves, window, shifted_window, cfg);
  const Gradients grads = g.backward(loss.total);
  PriorLossEval eval;
  eval.total = loss.total.item();
  eval.temporal = loss.temporal.item();
  eval.spatial = loss.spatial.item();
  eval.grad = collect_param_grad(grads, leaves);
  return eval;
}

}  // namespace bitta
