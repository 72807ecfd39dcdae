#include "bitta/adapter.hpp"

#include <cmath>

#include "bitta/errors.hpp"
#include "file_format.hpp"

namespace bitta {

namespace {

constexpr double kLossGuard = 1e-8;

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool all_zero(std::span<const double> v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

void require_finite_eval(const LossEval& eval) {
  if (!std::isfinite(eval.loss) || !all_finite(eval.grad)) {
    throw NumericsError("non-finite loss or gradient");
  }
}

}  // namespace

void AdapterHyper::validate() const {
  if (!(learning_rate >= 0.0) || !(momentum >= 0.0) || momentum >= 1.0) {
    throw ValueError("learning_rate must be >= 0 and momentum in [0, 1)");
  }
  if (perturb_radius < 0.0) {
    throw ValueError("perturb_radius must be non-negative");
  }
  if (!(trend_samples > 0.0)) {
    throw ValueError("trend_samples must be positive");
  }
}

std::string adapter_hyper_to_json(const AdapterHyper& h) {
  return nlohmann::json{
      {"learning_rate", h.learning_rate},
      {"momentum", h.momentum},
      {"perturb_radius", h.perturb_radius},
      {"backtrack_scale", h.backtrack_scale},
      {"trend_samples", h.trend_samples},
      {"use_sharpness_aware", h.use_sharpness_aware},
      {"use_trend_stabilization", h.use_trend_stabilization},
  }.dump();
}

AdapterHyper adapter_hyper_from_json(const std::string& text) {
  using detail::header_field;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeaderError(std::string("adapter hyper: ") + e.what());
  }
  AdapterHyper h;
  h.learning_rate = header_field<double>(j, "learning_rate");
  h.momentum = header_field<double>(j, "momentum");
  h.perturb_radius = header_field<double>(j, "perturb_radius");
  h.backtrack_scale = header_field<double>(j, "backtrack_scale");
  h.trend_samples = header_field<double>(j, "trend_samples");
  h.use_sharpness_aware = header_field<bool>(j, "use_sharpness_aware");
  h.use_trend_stabilization =
      header_field<bool>(j, "use_trend_stabilization");
  h.validate();
  return h;
}

AdapterState AdapterState::init(const AdapterHyper& hyper,
                                std::size_t param_count) {
  hyper.validate();
  AdapterState state;
  state.hyper = hyper;
  state.momentum_buffer.assign(param_count, 0.0);
  state.trend_gradient.assign(param_count, 0.0);
  return state;
}

const char* branch_name(StepBranch branch) {
  switch (branch) {
    case StepBranch::kNone: return "none";
    case StepBranch::kSkippedZero: return "skip";
    case StepBranch::kPlain: return "plain";
    case StepBranch::kBlend: return "blend";
    case StepBranch::kOscillation: return "osc";
    case StepBranch::kError: return "error";
  }
  return "?";
}

std::vector<double> sharpness_probe(std::span<const double> gradient,
                                    double radius) {
  if (radius < 0.0) throw ValueError("radius must be non-negative");
  std::vector<double> probe(gradient.size(), 0.0);
  const double norm = l2_norm(gradient);
  if (norm == 0.0) return probe;
  const double step = radius / norm;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    probe[i] = step * gradient[i];
  }
  return probe;
}

SharpnessGradient sharpness_aware_gradient(std::span<const double> params,
                                           const LossFn& loss_fn,
                                           double radius) {
  if (radius < 0.0) throw ValueError("radius must be non-negative");
  SharpnessGradient out;
  out.origin = loss_fn(params);
  require_finite_eval(out.origin);
  if (out.origin.grad.size() != params.size()) {
    throw ValueError("loss gradient length " +
                     std::to_string(out.origin.grad.size()) +
                     " != parameter length " + std::to_string(params.size()));
  }

  const double norm = l2_norm(out.origin.grad);
  if (norm == 0.0 || radius == 0.0) {
    // Probe has no direction (or no length): keep the origin gradient. A
    // zero gradient stays exactly zero with no second evaluation.
    out.gradient = out.origin.grad;
    return out;
  }

  const std::vector<double> probe = sharpness_probe(out.origin.grad, radius);
  std::vector<double> probed(params.begin(), params.end());
  for (std::size_t i = 0; i < probed.size(); ++i) probed[i] += probe[i];
  LossEval at_probe = loss_fn(probed);
  require_finite_eval(at_probe);
  out.gradient = std::move(at_probe.grad);
  out.second_pass = true;
  return out;
}

std::vector<double> update_trend_gradient(std::span<const double> trend,
                                          std::span<const double> gradient,
                                          double loss_value) {
  if (trend.size() != gradient.size()) {
    throw ValueError("trend and gradient lengths differ");
  }
  const double w = 1.0 / std::max(std::fabs(loss_value), kLossGuard);
  const double denom = 1.0 + w;
  std::vector<double> out(trend.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (trend[i] + w * gradient[i]) / denom;
  }
  return out;
}

double anneal_factor(double t, double trend_samples) {
  if (!(trend_samples > 0.0)) {
    throw ValueError("trend_samples must be positive");
  }
  return std::tanh(2.0 * t / trend_samples);
}

std::vector<double> stabilize_gradient(std::span<const double> trend,
                                       std::span<const double> gradient,
                                       double t, double trend_samples,
                                       double backtrack_scale,
                                       StepDiagnostics* diag) {
  if (trend.size() != gradient.size()) {
    throw ValueError("trend and gradient lengths differ");
  }
  const double lambda = anneal_factor(t, trend_samples);
  if (diag) diag->anneal = lambda;

  const double trend_sq = dot(trend, trend);
  const double cross = dot(gradient, trend);
  const double grad_norm = l2_norm(gradient);

  std::vector<double> out(gradient.size());
  if (trend_sq > 0.0 && grad_norm > 0.0) {
    if (diag) {
      diag->trend_cosine = cross / (std::sqrt(trend_sq) * grad_norm);
    }
    if (cross < 0.0) {
      // Oscillation: keep only the (scaled) component along the trend; the
      // remainder of the gradient is discarded.
      const double coef = backtrack_scale * cross / trend_sq;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = coef * trend[i];
      if (diag) diag->branch = StepBranch::kOscillation;
      return out;
    }
  }
  // Non-oscillation (also the zero-trend warm-up, where the trend
  // contributes nothing): annealed blend.
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - lambda) * gradient[i] + lambda * trend[i];
  }
  if (diag) diag->branch = StepBranch::kBlend;
  return out;
}

StepDiagnostics adapt_step(AdapterState& state, std::vector<double>& params,
                           const LossFn& loss_fn) {
  state.hyper.validate();
  if (params.size() != state.momentum_buffer.size()) {
    throw ValueError("parameter vector does not match adapter state size");
  }
  StepDiagnostics diag;
  const std::uint64_t t_next = state.samples_seen + 1;

  try {
    std::vector<double> obtained;
    if (state.hyper.use_sharpness_aware) {
      SharpnessGradient sg = sharpness_aware_gradient(
          params, loss_fn, state.hyper.perturb_radius);
      diag.loss = sg.origin.loss;
      diag.temporal = sg.origin.temporal;
      diag.spatial = sg.origin.spatial;
      diag.grad_norm = l2_norm(sg.origin.grad);
      obtained = std::move(sg.gradient);
    } else {
      LossEval eval = loss_fn(params);
      require_finite_eval(eval);
      if (eval.grad.size() != params.size()) {
        throw ValueError("loss gradient length does not match parameters");
      }
      diag.loss = eval.loss;
      diag.temporal = eval.temporal;
      diag.spatial = eval.spatial;
      diag.grad_norm = l2_norm(eval.grad);
      obtained = std::move(eval.grad);
    }
    diag.adapted_grad_norm = l2_norm(obtained);

    if (all_zero(obtained)) {
      // Nothing was learned from this instance; only the counter moves.
      state.samples_seen = t_next;
      diag.branch = StepBranch::kSkippedZero;
      return diag;
    }

    std::vector<double> new_trend;
    std::vector<double> final_grad;
    if (state.hyper.use_trend_stabilization) {
      new_trend =
          update_trend_gradient(state.trend_gradient, obtained, diag.loss);
      final_grad = stabilize_gradient(new_trend, obtained,
                                      static_cast<double>(t_next),
                                      state.hyper.trend_samples,
                                      state.hyper.backtrack_scale, &diag);
    } else {
      final_grad = std::move(obtained);
      diag.branch = StepBranch::kPlain;
    }
    diag.final_grad_norm = l2_norm(final_grad);

    std::vector<double> new_buffer(params.size());
    std::vector<double> new_params(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      new_buffer[i] =
          state.hyper.momentum * state.momentum_buffer[i] + final_grad[i];
      new_params[i] = params[i] - state.hyper.learning_rate * new_buffer[i];
    }
    if (!all_finite(new_buffer) || !all_finite(new_params) ||
        !all_finite(final_grad)) {
      throw NumericsError("non-finite update");
    }

    // Commit point: everything checked out.
    if (!new_trend.empty()) state.trend_gradient = std::move(new_trend);
    state.momentum_buffer = std::move(new_buffer);
    params = std::move(new_params);
    state.samples_seen = t_next;
    return diag;
  } catch (const NumericsError&) {
    state.error_count += 1;
    diag.branch = StepBranch::kError;
    return diag;
  }
}

StepDiagnostics adapt_instance(AdapterState& state,
                               std::vector<double>& params,
                               const NetworkConfig& net, const Tensor& window,
                               const Tensor& shifted_window,
                               const PriorConfig& prior) {
  const LossFn loss_fn = [&](std::span<const double> p) {
    PriorLossEval eval =
        evaluate_prior_loss(net, p, window, shifted_window, prior);
    return LossEval{eval.total, std::move(eval.grad), eval.temporal,
                    eval.spatial};
  };
  return adapt_step(state, params, loss_fn);
}

void save_adapter_state(const std::filesystem::path& path,
                        const AdapterState& state) {
  nlohmann::json header{
      {"format", kStateFormat},
      {"samples_seen", state.samples_seen},
      {"error_count", state.error_count},
      {"param_count", state.momentum_buffer.size()},
      {"hyper", nlohmann::json::parse(adapter_hyper_to_json(state.hyper))},
  };
  std::vector<double> payload;
  payload.reserve(state.momentum_buffer.size() +
                  state.trend_gradient.size());
  payload.insert(payload.end(), state.momentum_buffer.begin(),
                 state.momentum_buffer.end());
  payload.insert(payload.end(), state.trend_gradient.begin(),
                 state.trend_gradient.end());
  detail::write_container(path, header, detail::encode_f64(payload));
}

AdapterState load_adapter_state(const std::filesystem::path& path) {
  using detail::header_field;
  const auto c = detail::read_container(path);
  detail::require_format(c.header, kStateFormat);
  AdapterState state;
  if (!c.header.contains("hyper")) {
    throw CorruptHeaderError("missing field \"hyper\"");
  }
  state.hyper = adapter_hyper_from_json(c.header.at("hyper").dump());
  state.samples_seen = header_field<std::uint64_t>(c.header, "samples_seen");
  state.error_count = header_field<std::uint64_t>(c.header, "error_count");
  const auto count = header_field<std::size_t>(c.header, "param_count");
  const auto payload = detail::decode_f64(c.payload, 2 * count);
  state.momentum_buffer.assign(payload.begin(),
                               payload.begin() +
                                   static_cast<std::ptrdiff_t>(count));
  state.trend_gradient.assign(payload.begin() +
                                  static_cast<std::ptrdiff_t>(count),
                              payload.end());
  return state;
}

}  // namespace bitta
