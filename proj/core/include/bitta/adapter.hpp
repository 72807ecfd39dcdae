#ifndef BITTA_ADAPTER_HPP
#define BITTA_ADAPTER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bitta/priors.hpp"
#include "bitta/tensor.hpp"

namespace bitta {

inline constexpr char kStateFormat[] = "bitta-state/1";

struct AdapterHyper {
  double learning_rate = 0.0001;
  double momentum = 0.9;
  double perturb_radius = 0.005;  // L2 length of the sharpness probe
  double backtrack_scale = -9.0;  // applied to the trend projection on
                                  // oscillation
  double trend_samples = 4000.0;  // samples for the anneal factor to saturate
  bool use_sharpness_aware = true;     // prospective branch
  bool use_trend_stabilization = true;  // retrospective branch

  void validate() const;
  bool operator==(const AdapterHyper&) const = default;
};

std::string adapter_hyper_to_json(const AdapterHyper& hyper);
AdapterHyper adapter_hyper_from_json(const std::string& text);

/// Mutable per-stream adaptation state. One instance per stream; never
/// shared across threads.
struct AdapterState {
  AdapterHyper hyper;
  std::uint64_t samples_seen = 0;
  std::uint64_t error_count = 0;
  std::vector<double> momentum_buffer;  // flat, parameter-shaped
  std::vector<double> trend_gradient;   // flat, parameter-shaped, starts 0

  static AdapterState init(const AdapterHyper& hyper,
                           std::size_t param_count);
};

/// One loss evaluation at a given flat parameter vector.
struct LossEval {
  double loss = 0.0;
  std::vector<double> grad;
  double temporal = 0.0;
  double spatial = 0.0;
};

using LossFn = std::function<LossEval(std::span<const double>)>;

enum class StepBranch : std::uint8_t {
  kNone,         // no adaptation attempted (harness bookkeeping)
  kSkippedZero,  // gradient exactly zero: only the sample counter moved
  kPlain,        // raw gradient fed to the optimizer
  kBlend,        // annealed blend of gradient and trend
  kOscillation,  // gradient opposed the trend; backtracked along it
  kError,        // non-finite value; instance dropped
};

const char* branch_name(StepBranch branch);

struct StepDiagnostics {
  StepBranch branch = StepBranch::kNone;
  double loss = 0.0;
  double temporal = 0.0;
  double spatial = 0.0;
  double grad_norm = 0.0;          // gradient at the unperturbed parameters
  double adapted_grad_norm = 0.0;  // after the sharpness-aware pass
  double final_grad_norm = 0.0;    // what entered the momentum update
  double anneal = 0.0;
  double trend_cosine = 0.0;       // cos(trend, gradient); 0 when undefined
};

/// Probe displacement along a gradient: radius * g / ||g||, the zero vector
/// when g is zero. Its L2 length equals the radius and it is positively
/// collinear with g.
std::vector<double> sharpness_probe(std::span<const double> gradient,
                                    double radius);

struct SharpnessGradient {
  std::vector<double> gradient;  // gradient at params + probe
  LossEval origin;               // evaluation at the unperturbed params
  bool second_pass = false;
};

/// Two-pass sharpness-aware gradient: probe of L2 length `radius` along the
/// current gradient direction, then the gradient at the probed point. A zero
/// gradient short-circuits to zero with no second pass. Throws NumericsError
/// on any non-finite loss or gradient; `params` is never modified.
SharpnessGradient sharpness_aware_gradient(std::span<const double> params,
                                           const LossFn& loss_fn,
                                           double radius);

/// Loss-weighted running average: (trend + g / max(|loss|, 1e-8))
/// / (1 + 1 / max(|loss|, 1e-8)). Small losses pull the trend hard toward
/// the new gradient; huge losses barely move it.
std::vector<double> update_trend_gradient(std::span<const double> trend,
                                          std::span<const double> gradient,
                                          double loss_value);

/// Anneal factor: 0 at t = 0, strictly increasing, < 1 for finite t,
/// essentially saturated once t reaches trend_samples.
double anneal_factor(double t, double trend_samples);

/// Retrospective stabilization. On oscillation (gradient opposing the
/// trend), returns backtrack_scale times the projection of the gradient onto
/// the trend; otherwise the annealed blend of gradient and trend. A zero
/// trend counts as non-oscillation with no trend contribution.
std::vector<double> stabilize_gradient(std::span<const double> trend,
                                       std::span<const double> gradient,
                                       double t, double trend_samples,
                                       double backtrack_scale,
                                       StepDiagnostics* diag = nullptr);

/// One adaptation step against an arbitrary loss. Commits parameters,
/// momentum, trend, and the sample counter only when every intermediate is
/// finite; otherwise bumps error_count and leaves everything else untouched.
/// An exactly-zero gradient advances the sample counter only.
StepDiagnostics adapt_step(AdapterState& state, std::vector<double>& params,
                           const LossFn& loss_fn);

/// adapt_step against the combined prior loss of one window pair.
StepDiagnostics adapt_instance(AdapterState& state,
                               std::vector<double>& params,
                               const NetworkConfig& net, const Tensor& window,
                               const Tensor& shifted_window,
                               const PriorConfig& prior);

void save_adapter_state(const std::filesystem::path& path,
                        const AdapterState& state);
AdapterState load_adapter_state(const std::filesystem::path& path);

}  // namespace bitta

#endif  // BITTA_ADAPTER_HPP
