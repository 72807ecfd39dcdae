#ifndef BITTA_HARNESS_HPP
#define BITTA_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bitta/adapter.hpp"
#include "bitta/metrics.hpp"
#include "bitta/network.hpp"
#include "bitta/priors.hpp"
#include "bitta/stmap.hpp"
#include "bitta/stream.hpp"

namespace bitta {

/// Ablation modes: which halves of the bidirectional mechanism run.
enum class RunMode : std::uint8_t {
  kNoAdapt,        // frozen model, prediction only
  kPriors,         // prior losses with plain SGD-momentum
  kPriorsPa,       // priors + prospective (sharpness-aware) branch
  kPriorsRs,       // priors + retrospective (trend) branch
  kBiTta,          // both branches
};

inline constexpr RunMode kAllModes[] = {RunMode::kNoAdapt, RunMode::kPriors,
                                        RunMode::kPriorsPa, RunMode::kPriorsRs,
                                        RunMode::kBiTta};

const char* mode_name(RunMode mode);  // no-adapt, priors, priors+pa, ...
RunMode mode_from_name(const std::string& name);

/// Sets the adapter's two branch flags for a mode. kNoAdapt clears both
/// (the harness additionally skips the update entirely).
void apply_mode(RunMode mode, AdapterHyper& hyper);

struct WindowParams {
  std::size_t length = 128;        // W
  std::size_t spatial_size = 16;   // H'
  std::size_t stride = 32;         // default W/4
  std::size_t start_frame = 59;    // first instance; >= max temporal shift

  void validate() const;
  bool operator==(const WindowParams&) const = default;
};

std::string window_params_to_json(const WindowParams& wp);
WindowParams window_params_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Source-domain pre-training
// ---------------------------------------------------------------------------

struct PretrainOptions {
  NetworkConfig network;
  WindowParams window;
  std::size_t epochs = 2;
  double learning_rate = 0.005;
  double momentum = 0.9;
  std::uint64_t seed = 7;
};

struct PretrainResult {
  std::vector<double> params;
  std::size_t steps = 0;
  double first_window_mae = 0.0;  // mean over the first 100 steps
  double last_window_mae = 0.0;   // mean over the last 100 steps
  std::vector<double> step_mae;   // per-step |prediction - target|
};

/// Supervised MSE between the HR vector and the window's constant
/// ground-truth HR, over shuffled windows of the source streams.
/// Deterministic in the seed.
PretrainResult pretrain(const PretrainOptions& options,
                        std::span<const Stream> sources);

// ---------------------------------------------------------------------------
// Streaming test-time adaptation
// ---------------------------------------------------------------------------

struct TtaOptions {
  NetworkConfig network;
  WindowParams window;
  PriorConfig prior;
  AdapterHyper adapter;
  RunMode mode = RunMode::kBiTta;
  std::uint64_t seed = 11;
};

struct TtaResult {
  std::vector<InstanceRecord> records;
  TimelineSummary summary;
  std::vector<double> final_params;
  AdapterState final_state;
};

/// Predict-then-adapt sweep over the target stream: each instance is scored
/// with the weights as they stood before its own update.
TtaResult run_tta(const TtaOptions& options,
                  std::span<const double> initial_params,
                  const Stream& target);

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationRun {
  RunMode mode;
  TtaResult result;
};

/// Runs every requested mode from the same checkpoint and stream with the
/// same seed. Modes are independent, so they may fan out across threads;
/// results are deterministic either way.
std::vector<AblationRun> ablate(const TtaOptions& base,
                                std::span<const double> initial_params,
                                const Stream& target,
                                std::span<const RunMode> modes,
                                bool parallel = false);

// ---------------------------------------------------------------------------
// Run outputs (all byte-deterministic)
// ---------------------------------------------------------------------------

void write_timeline_csv(const std::filesystem::path& path,
                        std::span<const InstanceRecord> records);
std::vector<InstanceRecord> read_timeline_csv(
    const std::filesystem::path& path);

void write_summary_text(const std::filesystem::path& path,
                        const std::string& label, const TimelineSummary& s,
                        std::uint64_t error_count);

/// timeline.csv + summary.txt for one run.
void write_run_outputs(const std::filesystem::path& out_dir,
                       const std::string& label, const TtaResult& result);

/// Per-mode run outputs, a combined CSV table, and a rolling-MAE SVG.
void write_ablation_outputs(const std::filesystem::path& out_dir,
                            std::span<const AblationRun> runs,
                            std::size_t rolling_window = 51);

}  // namespace bitta

#endif  // BITTA_HARNESS_HPP
