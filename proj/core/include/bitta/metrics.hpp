#ifndef BITTA_METRICS_HPP
#define BITTA_METRICS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bitta/adapter.hpp"

namespace bitta {

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> pearson_r;  // absent when either side has zero
                                    // variance
};

/// MAE, RMSE, and Pearson correlation between predictions and ground truth.
/// Throws ValueError on empty or mismatched inputs.
Metrics compute_metrics(std::span<const double> predictions,
                        std::span<const double> truths);

/// One row of a streaming-adaptation timeline. The prediction is always
/// made with the weights as they stood before this instance's update.
struct InstanceRecord {
  std::size_t index = 0;
  std::size_t start_frame = 0;
  double predicted_hr = 0.0;
  double true_hr = 0.0;
  double loss = 0.0;
  double temporal = 0.0;
  double spatial = 0.0;
  StepBranch branch = StepBranch::kNone;
  double grad_norm = 0.0;
  double final_grad_norm = 0.0;
  double anneal = 0.0;
  double trend_cosine = 0.0;
};

struct TimelineSummary {
  Metrics overall;
  Metrics trailing;               // over the trailing fraction of instances
  std::size_t instances = 0;
  std::size_t trailing_count = 0;
};

/// Aggregates a timeline; the trailing window is the last quarter of the
/// instances (at least one).
TimelineSummary summarize_timeline(std::span<const InstanceRecord> records,
                                   double trailing_fraction = 0.25);

/// Trailing-window moving MAE: entry i averages |error| over the last
/// min(i+1, window) instances.
std::vector<double> rolling_mae(std::span<const InstanceRecord> records,
                                std::size_t window);

}  // namespace bitta

#endif  // BITTA_METRICS_HPP
