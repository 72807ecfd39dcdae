#include "bitta/metrics.hpp"

#include <cmath>

#include "bitta/errors.hpp"

namespace bitta {

Metrics compute_metrics(std::span<const double> predictions,
                        std::span<const double> truths) {
  if (predictions.empty() || predictions.size() != truths.size()) {
    throw ValueError("metrics need equal, non-empty prediction/truth lists");
  }
  const auto n = static_cast<double>(predictions.size());

  Metrics m;
  double abs_acc = 0.0, sq_acc = 0.0, p_mean = 0.0, t_mean = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - truths[i];
    abs_acc += std::fabs(d);
    sq_acc += d * d;
    p_mean += predictions[i];
    t_mean += truths[i];
  }
  m.mae = abs_acc / n;
  m.rmse = std::sqrt(sq_acc / n);

  p_mean /= n;
  t_mean /= n;
  double cov = 0.0, p_var = 0.0, t_var = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double dp = predictions[i] - p_mean;
    const double dt = truths[i] - t_mean;
    cov += dp * dt;
    p_var += dp * dp;
    t_var += dt * dt;
  }
  if (p_var > 0.0 && t_var > 0.0) {
    m.pearson_r = cov / std::sqrt(p_var * t_var);
  }
  return m;
}

TimelineSummary summarize_timeline(std::span<const InstanceRecord> records,
                                   double trailing_fraction) {
  if (records.empty()) throw ValueError("empty timeline");
  if (!(trailing_fraction > 0.0) || trailing_fraction > 1.0) {
    throw ValueError("trailing fraction must lie in (0, 1]");
  }
  std::vector<double> preds, truths;
  preds.reserve(records.size());
  truths.reserve(records.size());
  for (const auto& r : records) {
    preds.push_back(r.predicted_hr);
    truths.push_back(r.true_hr);
  }

  TimelineSummary s;
  s.instances = records.size();
  s.overall = compute_metrics(preds, truths);
  s.trailing_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(trailing_fraction *
                                  static_cast<double>(records.size())));
  const std::size_t from = records.size() - s.trailing_count;
  s.trailing = compute_metrics(
      std::span<const double>(preds).subspan(from),
      std::span<const double>(truths).subspan(from));
  return s;
}

std::vector<double> rolling_mae(std::span<const InstanceRecord> records,
                                std::size_t window) {
  if (window < 1) throw ValueError("rolling window must be at least 1");
  std::vector<double> out(records.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    acc += std::fabs(records[i].predicted_hr - records[i].true_hr);
    if (i >= window) {
      acc -= std::fabs(records[i - window].predicted_hr -
                       records[i - window].true_hr);
    }
    const std::size_t covered = std::min(i + 1, window);
    out[i] = acc / static_cast<double>(covered);
  }
  return out;
}

}  // namespace bitta
