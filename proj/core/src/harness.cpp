#include "bitta/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include "bitta/errors.hpp"
#include "bitta/gradcheck.hpp"
#include "bitta/rng.hpp"
#include "file_format.hpp"
#include "plot.hpp"

namespace bitta {

namespace {

using detail::format_double;

StepBranch branch_from_name(const std::string& name) {
  for (StepBranch b : {StepBranch::kNone, StepBranch::kSkippedZero,
                       StepBranch::kPlain, StepBranch::kBlend,
                       StepBranch::kOscillation, StepBranch::kError}) {
    if (name == branch_name(b)) return b;
  }
  throw ValueError("unknown step branch \"" + name + "\"");
}

double parse_double(const std::string& field, const char* what) {
  double v = 0.0;
  const auto res =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw ValueError(std::string("bad ") + what + " value \"" + field + "\"");
  }
  return v;
}

std::size_t parse_size(const std::string& field, const char* what) {
  std::size_t v = 0;
  const auto res =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw ValueError(std::string("bad ") + what + " value \"" + field + "\"");
  }
  return v;
}

std::string metric_or_undefined(const std::optional<double>& v) {
  return v ? format_double(*v) : "undefined";
}

}  // namespace

const char* mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::kNoAdapt: return "no-adapt";
    case RunMode::kPriors: return "priors";
    case RunMode::kPriorsPa: return "priors+pa";
    case RunMode::kPriorsRs: return "priors+rs";
    case RunMode::kBiTta: return "bi-tta";
  }
  return "?";
}

RunMode mode_from_name(const std::string& name) {
  for (RunMode m : kAllModes) {
    if (name == mode_name(m)) return m;
  }
  throw ValueError("unknown mode \"" + name +
                   "\" (expected no-adapt, priors, priors+pa, priors+rs, or "
                   "bi-tta)");
}

void apply_mode(RunMode mode, AdapterHyper& hyper) {
  switch (mode) {
    case RunMode::kNoAdapt:
    case RunMode::kPriors:
      hyper.use_sharpness_aware = false;
      hyper.use_trend_stabilization = false;
      break;
    case RunMode::kPriorsPa:
      hyper.use_sharpness_aware = true;
      hyper.use_trend_stabilization = false;
      break;
    case RunMode::kPriorsRs:
      hyper.use_sharpness_aware = false;
      hyper.use_trend_stabilization = true;
      break;
    case RunMode::kBiTta:
      hyper.use_sharpness_aware = true;
      hyper.use_trend_stabilization = true;
      break;
  }
}

void WindowParams::validate() const {
  if (length < 1 || spatial_size < 1) {
    throw ValueError("window length and spatial size must be at least 1");
  }
  if (stride < 1) throw ValueError("stride must be at least 1");
}

std::string window_params_to_json(const WindowParams& wp) {
  return nlohmann::json{
      {"length", wp.length},
      {"spatial_size", wp.spatial_size},
      {"stride", wp.stride},
      {"start_frame", wp.start_frame},
  }.dump();
}

WindowParams window_params_from_json(const std::string& text) {
  using detail::header_field;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeaderError(std::string("window params: ") + e.what());
  }
  WindowParams wp;
  wp.length = header_field<std::size_t>(j, "length");
  wp.spatial_size = header_field<std::size_t>(j, "spatial_size");
  wp.stride = header_field<std::size_t>(j, "stride");
  wp.start_frame = header_field<std::size_t>(j, "start_frame");
  wp.validate();
  return wp;
}

// ---------------------------------------------------------------------------
// Pre-training
// ---------------------------------------------------------------------------

PretrainResult pretrain(const PretrainOptions& options,
                        std::span<const Stream> sources) {
  options.network.validate();
  options.window.validate();
  if (sources.empty()) {
    throw ValueError("pretraining needs at least one source stream");
  }
  if (options.epochs < 1) throw ValueError("epochs must be at least 1");

  struct TrainWindow {
    Tensor values;
    double target;
  };
  std::vector<TrainWindow> windows;
  for (const Stream& s : sources) {
    const std::size_t T = s.manifest.duration_frames;
    for (std::size_t t0 = 0; t0 + options.window.length <= T;
         t0 += options.window.stride) {
      STMapWindow w = build_window(s.manifest, s.data, t0,
                                   options.window.length,
                                   options.window.spatial_size);
      windows.push_back({std::move(w.values), w.gt_hr});
    }
  }
  if (windows.empty()) {
    throw ValueError("source streams yield no training windows");
  }

  PretrainResult result;
  result.params = init_params(options.network, options.seed);
  std::vector<double> buffer(result.params.size(), 0.0);

  std::vector<std::size_t> order(windows.size());
  for (std::size_t e = 0; e < options.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(Rng::derive(options.seed, 100 + e));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }

    for (std::size_t idx : order) {
      const TrainWindow& tw = windows[idx];
      Graph g;
      const auto leaves =
          make_param_leaves(g, options.network, result.params);
      const ForwardPass pass =
          build_forward(g, options.network, leaves, tw.values);
      Value target = g.constant(
          Tensor({options.network.window_len}, tw.target));
      Value diff = subtract(pass.hr, target);
      Value loss = mean(multiply(diff, diff));

      double hr_mean = 0.0;
      {
        const Tensor& hr = pass.hr.tensor();
        for (std::size_t i = 0; i < hr.size(); ++i) hr_mean += hr[i];
        hr_mean /= static_cast<double>(hr.size());
      }
      result.step_mae.push_back(std::fabs(hr_mean - tw.target));

      const Gradients grads = g.backward(loss);
      const std::vector<double> flat = collect_param_grad(grads, leaves);
      for (std::size_t i = 0; i < result.params.size(); ++i) {
        buffer[i] = options.momentum * buffer[i] + flat[i];
        result.params[i] -= options.learning_rate * buffer[i];
      }
      result.steps += 1;
    }
  }

  const std::size_t probe =
      std::min<std::size_t>(100, result.step_mae.size());
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < probe; ++i) {
    first += result.step_mae[i];
    last += result.step_mae[result.step_mae.size() - probe + i];
  }
  result.first_window_mae = first / static_cast<double>(probe);
  result.last_window_mae = last / static_cast<double>(probe);
  return result;
}

// ---------------------------------------------------------------------------
// Streaming adaptation
// ---------------------------------------------------------------------------

TtaResult run_tta(const TtaOptions& options,
                  std::span<const double> initial_params,
                  const Stream& target) {
  options.network.validate();
  options.window.validate();
  options.prior.validate();
  AdapterHyper hyper = options.adapter;
  apply_mode(options.mode, hyper);
  hyper.validate();

  const bool adapting = options.mode != RunMode::kNoAdapt;
  const std::size_t W = options.window.length;
  const std::size_t T = target.manifest.duration_frames;
  std::size_t t0 = options.window.start_frame;
  if (adapting && t0 < options.prior.max_temporal_shift) {
    throw ValueError("start_frame " + std::to_string(t0) +
                     " is below the temporal-shift bound " +
                     std::to_string(options.prior.max_temporal_shift));
  }
  if (t0 + W > T) {
    throw ValueError("stream too short for a single window");
  }

  TtaResult result;
  result.final_params.assign(initial_params.begin(), initial_params.end());
  result.final_state = AdapterState::init(hyper, initial_params.size());
  Rng shift_rng(Rng::derive(options.seed, 55));

  for (std::size_t index = 0; t0 + W <= T;
       t0 += options.window.stride, ++index) {
    const STMapWindow window = build_window(
        target.manifest, target.data, t0, W, options.window.spatial_size);

    InstanceRecord rec;
    rec.index = index;
    rec.start_frame = t0;
    rec.true_hr = window.gt_hr;
    {
      const Tensor hr =
          predict_hr(options.network, result.final_params, window.values);
      double acc = 0.0;
      for (std::size_t i = 0; i < hr.size(); ++i) acc += hr[i];
      rec.predicted_hr = acc / static_cast<double>(hr.size());
    }

    if (adapting) {
      const WindowPair pair = shifted_pair(
          target.manifest, target.data, t0, W, options.window.spatial_size,
          options.prior.max_temporal_shift, shift_rng);
      const StepDiagnostics diag = adapt_instance(
          result.final_state, result.final_params, options.network,
          pair.current.values, pair.shifted.values, options.prior);
      rec.loss = diag.loss;
      rec.temporal = diag.temporal;
      rec.spatial = diag.spatial;
      rec.branch = diag.branch;
      rec.grad_norm = diag.grad_norm;
      rec.final_grad_norm = diag.final_grad_norm;
      rec.anneal = diag.anneal;
      rec.trend_cosine = diag.trend_cosine;
    }
    result.records.push_back(rec);
  }

  if (result.records.empty()) {
    throw ValueError("window stride yields no instances");
  }
  result.summary = summarize_timeline(result.records);
  return result;
}

std::vector<AblationRun> ablate(const TtaOptions& base,
                                std::span<const double> initial_params,
                                const Stream& target,
                                std::span<const RunMode> modes,
                                bool parallel) {
  if (modes.empty()) throw ValueError("no modes requested");
  auto run_one = [&](RunMode mode) {
    TtaOptions options = base;
    options.mode = mode;
    return AblationRun{mode, run_tta(options, initial_params, target)};
  };

  std::vector<AblationRun> runs;
  runs.reserve(modes.size());
  if (parallel) {
    std::vector<std::future<AblationRun>> futures;
    futures.reserve(modes.size());
    for (RunMode mode : modes) {
      futures.push_back(
          std::async(std::launch::async, run_one, mode));
    }
    for (auto& f : futures) runs.push_back(f.get());
  } else {
    for (RunMode mode : modes) runs.push_back(run_one(mode));
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Outputs
// ---------------------------------------------------------------------------

void write_timeline_csv(const std::filesystem::path& path,
                        std::span<const InstanceRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "index,start_frame,predicted_hr,true_hr,abs_error,loss,temporal,"
         "spatial,branch,grad_norm,final_grad_norm,anneal,trend_cosine\n";
  for (const auto& r : records) {
    out << r.index << ',' << r.start_frame << ','
        << format_double(r.predicted_hr) << ',' << format_double(r.true_hr)
        << ',' << format_double(std::fabs(r.predicted_hr - r.true_hr)) << ','
        << format_double(r.loss) << ',' << format_double(r.temporal) << ','
        << format_double(r.spatial) << ',' << branch_name(r.branch) << ','
        << format_double(r.grad_norm) << ','
        << format_double(r.final_grad_norm) << ',' << format_double(r.anneal)
        << ',' << format_double(r.trend_cosine) << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

std::vector<InstanceRecord> read_timeline_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValueError("empty timeline file");

  std::vector<InstanceRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 13) {
      throw ValueError("timeline row has " + std::to_string(fields.size()) +
                       " fields, expected 13");
    }
    InstanceRecord r;
    r.index = parse_size(fields[0], "index");
    r.start_frame = parse_size(fields[1], "start_frame");
    r.predicted_hr = parse_double(fields[2], "predicted_hr");
    r.true_hr = parse_double(fields[3], "true_hr");
    // fields[4] (abs_error) is derived; recomputed on demand.
    r.loss = parse_double(fields[5], "loss");
    r.temporal = parse_double(fields[6], "temporal");
    r.spatial = parse_double(fields[7], "spatial");
    r.branch = branch_from_name(fields[8]);
    r.grad_norm = parse_double(fields[9], "grad_norm");
    r.final_grad_norm = parse_double(fields[10], "final_grad_norm");
    r.anneal = parse_double(fields[11], "anneal");
    r.trend_cosine = parse_double(fields[12], "trend_cosine");
    records.push_back(std::move(r));
  }
  return records;
}

void write_summary_text(const std::filesystem::path& path,
                        const std::string& label, const TimelineSummary& s,
                        std::uint64_t error_count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "mode=" << label << '\n';
  out << "instances=" << s.instances << '\n';
  out << "mae=" << format_double(s.overall.mae) << '\n';
  out << "rmse=" << format_double(s.overall.rmse) << '\n';
  out << "pearson_r=" << metric_or_undefined(s.overall.pearson_r) << '\n';
  out << "trailing_count=" << s.trailing_count << '\n';
  out << "trailing_mae=" << format_double(s.trailing.mae) << '\n';
  out << "trailing_rmse=" << format_double(s.trailing.rmse) << '\n';
  out << "trailing_pearson_r=" << metric_or_undefined(s.trailing.pearson_r)
      << '\n';
  out << "error_count=" << error_count << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

void write_run_outputs(const std::filesystem::path& out_dir,
                       const std::string& label, const TtaResult& result) {
  std::filesystem::create_directories(out_dir);
  write_timeline_csv(out_dir / "timeline.csv", result.records);
  write_summary_text(out_dir / "summary.txt", label, result.summary,
                     result.final_state.error_count);
}

void write_ablation_outputs(const std::filesystem::path& out_dir,
                            std::span<const AblationRun> runs,
                            std::size_t rolling_window) {
  std::filesystem::create_directories(out_dir);
  for (const AblationRun& run : runs) {
    write_run_outputs(out_dir / mode_name(run.mode), mode_name(run.mode),
                      run.result);
  }

  std::ofstream table(out_dir / "ablation_summary.csv",
                      std::ios::binary | std::ios::trunc);
  if (!table) {
    throw IoError("cannot open " + (out_dir / "ablation_summary.csv").string());
  }
  table << "mode,instances,mae,rmse,pearson_r,trailing_mae,trailing_rmse,"
           "trailing_pearson_r,error_count\n";
  for (const AblationRun& run : runs) {
    const TimelineSummary& s = run.result.summary;
    table << mode_name(run.mode) << ',' << s.instances << ','
          << format_double(s.overall.mae) << ','
          << format_double(s.overall.rmse) << ','
          << metric_or_undefined(s.overall.pearson_r) << ','
          << format_double(s.trailing.mae) << ','
          << format_double(s.trailing.rmse) << ','
          << metric_or_undefined(s.trailing.pearson_r) << ','
          << run.result.final_state.error_count << '\n';
  }

  std::vector<detail::PlotSeries> series;
  for (const AblationRun& run : runs) {
    series.push_back({mode_name(run.mode),
                      rolling_mae(run.result.records, rolling_window)});
  }
  detail::write_line_plot_svg(out_dir / "rolling_mae.svg",
                              "Rolling MAE (window " +
                                  std::to_string(rolling_window) + ")",
                              "instance", "MAE [bpm]", series);
}

}  // namespace bitta
