#include "bitta/stream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bitta/errors.hpp"
#include "bitta/rng.hpp"
#include "file_format.hpp"

namespace bitta {

namespace {

constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

double reflect_into(double v, double lo, double hi) {
  while (v < lo || v > hi) {
    if (v < lo) {
      v = 2.0 * lo - v;
    } else {
      v = 2.0 * hi - v;
    }
  }
  return v;
}

double to_float_grid(double v) {
  return static_cast<double>(static_cast<float>(v));
}

double channel_strength(std::size_t c) {
  // Green carries the strongest pulse in RGB traces.
  switch (c % 3) {
    case 0: return 0.8;
    case 1: return 1.0;
    default: return 0.7;
  }
}

nlohmann::json shift_to_json(const DomainShift& s) {
  return nlohmann::json{
      {"channel_gain", s.channel_gain},
      {"channel_offset", s.channel_offset},
      {"noise_sigma", s.noise_sigma},
      {"drift_amplitude", s.drift.amplitude},
      {"drift_cycles_per_frame", s.drift.cycles_per_frame},
      {"spike_probability", s.motion.spike_probability},
      {"spike_region_fraction", s.motion.region_fraction},
      {"spike_amplitude", s.motion.amplitude},
      {"phase_jitter_sigma", s.phase_jitter_sigma},
  };
}

DomainShift shift_from_json(const nlohmann::json& j) {
  using detail::header_field;
  DomainShift s;
  s.channel_gain = header_field<std::vector<double>>(j, "channel_gain");
  s.channel_offset = header_field<std::vector<double>>(j, "channel_offset");
  s.noise_sigma = header_field<double>(j, "noise_sigma");
  s.drift.amplitude = header_field<double>(j, "drift_amplitude");
  s.drift.cycles_per_frame =
      header_field<double>(j, "drift_cycles_per_frame");
  s.motion.spike_probability = header_field<double>(j, "spike_probability");
  s.motion.region_fraction =
      header_field<double>(j, "spike_region_fraction");
  s.motion.amplitude = header_field<double>(j, "spike_amplitude");
  s.phase_jitter_sigma = header_field<double>(j, "phase_jitter_sigma");
  return s;
}

}  // namespace

bool DomainShift::is_identity() const {
  const bool gains_one = std::all_of(channel_gain.begin(), channel_gain.end(),
                                     [](double g) { return g == 1.0; });
  const bool offsets_zero =
      std::all_of(channel_offset.begin(), channel_offset.end(),
                  [](double o) { return o == 0.0; });
  return gains_one && offsets_zero && noise_sigma == 0.0 &&
         drift.amplitude == 0.0 && motion.spike_probability == 0.0 &&
         phase_jitter_sigma == 0.0;
}

void DomainShift::validate(std::size_t channels) const {
  if (!channel_gain.empty() && channel_gain.size() != channels) {
    throw ValueError("domain shift gain has " +
                     std::to_string(channel_gain.size()) + " entries for " +
                     std::to_string(channels) + " channels");
  }
  if (!channel_offset.empty() && channel_offset.size() != channels) {
    throw ValueError("domain shift offset has " +
                     std::to_string(channel_offset.size()) + " entries for " +
                     std::to_string(channels) + " channels");
  }
  if (noise_sigma < 0.0 || phase_jitter_sigma < 0.0 ||
      drift.amplitude < 0.0 || motion.amplitude < 0.0) {
    throw ValueError("domain shift magnitudes must be non-negative");
  }
  if (motion.spike_probability < 0.0 || motion.spike_probability > 1.0 ||
      motion.region_fraction < 0.0 || motion.region_fraction > 1.0) {
    throw ValueError("domain shift probabilities must lie in [0, 1]");
  }
}

Stream generate_stream(const GenParams& params) {
  if (params.duration_frames < 1) {
    throw ValueError("duration_frames must be at least 1");
  }
  if (params.regions < 1 || params.channels < 1) {
    throw ValueError("regions and channels must be at least 1");
  }
  if (!(params.fps > 0.0)) throw ValueError("fps must be positive");
  if (params.hr_walk_sigma < 0.0 || params.sensor_noise_sigma < 0.0) {
    throw ValueError("sigmas must be non-negative");
  }
  if (params.hr_start != 0.0 &&
      (params.hr_start < kHrMinBpm || params.hr_start > kHrMaxBpm)) {
    throw ValueError("hr_start outside [40, 250] bpm");
  }

  const std::size_t T = params.duration_frames;
  const std::size_t H = params.regions;
  const std::size_t C = params.channels;

  Rng hr_rng(Rng::derive(params.seed, 1));
  Rng region_rng(Rng::derive(params.seed, 2));
  Rng noise_rng(Rng::derive(params.seed, 3));
  Rng phase_rng(Rng::derive(params.seed, 4));

  StreamManifest manifest;
  manifest.seed = params.seed;
  manifest.fps = params.fps;
  manifest.duration_frames = T;
  manifest.regions = H;
  manifest.channels = C;

  manifest.hr_trace.resize(T);
  double hr = params.hr_start != 0.0 ? params.hr_start
                                     : hr_rng.uniform(55.0, 95.0);
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      hr = reflect_into(hr + params.hr_walk_sigma * hr_rng.normal(),
                        kHrMinBpm, kHrMaxBpm);
    }
    manifest.hr_trace[t] = hr;
  }

  // Per-region heterogeneity: DC level, pulse amplitude, small phase offset.
  std::vector<double> region_phase(H);
  std::vector<double> cell_baseline(H * C);
  std::vector<double> cell_amplitude(H * C);
  for (std::size_t h = 0; h < H; ++h) {
    region_phase[h] =
        params.region_phase_spread * (2.0 * region_rng.uniform() - 1.0);
    for (std::size_t c = 0; c < C; ++c) {
      cell_baseline[h * C + c] =
          params.baseline * (0.9 + 0.2 * region_rng.uniform());
      cell_amplitude[h * C + c] = params.pulse_amplitude *
                                  channel_strength(c) *
                                  (0.7 + 0.6 * region_rng.uniform());
    }
  }

  Tensor traces({T, H, C});
  double phase = phase_rng.uniform() * kTwoPi;
  for (std::size_t t = 0; t < T; ++t) {
    phase += kTwoPi * manifest.hr_trace[t] / (60.0 * params.fps);
    for (std::size_t h = 0; h < H; ++h) {
      const double pulse = std::sin(phase + region_phase[h]);
      for (std::size_t c = 0; c < C; ++c) {
        double v = cell_baseline[h * C + c] +
                   cell_amplitude[h * C + c] * pulse;
        if (params.sensor_noise_sigma > 0.0) {
          v += params.sensor_noise_sigma * noise_rng.normal();
        }
        traces.at3(t, h, c) = to_float_grid(v);
      }
    }
  }

  return Stream{std::move(manifest), StreamData{std::move(traces)}};
}

StreamData apply_domain_shift(const StreamData& data, const DomainShift& shift,
                              std::uint64_t seed) {
  const Tensor& in = data.traces;
  if (in.rank() != 3) {
    throw ValueError("stream traces must have shape (frames, regions, "
                     "channels), got " + in.shape_str());
  }
  const std::size_t T = in.extent(0), H = in.extent(1), C = in.extent(2);
  shift.validate(C);

  Rng jitter_rng(Rng::derive(seed, 11));
  Rng spike_rng(Rng::derive(seed, 12));
  Rng noise_rng(Rng::derive(seed, 13));
  Rng drift_rng(Rng::derive(seed, 14));

  Tensor out = in;

  if (shift.phase_jitter_sigma > 0.0) {
    for (std::size_t t = 0; t < T; ++t) {
      const double pos = std::clamp(
          static_cast<double>(t) + shift.phase_jitter_sigma *
                                       jitter_rng.normal(),
          0.0, static_cast<double>(T - 1));
      const std::size_t i0 = static_cast<std::size_t>(pos);
      const double w1 = pos - static_cast<double>(i0);
      const std::size_t i1 = std::min(i0 + 1, T - 1);
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t c = 0; c < C; ++c) {
          out.at3(t, h, c) =
              (1.0 - w1) * in.at3(i0, h, c) + w1 * in.at3(i1, h, c);
        }
      }
    }
  }

  if (!shift.channel_gain.empty()) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t c = 0; c < C; ++c) {
          out.at3(t, h, c) *= shift.channel_gain[c];
        }
      }
    }
  }

  if (!shift.channel_offset.empty()) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t c = 0; c < C; ++c) {
          out.at3(t, h, c) += shift.channel_offset[c];
        }
      }
    }
  }

  if (shift.drift.amplitude > 0.0) {
    const double phase0 = drift_rng.uniform() * kTwoPi;
    for (std::size_t t = 0; t < T; ++t) {
      const double d =
          shift.drift.amplitude *
          std::sin(kTwoPi * shift.drift.cycles_per_frame *
                       static_cast<double>(t) +
                   phase0);
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t c = 0; c < C; ++c) out.at3(t, h, c) += d;
      }
    }
  }

  if (shift.motion.spike_probability > 0.0) {
    std::vector<std::size_t> order(H);
    const std::size_t hit = static_cast<std::size_t>(
        std::ceil(shift.motion.region_fraction * static_cast<double>(H)));
    for (std::size_t t = 0; t < T; ++t) {
      if (spike_rng.uniform() >= shift.motion.spike_probability || hit == 0) {
        continue;
      }
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = 0; i < hit; ++i) {
        const std::size_t j = static_cast<std::size_t>(
            spike_rng.uniform_int(static_cast<std::int64_t>(i),
                                  static_cast<std::int64_t>(H - 1)));
        std::swap(order[i], order[j]);
      }
      const double magnitude =
          shift.motion.amplitude * (0.5 + spike_rng.uniform());
      const double sign = spike_rng.uniform() < 0.5 ? -1.0 : 1.0;
      for (std::size_t i = 0; i < hit; ++i) {
        for (std::size_t c = 0; c < C; ++c) {
          out.at3(t, order[i], c) += sign * magnitude;
        }
      }
    }
  }

  if (shift.noise_sigma > 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += shift.noise_sigma * noise_rng.normal();
    }
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = to_float_grid(out[i]);
  }
  return StreamData{std::move(out)};
}

void write_stream(const std::filesystem::path& path,
                  const StreamManifest& manifest, const StreamData& data) {
  if (data.traces.rank() != 3 ||
      data.traces.extent(0) != manifest.duration_frames ||
      data.traces.extent(1) != manifest.regions ||
      data.traces.extent(2) != manifest.channels) {
    throw ValueError("stream data shape " + data.traces.shape_str() +
                     " disagrees with its manifest");
  }
  if (manifest.hr_trace.size() != manifest.duration_frames) {
    throw ValueError("hr_trace length disagrees with duration_frames");
  }
  nlohmann::json header{
      {"format", kStreamFormat},
      {"seed", manifest.seed},
      {"fps", manifest.fps},
      {"duration_frames", manifest.duration_frames},
      {"regions", manifest.regions},
      {"channels", manifest.channels},
      {"hr_trace", manifest.hr_trace},
      {"shift", shift_to_json(manifest.shift)},
  };
  detail::write_container(path, header,
                          detail::encode_f32(data.traces.values()));
}

Stream read_stream(const std::filesystem::path& path) {
  using detail::header_field;
  const auto c = detail::read_container(path);
  detail::require_format(c.header, kStreamFormat);

  StreamManifest m;
  m.seed = header_field<std::uint64_t>(c.header, "seed");
  m.fps = header_field<double>(c.header, "fps");
  m.duration_frames = header_field<std::size_t>(c.header, "duration_frames");
  m.regions = header_field<std::size_t>(c.header, "regions");
  m.channels = header_field<std::size_t>(c.header, "channels");
  m.hr_trace = header_field<std::vector<double>>(c.header, "hr_trace");
  if (!c.header.contains("shift")) {
    throw CorruptHeaderError("missing field \"shift\"");
  }
  m.shift = shift_from_json(c.header.at("shift"));

  if (m.hr_trace.size() != m.duration_frames) {
    throw CorruptHeaderError("hr_trace length " +
                             std::to_string(m.hr_trace.size()) +
                             " != duration_frames " +
                             std::to_string(m.duration_frames));
  }
  for (double v : m.hr_trace) {
    if (!(v >= kHrMinBpm && v <= kHrMaxBpm)) {
      throw CorruptHeaderError("hr_trace value outside [40, 250] bpm");
    }
  }

  const std::size_t count = m.duration_frames * m.regions * m.channels;
  Tensor traces({m.duration_frames, m.regions, m.channels},
                detail::decode_f32(c.payload, count));
  return Stream{std::move(m), StreamData{std::move(traces)}};
}

}  // namespace bitta
