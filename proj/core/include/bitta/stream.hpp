#ifndef BITTA_STREAM_HPP
#define BITTA_STREAM_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bitta/tensor.hpp"

namespace bitta {

// Physiological heart-rate range in beats per minute.
inline constexpr double kHrMinBpm = 40.0;
inline constexpr double kHrMaxBpm = 250.0;

inline constexpr char kStreamFormat[] = "bitta-stream/1";

struct IlluminationDrift {
  double amplitude = 0.0;
  double cycles_per_frame = 0.0;  // slow additive sinusoid
  bool operator==(const IlluminationDrift&) const = default;
};

struct MotionArtifact {
  double spike_probability = 0.0;  // per frame
  double region_fraction = 0.0;    // fraction of regions hit by one spike
  double amplitude = 0.0;
  bool operator==(const MotionArtifact&) const = default;
};

/// Parameterized distribution change between a source and a target stream.
/// Applied in this order: phase jitter (temporal resampling), per-channel
/// gain, per-channel offset, illumination drift, motion spikes, sensor noise.
struct DomainShift {
  std::vector<double> channel_gain;    // empty = all ones
  std::vector<double> channel_offset;  // empty = all zeros
  double noise_sigma = 0.0;
  IlluminationDrift drift;
  MotionArtifact motion;
  double phase_jitter_sigma = 0.0;  // frames

  bool is_identity() const;
  void validate(std::size_t channels) const;
  bool operator==(const DomainShift&) const = default;
};

struct StreamManifest {
  std::uint64_t seed = 0;
  double fps = 30.0;
  std::size_t duration_frames = 0;
  std::size_t regions = 25;
  std::size_t channels = 3;
  std::vector<double> hr_trace;  // bpm per frame, within [40, 250]
  DomainShift shift;             // identity when unshifted

  bool operator==(const StreamManifest&) const = default;
};

/// Raw per-region, per-channel color traces, shape
/// (duration_frames, regions, channels). Values live on the float32 grid so
/// persistence round-trips are bit-exact.
struct StreamData {
  Tensor traces;
};

struct Stream {
  StreamManifest manifest;
  StreamData data;
};

struct GenParams {
  std::uint64_t seed = 0;
  double fps = 30.0;
  std::size_t duration_frames = 0;
  std::size_t regions = 25;
  std::size_t channels = 3;
  double hr_start = 0.0;       // bpm; 0 = sample uniformly from [55, 95)
  double hr_walk_sigma = 0.2;  // bpm per frame, reflected into [40, 250]
  double baseline = 128.0;
  double pulse_amplitude = 4.0;
  double region_phase_spread = 0.25;  // radians
  double sensor_noise_sigma = 0.0;
};

/// Synthesizes a recording: per-region sinusoidal pulse traces around a
/// smooth random-walk heart-rate trace. Pure function of the parameters.
Stream generate_stream(const GenParams& params);

/// Applies a domain shift. Pure function of (data, shift, seed); an identity
/// shift returns the input unchanged.
StreamData apply_domain_shift(const StreamData& data, const DomainShift& shift,
                              std::uint64_t seed);

void write_stream(const std::filesystem::path& path,
                  const StreamManifest& manifest, const StreamData& data);
Stream read_stream(const std::filesystem::path& path);

}  // namespace bitta

#endif  // BITTA_STREAM_HPP
