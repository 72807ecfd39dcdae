#ifndef BITTA_STMAP_HPP
#define BITTA_STMAP_HPP

#include <cstdint>

#include "bitta/stream.hpp"
#include "bitta/tensor.hpp"

namespace bitta {

class Rng;

/// One normalized sliding-window sample, shape
/// (window_len, spatial_size, channels), values in [0, 1].
///
/// gt_hr is the mean ground-truth heart rate over the window; it exists for
/// evaluation only and is never visible to the adaptation path.
struct STMapWindow {
  Tensor values;
  std::uint64_t stream_seed = 0;
  std::size_t start_frame = 0;
  double gt_hr = 0.0;
};

/// Cuts [start_frame, start_frame + window_len) out of the traces,
/// min-max-normalizes each (region, channel) row into [0, 1] (constant rows
/// map to 0.5), then resizes the spatial axis to spatial_size by linear
/// interpolation.
STMapWindow build_window(const StreamManifest& manifest,
                         const StreamData& data, std::size_t start_frame,
                         std::size_t window_len, std::size_t spatial_size);

struct WindowPair {
  STMapWindow current;      // at start_frame
  STMapWindow shifted;      // at start_frame - temporal_shift
  std::size_t temporal_shift = 0;
};

/// Draws the temporal shift uniformly from [1, max_shift] and builds both
/// windows. Requires start_frame >= max_shift.
WindowPair shifted_pair(const StreamManifest& manifest, const StreamData& data,
                        std::size_t start_frame, std::size_t window_len,
                        std::size_t spatial_size, std::size_t max_shift,
                        Rng& rng);

/// Same pair with an explicit shift; shift 0 yields two identical windows.
WindowPair shifted_pair_at(const StreamManifest& manifest,
                           const StreamData& data, std::size_t start_frame,
                           std::size_t window_len, std::size_t spatial_size,
                           std::size_t shift);

}  // namespace bitta

#endif  // BITTA_STMAP_HPP
