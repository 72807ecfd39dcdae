#include "bitta/stmap.hpp"

#include <algorithm>

#include "bitta/errors.hpp"
#include "bitta/rng.hpp"

namespace bitta {

STMapWindow build_window(const StreamManifest& manifest,
                         const StreamData& data, std::size_t start_frame,
                         std::size_t window_len, std::size_t spatial_size) {
  const Tensor& traces = data.traces;
  const std::size_t T = traces.extent(0);
  const std::size_t H = traces.extent(1);
  const std::size_t C = traces.extent(2);
  if (window_len < 1 || spatial_size < 1) {
    throw ValueError("window_len and spatial_size must be at least 1");
  }
  if (start_frame + window_len > T) {
    throw ValueError("window [" + std::to_string(start_frame) + ", " +
                     std::to_string(start_frame + window_len) +
                     ") out of range for " + std::to_string(T) + " frames");
  }

  // Normalize each (region, channel) row over the window, then resize the
  // spatial axis.
  Tensor norm({window_len, H, C});
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t c = 0; c < C; ++c) {
      double lo = traces.at3(start_frame, h, c);
      double hi = lo;
      for (std::size_t t = 1; t < window_len; ++t) {
        const double v = traces.at3(start_frame + t, h, c);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double span = hi - lo;
      for (std::size_t t = 0; t < window_len; ++t) {
        norm.at3(t, h, c) =
            span > 0.0 ? (traces.at3(start_frame + t, h, c) - lo) / span
                       : 0.5;
      }
    }
  }

  STMapWindow window;
  window.stream_seed = manifest.seed;
  window.start_frame = start_frame;

  if (spatial_size == H) {
    window.values = std::move(norm);
  } else {
    Tensor resized({window_len, spatial_size, C});
    for (std::size_t j = 0; j < spatial_size; ++j) {
      double pos;
      if (H == 1) {
        pos = 0.0;
      } else if (spatial_size == 1) {
        pos = 0.5 * static_cast<double>(H - 1);
      } else {
        pos = static_cast<double>(j) * static_cast<double>(H - 1) /
              static_cast<double>(spatial_size - 1);
      }
      const std::size_t i0 = static_cast<std::size_t>(pos);
      const double w1 = pos - static_cast<double>(i0);
      const std::size_t i1 = std::min(i0 + 1, H - 1);
      for (std::size_t t = 0; t < window_len; ++t) {
        for (std::size_t c = 0; c < C; ++c) {
          resized.at3(t, j, c) = (1.0 - w1) * norm.at3(t, i0, c) +
                                 w1 * norm.at3(t, i1, c);
        }
      }
    }
    window.values = std::move(resized);
  }

  double acc = 0.0;
  for (std::size_t t = 0; t < window_len; ++t) {
    acc += manifest.hr_trace.at(start_frame + t);
  }
  window.gt_hr = acc / static_cast<double>(window_len);
  return window;
}

WindowPair shifted_pair_at(const StreamManifest& manifest,
                           const StreamData& data, std::size_t start_frame,
                           std::size_t window_len, std::size_t spatial_size,
                           std::size_t shift) {
  if (shift > start_frame) {
    throw ValueError("temporal shift " + std::to_string(shift) +
                     " exceeds start frame " + std::to_string(start_frame));
  }
  WindowPair pair;
  pair.temporal_shift = shift;
  pair.current =
      build_window(manifest, data, start_frame, window_len, spatial_size);
  pair.shifted = build_window(manifest, data, start_frame - shift, window_len,
                              spatial_size);
  return pair;
}

WindowPair shifted_pair(const StreamManifest& manifest, const StreamData& data,
                        std::size_t start_frame, std::size_t window_len,
                        std::size_t spatial_size, std::size_t max_shift,
                        Rng& rng) {
  if (max_shift < 1) throw ValueError("max_shift must be at least 1");
  if (start_frame < max_shift) {
    throw ValueError("start frame " + std::to_string(start_frame) +
                     " < max temporal shift " + std::to_string(max_shift));
  }
  const auto shift = static_cast<std::size_t>(
      rng.uniform_int(1, static_cast<std::int64_t>(max_shift)));
  return shifted_pair_at(manifest, data, start_frame, window_len, spatial_size,
                         shift);
}

}  // namespace bitta
