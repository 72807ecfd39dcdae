#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bitta/errors.hpp"
#include "bitta/rng.hpp"
#include "bitta/stmap.hpp"
#include "bitta/stream.hpp"

using namespace bitta;

namespace {

// Hand-built stream with full control over the traces.
Stream manual_stream(std::size_t frames, std::size_t regions,
                     std::size_t channels, double hr = 72.0) {
  Stream s;
  s.manifest.seed = 1;
  s.manifest.duration_frames = frames;
  s.manifest.regions = regions;
  s.manifest.channels = channels;
  s.manifest.hr_trace.assign(frames, hr);
  s.data.traces = Tensor({frames, regions, channels});
  return s;
}

}  // namespace

TEST_CASE("a linear ramp row normalizes onto [0,1] exactly") {
  const std::size_t W = 16;
  Stream s = manual_stream(W, 1, 1);
  for (std::size_t t = 0; t < W; ++t) {
    s.data.traces.at3(t, 0, 0) = 2.0 + 0.5 * static_cast<double>(t);
  }
  const STMapWindow w = build_window(s.manifest, s.data, 0, W, 1);
  const double lo = s.data.traces.at3(0, 0, 0);
  const double hi = s.data.traces.at3(W - 1, 0, 0);
  for (std::size_t t = 0; t < W; ++t) {
    const double expected = (s.data.traces.at3(t, 0, 0) - lo) / (hi - lo);
    CHECK(w.values.at3(t, 0, 0) == expected);
  }
  CHECK(w.values.at3(0, 0, 0) == 0.0);
  CHECK(w.values.at3(W - 1, 0, 0) == 1.0);
}

TEST_CASE("a constant row maps to 0.5 everywhere") {
  Stream s = manual_stream(8, 2, 1);
  for (std::size_t t = 0; t < 8; ++t) {
    s.data.traces.at3(t, 0, 0) = 3.25;
    s.data.traces.at3(t, 1, 0) = static_cast<double>(t);  // non-constant
  }
  const STMapWindow w = build_window(s.manifest, s.data, 0, 8, 2);
  for (std::size_t t = 0; t < 8; ++t) {
    CHECK(w.values.at3(t, 0, 0) == 0.5);
  }
}

TEST_CASE("desk-scale shape contract: 128x25x3 -> 128x16x3") {
  GenParams p;
  p.seed = 5;
  p.duration_frames = 200;
  p.regions = 25;
  p.channels = 3;
  const Stream s = generate_stream(p);
  const STMapWindow w = build_window(s.manifest, s.data, 10, 128, 16);
  CHECK(w.values.shape() == std::vector<std::size_t>{128, 16, 3});
  CHECK(w.start_frame == 10);
  CHECK(w.stream_seed == 5);

  // gt_hr equals the mean of the trace over the window.
  double acc = 0.0;
  for (std::size_t t = 10; t < 138; ++t) acc += s.manifest.hr_trace[t];
  CHECK(w.gt_hr == doctest::Approx(acc / 128.0).epsilon(1e-15));
}

TEST_CASE("every output value lies in [0,1], resize included") {
  GenParams p;
  p.seed = 9;
  p.duration_frames = 300;
  p.regions = 25;
  p.channels = 3;
  p.sensor_noise_sigma = 0.5;
  const Stream s = generate_stream(p);
  for (std::size_t t0 : {0UL, 50UL, 172UL}) {
    const STMapWindow w = build_window(s.manifest, s.data, t0, 128, 16);
    for (std::size_t i = 0; i < w.values.size(); ++i) {
      CHECK(w.values[i] >= 0.0);
      CHECK(w.values[i] <= 1.0);
    }
  }
}

TEST_CASE("normalization is invariant to positive affine row transforms") {
  Rng rng(31);
  const std::size_t W = 32, H = 5, C = 2;
  Stream s = manual_stream(W, H, C);
  for (std::size_t i = 0; i < s.data.traces.size(); ++i) {
    s.data.traces[i] = rng.uniform(-1.0, 1.0);
  }

  for (int trial = 0; trial < 25; ++trial) {
    const double a = rng.uniform(0.1, 5.0);
    const double b = rng.uniform(-20.0, 20.0);
    Stream scaled = manual_stream(W, H, C);
    for (std::size_t i = 0; i < s.data.traces.size(); ++i) {
      scaled.data.traces[i] = a * s.data.traces[i] + b;
    }
    const STMapWindow w0 = build_window(s.manifest, s.data, 0, W, 4);
    const STMapWindow w1 =
        build_window(scaled.manifest, scaled.data, 0, W, 4);
    for (std::size_t i = 0; i < w0.values.size(); ++i) {
      CHECK(w0.values[i] == doctest::Approx(w1.values[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("window out of range is rejected") {
  const Stream s = manual_stream(50, 2, 1);
  CHECK_THROWS_AS(build_window(s.manifest, s.data, 40, 16, 2), ValueError);
  CHECK_NOTHROW(build_window(s.manifest, s.data, 34, 16, 2));
}

TEST_CASE("a zero temporal shift yields two identical windows") {
  GenParams p;
  p.seed = 17;
  p.duration_frames = 300;
  p.regions = 8;
  const Stream s = generate_stream(p);
  const WindowPair pair =
      shifted_pair_at(s.manifest, s.data, 100, 64, 8, 0);
  CHECK(pair.temporal_shift == 0);
  for (std::size_t i = 0; i < pair.current.values.size(); ++i) {
    CHECK(pair.current.values[i] == pair.shifted.values[i]);
  }
}

TEST_CASE("random shifts are in [1, max], deterministic, and guarded") {
  GenParams p;
  p.seed = 18;
  p.duration_frames = 400;
  p.regions = 8;
  const Stream s = generate_stream(p);

  Rng rng_a(7);
  Rng rng_b(7);
  for (int i = 0; i < 20; ++i) {
    const WindowPair a = shifted_pair(s.manifest, s.data, 59, 64, 8, 59,
                                      rng_a);
    const WindowPair b = shifted_pair(s.manifest, s.data, 59, 64, 8, 59,
                                      rng_b);
    CHECK(a.temporal_shift == b.temporal_shift);
    CHECK(a.temporal_shift >= 1);
    CHECK(a.temporal_shift <= 59);
    CHECK(a.shifted.start_frame == 59 - a.temporal_shift);
  }

  Rng rng_c(9);
  CHECK_THROWS_AS(shifted_pair(s.manifest, s.data, 10, 64, 8, 59, rng_c),
                  ValueError);
}
