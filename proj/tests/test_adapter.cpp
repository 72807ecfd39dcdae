#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bitta/adapter.hpp"
#include "bitta/errors.hpp"
#include "bitta/rng.hpp"
#include "support/reference.hpp"

using namespace bitta;
namespace fs = std::filesystem;

namespace {

double norm2(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) num += a[i] * b[i];
  return num / (norm2(a) * norm2(b));
}

// Quadratic bowl L(w) = 0.5 * ||w||^2 with exact gradient w.
LossEval quadratic_bowl(std::span<const double> w) {
  LossEval e;
  e.grad.assign(w.begin(), w.end());
  for (double v : w) e.loss += 0.5 * v * v;
  return e;
}

}  // namespace

TEST_CASE("probe worked case: g=(3,4), radius 0.005") {
  const std::vector<double> g{3.0, 4.0};
  const auto probe = sharpness_probe(g, 0.005);
  CHECK(probe[0] == doctest::Approx(0.003).epsilon(1e-12));
  CHECK(probe[1] == doctest::Approx(0.004).epsilon(1e-12));
  CHECK(norm2(probe) == doctest::Approx(0.005).epsilon(1e-12));
}

TEST_CASE("probe length and collinearity invariants over random vectors") {
  Rng rng(911);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> g(1 + static_cast<std::size_t>(rng.uniform_int(0, 9)));
    for (double& v : g) v = rng.uniform(-5.0, 5.0);
    if (norm2(g) == 0.0) continue;
    const double rho = rng.uniform(1e-4, 0.5);
    const auto probe = sharpness_probe(g, rho);
    CHECK(std::fabs(norm2(probe) - rho) < 1e-9);
    CHECK(std::fabs(cosine(probe, g) - 1.0) < 1e-12);
  }
}

TEST_CASE("quadratic closed form: w=(1,0), radius 0.1 gives (1.1, 0)") {
  const std::vector<double> w{1.0, 0.0};
  const auto sg = sharpness_aware_gradient(w, quadratic_bowl, 0.1);
  CHECK(sg.second_pass);
  CHECK(sg.gradient[0] == 1.1);
  CHECK(sg.gradient[1] == 0.0);
  CHECK(sg.origin.loss == 0.5);
}

TEST_CASE("zero gradient skips the second pass and returns zero") {
  int calls = 0;
  const LossFn flat = [&calls](std::span<const double> w) {
    ++calls;
    LossEval e;
    e.loss = 3.0;
    e.grad.assign(w.size(), 0.0);
    return e;
  };
  const std::vector<double> w{0.4, -0.2, 0.9};
  const auto sg = sharpness_aware_gradient(w, flat, 0.05);
  CHECK(calls == 1);
  CHECK_FALSE(sg.second_pass);
  for (double v : sg.gradient) CHECK(v == 0.0);
}

TEST_CASE("non-finite loss raises and leaves inputs untouched") {
  const LossFn broken = [](std::span<const double> w) {
    LossEval e;
    e.loss = std::numeric_limits<double>::quiet_NaN();
    e.grad.assign(w.size(), 1.0);
    return e;
  };
  const std::vector<double> w{1.0, 2.0};
  CHECK_THROWS_AS(sharpness_aware_gradient(w, broken, 0.1), NumericsError);
}

TEST_CASE("trend update worked cases") {
  const std::vector<double> zero{0.0, 0.0};
  const std::vector<double> g{4.0, -2.0};

  // Loss 1: average of the previous trend and the gradient.
  auto t1 = update_trend_gradient(zero, g, 1.0);
  CHECK(t1[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(t1[1] == doctest::Approx(-1.0).epsilon(1e-15));

  // Huge loss: the trend barely moves.
  const std::vector<double> prev{1.0, 1.0};
  auto t2 = update_trend_gradient(prev, g, 1e12);
  CHECK(std::fabs(t2[0] - 1.0) < 1e-10);
  CHECK(std::fabs(t2[1] - 1.0) < 1e-10);

  // Zero loss: the guard drives the weight to 1e8, so the new gradient
  // dominates.
  auto t3 = update_trend_gradient(prev, g, 0.0);
  CHECK(t3[0] == doctest::Approx(4.0).epsilon(1e-7));
  CHECK(t3[1] == doctest::Approx(-2.0).epsilon(1e-7));
}

TEST_CASE("trend update is a componentwise convex combination") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> prev(5), g(5);
    for (std::size_t i = 0; i < 5; ++i) {
      prev[i] = rng.uniform(-3.0, 3.0);
      g[i] = rng.uniform(-3.0, 3.0);
    }
    const double loss = rng.uniform(0.0, 10.0);
    const auto next = update_trend_gradient(prev, g, loss);
    for (std::size_t i = 0; i < 5; ++i) {
      const double lo = std::min(prev[i], g[i]) - 1e-12;
      const double hi = std::max(prev[i], g[i]) + 1e-12;
      CHECK(next[i] >= lo);
      CHECK(next[i] <= hi);
    }
  }
}

TEST_CASE("anneal factor: zero at zero, strictly increasing, below one") {
  CHECK(anneal_factor(0.0, 4000.0) == 0.0);
  // Strictly increasing and below 1 across the numerically distinguishable
  // range (double tanh saturates to exactly 1.0 near 2t = 19 Omega).
  double prev = 0.0;
  for (double t : {1.0, 10.0, 100.0, 1000.0, 4000.0, 16000.0}) {
    const double lam = anneal_factor(t, 4000.0);
    CHECK(lam > prev);
    CHECK(lam < 1.0);
    prev = lam;
  }
  CHECK(anneal_factor(4000.0, 4000.0) ==
        doctest::Approx(std::tanh(2.0)).epsilon(1e-15));
}

TEST_CASE("oscillation worked case: trend (1,0), gradient (-2,1), k=-9") {
  const std::vector<double> trend{1.0, 0.0};
  const std::vector<double> g{-2.0, 1.0};
  StepDiagnostics diag;
  const auto out = stabilize_gradient(trend, g, 10.0, 4000.0, -9.0, &diag);
  CHECK(diag.branch == StepBranch::kOscillation);
  CHECK(out[0] == 18.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("t = 0 in the blend branch returns the gradient unchanged") {
  const std::vector<double> trend{1.0, 2.0};
  const std::vector<double> g{3.0, 1.0};  // cos > 0
  const auto out = stabilize_gradient(trend, g, 0.0, 4000.0, -9.0);
  CHECK(out[0] == 3.0);
  CHECK(out[1] == 1.0);
}

TEST_CASE("zero trend blends toward nothing: (1 - lambda) * gradient") {
  const std::vector<double> trend{0.0, 0.0};
  const std::vector<double> g{2.0, -4.0};
  const double t = 1000.0, omega = 4000.0;
  const double lam = std::tanh(2.0 * t / omega);
  StepDiagnostics diag;
  const auto out = stabilize_gradient(trend, g, t, omega, -9.0, &diag);
  CHECK(diag.branch == StepBranch::kBlend);
  CHECK(out[0] == doctest::Approx((1.0 - lam) * 2.0).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx((1.0 - lam) * -4.0).epsilon(1e-15));
}

TEST_CASE("backtracked gradients stay collinear with the trend") {
  Rng rng(66);
  int oscillations = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> trend(4), g(4);
    for (std::size_t i = 0; i < 4; ++i) {
      trend[i] = rng.uniform(-2.0, 2.0);
      g[i] = rng.uniform(-2.0, 2.0);
    }
    if (norm2(trend) == 0.0 || norm2(g) == 0.0) continue;
    if (cosine(trend, g) >= 0.0) continue;
    ++oscillations;
    const auto out = stabilize_gradient(trend, g, 500.0, 4000.0, -9.0);
    // Cross terms vanish: out x trend = 0 in every 2-D projection.
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = i + 1; j < 4; ++j) {
        CHECK(std::fabs(out[i] * trend[j] - out[j] * trend[i]) < 1e-12);
      }
    }
    // With k < 0 and an opposing gradient, the result points along +trend.
    CHECK(cosine(out, trend) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(oscillations > 50);
}

TEST_CASE("plain mode reproduces reference SGD momentum bitwise") {
  AdapterHyper hyper;
  hyper.learning_rate = 0.01;
  hyper.momentum = 0.9;
  hyper.use_sharpness_aware = false;
  hyper.use_trend_stabilization = false;

  Rng rng(404);
  std::vector<double> params(6), reference_params(6);
  for (std::size_t i = 0; i < 6; ++i) {
    params[i] = rng.uniform(-1.0, 1.0);
    reference_params[i] = params[i];
  }
  AdapterState state = AdapterState::init(hyper, params.size());
  oracle::SgdMomentum reference(hyper.learning_rate, hyper.momentum, 6);

  // Scripted pseudo-random gradients, never exactly zero.
  std::vector<std::vector<double>> gradients;
  for (int step = 0; step < 100; ++step) {
    std::vector<double> g(6);
    for (double& v : g) v = rng.uniform(0.05, 1.0) *
                            (rng.uniform() < 0.5 ? -1.0 : 1.0);
    gradients.push_back(std::move(g));
  }

  for (const auto& g : gradients) {
    const LossFn fn = [&g](std::span<const double>) {
      LossEval e;
      e.loss = 1.0;
      e.grad = g;
      return e;
    };
    const auto diag = adapt_step(state, params, fn);
    CHECK(diag.branch == StepBranch::kPlain);
    reference.step(reference_params, g);
  }
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(params[i] == reference_params[i]);  // bitwise
  }
  CHECK(state.samples_seen == 100);
}

TEST_CASE("a zero-gradient instance moves only the sample counter") {
  AdapterHyper hyper;
  AdapterState state = AdapterState::init(hyper, 3);
  state.momentum_buffer = {0.5, -0.5, 0.25};
  state.trend_gradient = {0.1, 0.1, 0.1};
  std::vector<double> params{1.0, 2.0, 3.0};
  const auto before_params = params;
  const auto before_buffer = state.momentum_buffer;
  const auto before_trend = state.trend_gradient;

  const LossFn zero_fn = [](std::span<const double> w) {
    LossEval e;
    e.loss = 0.0;
    e.grad.assign(w.size(), 0.0);
    return e;
  };
  const auto diag = adapt_step(state, params, zero_fn);
  CHECK(diag.branch == StepBranch::kSkippedZero);
  CHECK(params == before_params);
  CHECK(state.momentum_buffer == before_buffer);
  CHECK(state.trend_gradient == before_trend);
  CHECK(state.samples_seen == 1);
  CHECK(state.error_count == 0);
}

TEST_CASE("non-finite losses bump the error counter and change nothing else") {
  AdapterHyper hyper;
  AdapterState state = AdapterState::init(hyper, 2);
  std::vector<double> params{1.0, -1.0};
  const auto before = params;

  const LossFn nan_fn = [](std::span<const double> w) {
    LossEval e;
    e.loss = std::numeric_limits<double>::infinity();
    e.grad.assign(w.size(), 0.5);
    return e;
  };
  const auto diag = adapt_step(state, params, nan_fn);
  CHECK(diag.branch == StepBranch::kError);
  CHECK(params == before);
  CHECK(state.samples_seen == 0);
  CHECK(state.error_count == 1);
}

TEST_CASE("full pipeline matches the scripted scalar oracle to 1e-12") {
  // 10-dimensional scripted quadratic losses driven for 300 steps with both
  // branches on; compare against the straight-line reimplementation.
  const std::size_t n = 10;
  AdapterHyper hyper;
  hyper.learning_rate = 0.05;
  hyper.momentum = 0.9;
  hyper.perturb_radius = 0.05;
  hyper.backtrack_scale = -9.0;
  hyper.trend_samples = 100.0;
  hyper.use_sharpness_aware = true;
  hyper.use_trend_stabilization = true;

  Rng rng(2024);
  std::vector<double> params(n), oracle_params(n);
  for (std::size_t i = 0; i < n; ++i) {
    params[i] = rng.uniform(-1.0, 1.0);
    oracle_params[i] = params[i];
  }

  AdapterState state = AdapterState::init(hyper, n);
  oracle::RetroOracle reference(hyper.learning_rate, hyper.momentum,
                                hyper.perturb_radius, hyper.backtrack_scale,
                                hyper.trend_samples, true, true, n);

  int oscillation_steps = 0;
  for (int step = 0; step < 300; ++step) {
    oracle::ScriptedQuadratic script;
    script.q.resize(n);
    script.c.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      script.q[i] = rng.uniform(0.2, 3.0);
      // Jump the center around to force genuine oscillations.
      script.c[i] = rng.uniform(-2.0, 2.0);
    }
    const LossFn fn = [&script](std::span<const double> w) {
      LossEval e;
      e.loss = oracle::RetroOracle::loss_at(script, w);
      e.grad = oracle::RetroOracle::grad_at(script, w);
      return e;
    };
    const auto diag = adapt_step(state, params, fn);
    if (diag.branch == StepBranch::kOscillation) ++oscillation_steps;
    reference.step(script, oracle_params);

    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::fabs(params[i] - oracle_params[i]) < 1e-12);
      CHECK(std::fabs(state.trend_gradient[i] - reference.trend[i]) < 1e-12);
      CHECK(std::fabs(state.momentum_buffer[i] - reference.buffer[i]) <
            1e-12);
    }
  }
  CHECK(state.samples_seen == 300);
  CHECK(oscillation_steps > 5);  // both branches actually exercised
}

TEST_CASE("adapter state snapshots round-trip") {
  AdapterHyper hyper;
  hyper.learning_rate = 3e-4;
  hyper.use_sharpness_aware = false;
  AdapterState state = AdapterState::init(hyper, 4);
  state.samples_seen = 123;
  state.error_count = 2;
  state.momentum_buffer = {0.1, -0.2, 0.3, -0.4};
  state.trend_gradient = {1.0, 2.0, 3.0, 4.0};

  const fs::path dir = fs::temp_directory_path() / "bitta_adapter_tests";
  fs::create_directories(dir);
  const fs::path path = dir / "state.bst";
  save_adapter_state(path, state);
  const AdapterState back = load_adapter_state(path);
  CHECK(back.hyper == state.hyper);
  CHECK(back.samples_seen == 123);
  CHECK(back.error_count == 2);
  CHECK(back.momentum_buffer == state.momentum_buffer);
  CHECK(back.trend_gradient == state.trend_gradient);

  fs::resize_file(path, fs::file_size(path) - 8);
  CHECK_THROWS_AS(load_adapter_state(path), LengthMismatchError);
}
