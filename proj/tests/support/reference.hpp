#ifndef BITTA_TESTS_SUPPORT_REFERENCE_HPP
#define BITTA_TESTS_SUPPORT_REFERENCE_HPP

// Independent oracles for the test suites. Everything here is written as
// straight-line scalar code with no dependency on the library's autodiff,
// optimizer, or signal paths, so it can vouch for them.

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace oracle {

// Magnitude spectrum by direct DFT (O(n^2)); bin k covers k * rate / n Hz.
// The mean is removed first so the DC bin does not mask the pulse.
inline std::vector<double> dft_magnitudes(std::span<const double> x) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);

  std::vector<double> mags(n / 2 + 1, 0.0);
  for (std::size_t k = 0; k < mags.size(); ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * M_PI * static_cast<double>(k) *
                           static_cast<double>(t) / static_cast<double>(n);
      acc += (x[t] - mean) * std::complex<double>(std::cos(angle),
                                                  std::sin(angle));
    }
    mags[k] = std::abs(acc);
  }
  return mags;
}

// Frequency (Hz) of the strongest non-DC bin.
inline double dominant_frequency_hz(std::span<const double> x, double rate) {
  const auto mags = dft_magnitudes(x);
  std::size_t best = 1;
  for (std::size_t k = 2; k < mags.size(); ++k) {
    if (mags[k] > mags[best]) best = k;
  }
  return static_cast<double>(best) * rate / static_cast<double>(x.size());
}

// Plain SGD with momentum: buffer <- m * buffer + g; w <- w - lr * buffer.
struct SgdMomentum {
  double learning_rate;
  double momentum;
  std::vector<double> buffer;

  explicit SgdMomentum(double lr, double m, std::size_t n)
      : learning_rate(lr), momentum(m), buffer(n, 0.0) {}

  void step(std::vector<double>& w, std::span<const double> g) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      buffer[i] = momentum * buffer[i] + g[i];
      w[i] -= learning_rate * buffer[i];
    }
  }
};

// Straight-line reimplementation of the retrospective update pipeline for a
// quadratic per-step loss L(w) = 0.5 * sum_i q_i (w_i - c_i)^2, including the
// sharpness probe, the loss-weighted trend, the oscillation projection, the
// anneal blend, and the momentum step. Mirrors the documented equations
// directly; shares no code with the library.
struct ScriptedQuadratic {
  std::vector<double> q;  // positive curvatures
  std::vector<double> c;  // loss centers
};

struct RetroOracle {
  double learning_rate;
  double momentum;
  double radius;
  double backtrack;
  double trend_samples;
  bool prospective;
  bool retrospective;

  std::uint64_t t = 0;
  std::vector<double> buffer;
  std::vector<double> trend;

  RetroOracle(double lr, double m, double rho, double k, double omega,
              bool pa, bool rs, std::size_t n)
      : learning_rate(lr), momentum(m), radius(rho), backtrack(k),
        trend_samples(omega), prospective(pa), retrospective(rs),
        buffer(n, 0.0), trend(n, 0.0) {}

  static double loss_at(const ScriptedQuadratic& s,
                        std::span<const double> w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += 0.5 * s.q[i] * (w[i] - s.c[i]) * (w[i] - s.c[i]);
    }
    return acc;
  }

  static std::vector<double> grad_at(const ScriptedQuadratic& s,
                                     std::span<const double> w) {
    std::vector<double> g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      g[i] = s.q[i] * (w[i] - s.c[i]);
    }
    return g;
  }

  void step(const ScriptedQuadratic& s, std::vector<double>& w) {
    const std::uint64_t t_next = t + 1;
    const double loss = loss_at(s, w);
    std::vector<double> g = grad_at(s, w);

    if (prospective) {
      double norm = 0.0;
      for (double v : g) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0.0 && radius > 0.0) {
        std::vector<double> probed(w);
        for (std::size_t i = 0; i < w.size(); ++i) {
          probed[i] += (radius / norm) * g[i];
        }
        g = grad_at(s, probed);
      }
    }

    bool zero = true;
    for (double v : g) {
      if (v != 0.0) zero = false;
    }
    if (zero) {
      t = t_next;
      return;
    }

    std::vector<double> final_grad = g;
    if (retrospective) {
      const double weight = 1.0 / std::max(std::fabs(loss), 1e-8);
      for (std::size_t i = 0; i < trend.size(); ++i) {
        trend[i] = (trend[i] + weight * g[i]) / (1.0 + weight);
      }
      const double lambda =
          std::tanh(2.0 * static_cast<double>(t_next) / trend_samples);
      double trend_sq = 0.0, cross = 0.0, gnorm = 0.0;
      for (std::size_t i = 0; i < trend.size(); ++i) {
        trend_sq += trend[i] * trend[i];
        cross += g[i] * trend[i];
        gnorm += g[i] * g[i];
      }
      if (trend_sq > 0.0 && gnorm > 0.0 && cross < 0.0) {
        const double coef = backtrack * cross / trend_sq;
        for (std::size_t i = 0; i < trend.size(); ++i) {
          final_grad[i] = coef * trend[i];
        }
      } else {
        for (std::size_t i = 0; i < trend.size(); ++i) {
          final_grad[i] = (1.0 - lambda) * g[i] + lambda * trend[i];
        }
      }
    }

    for (std::size_t i = 0; i < w.size(); ++i) {
      buffer[i] = momentum * buffer[i] + final_grad[i];
      w[i] -= learning_rate * buffer[i];
    }
    t = t_next;
  }
};

// Direct metrics recomputation.
struct PlainMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  bool r_defined = false;
  double r = 0.0;
};

inline PlainMetrics plain_metrics(std::span<const double> p,
                                  std::span<const double> g) {
  PlainMetrics m;
  const auto n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    m.mae += std::fabs(p[i] - g[i]);
    m.rmse += (p[i] - g[i]) * (p[i] - g[i]);
  }
  m.mae /= n;
  m.rmse = std::sqrt(m.rmse / n);
  double pm = 0.0, gm = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pm += p[i];
    gm += g[i];
  }
  pm /= n;
  gm /= n;
  double cov = 0.0, pv = 0.0, gv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cov += (p[i] - pm) * (g[i] - gm);
    pv += (p[i] - pm) * (p[i] - pm);
    gv += (g[i] - gm) * (g[i] - gm);
  }
  if (pv > 0.0 && gv > 0.0) {
    m.r_defined = true;
    m.r = cov / std::sqrt(pv * gv);
  }
  return m;
}

}  // namespace oracle

#endif  // BITTA_TESTS_SUPPORT_REFERENCE_HPP
