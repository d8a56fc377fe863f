#pragma once

// Discrete controller primitives (PI, PI + lag, proportional-resonant) with
// their continuous-time transfer functions, and a closed-form PI tuner that
// hits a crossover/phase-margin pair and verifies itself with margins().

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include "rgti/errors.hpp"
#include "rgti/rational_tf.hpp"

namespace rgti {

struct PiParams {
  double k_p = 0.0;
  double k_i = 0.0;  // 1/s
  double out_min = -std::numeric_limits<double>::infinity();
  double out_max = std::numeric_limits<double>::infinity();
  bool anti_windup = true;

  void validate() const {
    if (!(k_p >= 0.0) || !(k_i >= 0.0)) throw ConfigError("PiParams: gains must be >= 0");
    if (!(out_min < out_max)) throw ConfigError("PiParams: out_min must be < out_max");
  }
};

struct PiState {
  double integrator = 0.0;
  double prev_error = 0.0;
  bool saturated = false;
};

struct PiOutput {
  double value = 0.0;
  PiState state;
};

/// One step of a trapezoidal PI. With anti-windup on, the integrator is
/// frozen whenever the unclamped output is beyond a limit and the error
/// pushes it further out, and the integrator itself never leaves the limits.
inline PiOutput pi_step(const PiParams& p, const PiState& st, double error, double dt) {
  PiState next = st;
  const double integ = st.integrator + 0.5 * p.k_i * dt * (error + st.prev_error);
  const double raw = p.k_p * error + integ;
  const bool high = raw > p.out_max;
  const bool low = raw < p.out_min;
  next.prev_error = error;
  next.saturated = high || low;
  if (p.anti_windup) {
    // While driven further into a limit the integrator moves only as far as
    // needed for the output to reach it.
    if (high && error > 0.0)
      next.integrator = std::clamp(p.out_max - p.k_p * error, std::min(st.integrator, integ), integ);
    else if (low && error < 0.0)
      next.integrator = std::clamp(p.out_min - p.k_p * error, integ, std::max(st.integrator, integ));
    else
      next.integrator = integ;
    next.integrator = std::clamp(next.integrator, p.out_min, p.out_max);
  } else {
    next.integrator = integ;
  }
  const double out = p.anti_windup ? std::clamp(p.k_p * error + next.integrator, p.out_min, p.out_max)
                                   : std::clamp(raw, p.out_min, p.out_max);
  return {out, next};
}

/// Integrator value that makes the next output equal `output` for `error`
/// (bumpless hand-over).
inline PiState pi_preload(const PiParams& p, double output, double error) {
  PiState st;
  st.integrator = std::clamp(output - p.k_p * error, p.out_min, p.out_max);
  st.prev_error = error;
  return st;
}

inline RationalTf pi_tf(const PiParams& p) { return {{p.k_i, p.k_p}, {0.0, 1.0}}; }

// PI preceded by a first-order lag w_n/(s + w_n) on the error.
struct PiLagParams {
  PiParams pi;
  double w_n = 2.0 * std::numbers::pi * 5.0;

  void validate() const {
    pi.validate();
    if (!(w_n > 0.0)) throw ConfigError("PiLagParams: lag corner must be positive");
  }
};

struct PiLagState {
  PiState pi;
  double lag = 0.0;       // filtered error
  double prev_input = 0.0;
};

struct PiLagOutput {
  double value = 0.0;
  PiLagState state;
};

inline PiLagOutput pi_lag_step(const PiLagParams& p, const PiLagState& st, double error, double dt) {
  // Bilinear first-order lag.
  const double a = p.w_n * dt / 2.0;
  const double lag = ((1.0 - a) * st.lag + a * (error + st.prev_input)) / (1.0 + a);
  const auto r = pi_step(p.pi, st.pi, lag, dt);
  return {r.value, {r.state, lag, error}};
}

inline PiLagState pi_lag_preload(const PiLagParams& p, double output, double error) {
  PiLagState st;
  st.lag = error;
  st.prev_input = error;
  st.pi = pi_preload(p.pi, output, error);
  return st;
}

inline RationalTf pi_lag_tf(const PiLagParams& p) { return pi_tf(p.pi) * RationalTf::first_order_lag(p.w_n); }

// k_p + k_r s / (s^2 + 2 zeta w0 s + w0^2)
struct PrParams {
  double k_p = 0.0;
  double k_r = 0.0;
  double w0 = 2.0 * std::numbers::pi * 50.0;
  double damping = 5e-4;  // zeta

  void validate() const {
    if (!(w0 > 0.0)) throw ConfigError("PrParams: w0 must be positive");
    if (!(k_r > 0.0)) throw ConfigError("PrParams: k_r must be positive");
    if (!(k_p >= 0.0)) throw ConfigError("PrParams: k_p must be >= 0");
    if (!(damping >= 0.0)) throw ConfigError("PrParams: damping must be >= 0");
  }
};

struct PrState {
  double s1 = 0.0;  // transposed direct form II
  double s2 = 0.0;
};

struct PrOutput {
  double value = 0.0;
  PrState state;
};

struct Biquad {
  double b0 = 0.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;
};

/// Resonant term discretised with the bilinear transform prewarped at w0.
inline Biquad pr_biquad(const PrParams& p, double dt) {
  const double k = p.w0 / std::tan(p.w0 * dt / 2.0);
  const double w2 = p.w0 * p.w0;
  const double bw = 2.0 * p.damping * p.w0;
  const double a0 = k * k + bw * k + w2;
  Biquad q;
  q.b0 = p.k_r * k / a0;
  q.b1 = 0.0;
  q.b2 = -q.b0;
  q.a1 = (2.0 * w2 - 2.0 * k * k) / a0;
  q.a2 = (k * k - bw * k + w2) / a0;
  return q;
}

inline PrOutput pr_step(const PrParams& p, const PrState& st, double error, double dt) {
  if (!(dt < 0.1 / p.w0)) throw ConfigError("pr_step: dt must be < 0.1 / w0");
  const Biquad q = pr_biquad(p, dt);
  const double y = q.b0 * error + st.s1;
  PrState next;
  next.s1 = q.b1 * error - q.a1 * y + st.s2;
  next.s2 = q.b2 * error - q.a2 * y;
  return {p.k_p * error + y, next};
}

inline RationalTf pr_tf(const PrParams& p) {
  const RationalTf res({0.0, p.k_r}, {p.w0 * p.w0, 2.0 * p.damping * p.w0, 1.0});
  return RationalTf::gain(p.k_p) + res;
}

/// Response of the bilinear-discretised PR at frequency f (Hz), from its
/// z-domain coefficients.
inline std::complex<double> pr_discrete_response(const PrParams& p, double dt, double f) {
  const Biquad q = pr_biquad(p, dt);
  const std::complex<double> zi = std::polar(1.0, -2.0 * std::numbers::pi * f * dt);
  const auto num = q.b0 + q.b1 * zi + q.b2 * zi * zi;
  const auto den = 1.0 + q.a1 * zi + q.a2 * zi * zi;
  return p.k_p + num / den;
}

inline std::complex<double> pi_discrete_response(const PiParams& p, double dt, double f) {
  const std::complex<double> zi = std::polar(1.0, -2.0 * std::numbers::pi * f * dt);
  return p.k_p + p.k_i * dt / 2.0 * (1.0 + zi) / (1.0 - zi);
}

/// Closed-form PI for a target crossover (Hz) and phase margin (deg) on
/// `plant`, where the loop is PI * plant with negative feedback. The result
/// is checked with margins(); a miss raises InfeasibleDesign.
inline PiParams tune_pi_for_margin(const RationalTf& plant, double target_bw, double target_pm) {
  if (!(target_bw > 0.0)) throw ConfigError("tune_pi_for_margin: target bandwidth must be positive");
  const double w = 2.0 * std::numbers::pi * target_bw;
  const auto pj = plant.at_hz(target_bw);
  if (!std::isfinite(std::abs(pj)) || std::abs(pj) == 0.0)
    throw InfeasibleDesign("tune_pi_for_margin: plant gain is zero or infinite at the target", 0.0, 0.0);
  const double plant_phase = std::arg(pj) * 180.0 / std::numbers::pi;
  // Achievable PM with a PI (phase in (-90, 0]): 180 + plant_phase + (-90, 0].
  const double pm_max = wrap_degrees(180.0 + plant_phase);
  const double pm_min = pm_max - 90.0;
  const double pi_phase = target_pm - pm_max;  // required PI phase, degrees
  if (!(pi_phase <= 1e-9 && pi_phase > -90.0))
    throw InfeasibleDesign("tune_pi_for_margin: target phase margin " + std::to_string(target_pm) +
                               " deg outside achievable range",
                           pm_min, pm_max);
  const double t = std::tan(-std::min(pi_phase, 0.0) * std::numbers::pi / 180.0);
  const double w_z = w * t;
  PiParams p;
  p.k_p = 1.0 / (std::abs(pj) * std::sqrt(1.0 + t * t));
  p.k_i = p.k_p * w_z;

  Margins m;
  try {
    m = margins(pi_tf(p) * plant);
  } catch (const NoCrossover&) {
    throw InfeasibleDesign("tune_pi_for_margin: designed loop has no crossover", pm_min, pm_max);
  }
  if (std::abs(m.gain_crossover_hz / target_bw - 1.0) > 0.01 || std::abs(m.phase_margin_deg - target_pm) > 0.5)
    throw InfeasibleDesign("tune_pi_for_margin: designed loop crosses at " + std::to_string(m.gain_crossover_hz) +
                               " Hz with PM " + std::to_string(m.phase_margin_deg) + " deg",
                           pm_min, pm_max);
  return p;
}

}  // namespace rgti
