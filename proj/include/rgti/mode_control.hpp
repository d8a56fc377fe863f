#pragma once

// Operating control laws: voltage-based MPPT (incremental conductance and a
// perturb-and-observe variant), the SOGI-based PLL, the conductance-ratio
// power-margin estimator, and one step of the battery-emulation and
// grid-tied controllers.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "rgti/controllers.hpp"
#include "rgti/design.hpp"
#include "rgti/sim_core.hpp"

namespace rgti {

// ---------------------------------------------------------------- MPPT

enum class MpptAlgorithm { IncrementalConductance, PerturbObserve };

struct MpptParams {
  double step = 2.0;        // V
  double deadband = 0.01;   // relative to i/v
  double v_min = 56.0;      // 0.1 v_oc
  double v_max = 560.0;     // v_oc
  double min_dv = 1e-3;     // V; smaller changes are treated as no change
  double min_di_rel = 1e-3; // relative current change treated as no change
  MpptAlgorithm algorithm = MpptAlgorithm::IncrementalConductance;

  static MpptParams for_pv(const PvParams& pv) {
    MpptParams p;
    p.v_min = 0.1 * pv.v_oc;
    p.v_max = pv.v_oc;
    return p;
  }
};

struct MpptState {
  double v_ref = 0.0;
  double prev_v = 0.0;
  double prev_i = 0.0;
  double direction = -1.0;
  bool has_prev = false;
};

inline MpptState mppt_start(const MpptParams& p, double v_ref) {
  MpptState st;
  st.v_ref = std::clamp(v_ref, p.v_min, p.v_max);
  return st;
}

namespace detail {

inline MpptState mppt_move(const MpptParams& p, MpptState st, double dir, double v, double i) {
  st.v_ref = std::clamp(st.v_ref + dir * p.step, p.v_min, p.v_max);
  st.direction = dir;
  st.prev_v = v;
  st.prev_i = i;
  st.has_prev = true;
  return st;
}

}  // namespace detail

/// One incremental-conductance update from the window means of v and i.
inline MpptState mppt_ic_step(const MpptParams& p, MpptState st, double v, double i) {
  if (!st.has_prev) return detail::mppt_move(p, st, st.direction, v, i);
  const double dv = v - st.prev_v;
  const double di = i - st.prev_i;
  if (std::abs(dv) < p.min_dv) {
    // No voltage change: follow an irradiance change if there is one,
    // otherwise perturb again so the next update has a usable dv.
    if (std::abs(di) > p.min_di_rel * std::max(std::abs(i), 1e-9))
      return detail::mppt_move(p, st, di > 0.0 ? 1.0 : -1.0, v, i);
    return detail::mppt_move(p, st, st.direction, v, i);
  }
  const double conductance = i / std::max(v, 1e-9);
  const double x = di / dv + conductance;
  if (std::abs(x) < p.deadband * conductance) {
    st.prev_v = v;
    st.prev_i = i;
    return st;
  }
  return detail::mppt_move(p, st, x > 0.0 ? 1.0 : -1.0, v, i);
}

inline MpptState mppt_po_step(const MpptParams& p, MpptState st, double v, double i) {
  if (!st.has_prev || std::abs(v - st.prev_v) < p.min_dv) return detail::mppt_move(p, st, st.direction, v, i);
  const double dp = v * i - st.prev_v * st.prev_i;
  const double dv = v - st.prev_v;
  // Keep moving while power rises in the direction of the last voltage change.
  const double dir = (dp >= 0.0) == (dv > 0.0) ? 1.0 : -1.0;
  return detail::mppt_move(p, st, dir, v, i);
}

inline MpptState mppt_step(const MpptParams& p, const MpptState& st, double v, double i) {
  return p.algorithm == MpptAlgorithm::IncrementalConductance ? mppt_ic_step(p, st, v, i)
                                                              : mppt_po_step(p, st, v, i);
}

// ---------------------------------------------------------------- PLL

struct PllState {
  double v_d = 0.0;       // in-phase SOGI output
  double v_q = 0.0;       // quadrature SOGI output (lags by 90 deg)
  double theta = 0.0;     // estimated phase, [0, 2 pi)
  double omega = 0.0;     // estimated angular frequency
  double integrator = 0.0;
  double error = 0.0;     // sin(theta - theta_hat)
  double amplitude = 0.0;
  double lock_time = 0.0;
  bool locked = false;
};

/// State already synchronised to v = amplitude * sin(phase).
inline PllState pll_locked_at(const PllParams& p, double amplitude, double phase) {
  PllState st;
  st.v_d = amplitude * std::sin(phase);
  st.v_q = -amplitude * std::cos(phase);
  st.theta = std::fmod(phase, kTwoPi);
  if (st.theta < 0.0) st.theta += kTwoPi;
  st.omega = p.w_nom;
  st.amplitude = amplitude;
  st.lock_time = 2.0 * kTwoPi / p.w_nom;
  st.locked = amplitude > 0.1 * p.nominal_amplitude;
  return st;
}

inline PllState pll_start(const PllParams& p) {
  PllState st;
  st.omega = p.w_nom;
  return st;
}

inline PllState pll_step(const PllParams& p, const PllState& st, double v, double dt) {
  const double w_lo = 0.8 * p.w_nom;
  const double w_hi = 1.2 * p.w_nom;
  const double amp_floor = 0.01 * p.nominal_amplitude;
  auto phase_error = [&](const StateVec<4>& x) {
    const double amp = std::hypot(x[0], x[1]);
    if (amp < amp_floor) return 0.0;
    return (x[0] * std::cos(x[2]) + x[1] * std::sin(x[2])) / amp;
  };
  auto deriv = [&](double, const StateVec<4>& x) -> StateVec<4> {
    const double err = phase_error(x);
    const double w = std::clamp(p.w_nom + p.k_p * err + x[3], w_lo, w_hi);
    return {w * (p.sogi_gain * (v - x[0]) - x[1]), w * x[0], w, p.k_i * err};
  };
  static constexpr std::string_view names[] = {"pll.v_d", "pll.v_q", "pll.theta", "pll.integrator"};
  const StateVec<4> x0{st.v_d, st.v_q, st.theta, st.integrator};
  auto x = integrate_step(x0, deriv, 0.0, dt, names);
  x[3] = std::clamp(x[3], w_lo - p.w_nom, w_hi - p.w_nom);
  PllState out;
  out.v_d = x[0];
  out.v_q = x[1];
  out.theta = std::fmod(x[2], kTwoPi);
  if (out.theta < 0.0) out.theta += kTwoPi;
  out.integrator = x[3];
  out.error = phase_error(x);
  out.omega = std::clamp(p.w_nom + p.k_p * out.error + out.integrator, w_lo, w_hi);
  out.amplitude = std::hypot(x[0], x[1]);
  const bool in_range = out.amplitude > 0.1 * p.nominal_amplitude;
  const bool aligned = std::abs(out.error) < std::sin(2.0 * std::numbers::pi / 180.0);
  out.lock_time = (in_range && aligned) ? st.lock_time + dt : 0.0;
  out.locked = in_range && out.lock_time >= 2.0 * kTwoPi / p.w_nom;
  return out;
}

// ---------------------------------------------------------------- margin

struct MarginEstimate {
  double g_tilde = 0.0;
  double g_dc = 0.0;
  double g_r = 0.0;
  bool valid = false;
};

/// Conductance ratio from the 10 Hz tone in v_pv and i_pv over the trailing
/// `window` of two sample sequences taken every `sample_period`.
inline MarginEstimate estimate_margin(std::span<const double> v, std::span<const double> i, double sample_period,
                                      double window, double injected_amplitude, double frequency = 10.0,
                                      double t_first = 0.0) {
  if (v.size() != i.size()) throw ConfigError("estimate_margin: v and i sequences differ in length");
  const double periods = window * frequency;
  if (window < 0.2 - 1e-12 || std::abs(periods - std::round(periods)) > 1e-9)
    throw ConfigError("estimate_margin: window must be a multiple of the tone period and >= 0.2 s");
  const Tone tv = extract_tone(v, sample_period, frequency, window, t_first);
  const Tone ti = extract_tone(i, sample_period, frequency, window, t_first);
  const auto n = static_cast<std::size_t>(std::llround(window / sample_period));
  const double v_mean = std::accumulate(v.end() - static_cast<std::ptrdiff_t>(n), v.end(), 0.0) / n;
  const double i_mean = std::accumulate(i.end() - static_cast<std::ptrdiff_t>(n), i.end(), 0.0) / n;
  MarginEstimate m;
  m.g_dc = v_mean > 0.0 ? i_mean / v_mean : 0.0;
  m.valid = tv.amplitude >= 0.01 * injected_amplitude && m.g_dc > 0.0;
  if (m.valid) {
    m.g_tilde = ti.amplitude / tv.amplitude;
    m.g_r = m.g_tilde / m.g_dc;
  }
  return m;
}

// ---------------------------------------------------------------- battery-tied

struct BecState {
  PiLagState outer;
  PiState inner;
  double v_ref = 0.0;
  double saturated_time = 0.0;
};

struct BecOutput {
  double duty = 0.0;
  BecState state;
  bool margin_collapse = false;  // duty saturated for more than 1 s
};

/// Outer loop drives i_B to zero through the PV voltage reference; inner
/// loop holds the PV voltage. The voltage plant has negative gain, so the
/// inner PI acts on v_pv - v_ref.
inline BecOutput bec_step(const PiLagParams& outer, const PiParams& inner, const BecState& st, double i_B,
                          double v_pv, double perturb, double dt) {
  BecOutput out;
  out.state = st;
  const auto o = pi_lag_step(outer, st.outer, 0.0 - i_B, dt);
  out.state.outer = o.state;
  out.state.v_ref = o.value;
  const auto in = pi_step(inner, st.inner, v_pv - (o.value + perturb), dt);
  out.state.inner = in.state;
  out.duty = in.value;
  out.state.saturated_time = in.state.saturated ? st.saturated_time + dt : 0.0;
  out.margin_collapse = out.state.saturated_time > 1.0;
  return out;
}

struct VoltageLoopOutput {
  double duty = 0.0;
  PiState state;
};

/// Battery-tied MPPT submode: inner voltage loop only.
inline VoltageLoopOutput voltage_loop_step(const PiParams& inner, const PiState& st, double v_ref, double v_pv,
                                           double dt) {
  const auto r = pi_step(inner, st, v_pv - v_ref, dt);
  return {r.value, r.state};
}

// ---------------------------------------------------------------- grid-tied

/// Running mean over a fixed number of samples.
class MovingAverage {
 public:
  MovingAverage() = default;
  MovingAverage(std::size_t n, double initial) : buf_(std::max<std::size_t>(n, 1), initial) {
    sum_ = initial * static_cast<double>(buf_.size());
  }

  double push(double x) {
    sum_ += x - buf_[pos_];
    buf_[pos_] = x;
    pos_ = (pos_ + 1) % buf_.size();
    return value();
  }
  double value() const { return sum_ / static_cast<double>(buf_.size()); }

 private:
  std::vector<double> buf_{0.0};
  std::size_t pos_ = 0;
  double sum_ = 0.0;
};

struct GridTiedState {
  PllState pll;
  PiState h1;
  PrState h2;
  MovingAverage bus_filter;
  double v_ref = 0.0;
  double iq_ref = 0.0;       // peak amps; manual command when the voltage loop is off
  double iq = 0.0;           // present peak current command
  double i_ref = 0.0;
  double modulation = 0.0;
  bool voltage_loop = true;
};

struct GridTiedMeasurement {
  double v_g = 0.0;
  double i_ac = 0.0;
  double v_pv = 0.0;
};

inline GridTiedState grid_tied_start(const ControlDesign& d, double v_pv, double dt, const PllState& pll) {
  GridTiedState st;
  st.pll = pll;
  st.bus_filter = MovingAverage(static_cast<std::size_t>(std::llround(d.targets.bus_filter / dt)), v_pv);
  st.v_ref = v_pv;
  return st;
}

/// PLL, bus-voltage loop H_1 (on the filtered v_pv), and PR current loop H_2
/// with grid-voltage feedforward. Returns the state holding the modulation.
inline GridTiedState grid_tied_step(const ControlDesign& d, const GridTiedState& st, const GridTiedMeasurement& m,
                                    double dt) {
  GridTiedState next = st;
  next.pll = pll_step(d.pll, st.pll, m.v_g, dt);
  const double v_avg = next.bus_filter.push(m.v_pv);
  double iq = 0.0;
  if (!next.pll.locked) {
    next.h1 = {};
  } else if (st.voltage_loop) {
    const auto r = pi_step(d.h_1, st.h1, v_avg - st.v_ref, dt);
    next.h1 = r.state;
    iq = r.value;
  } else {
    iq = std::clamp(st.iq_ref, 0.0, d.iq_max);
  }
  next.iq = iq;
  next.i_ref = iq * std::sin(next.pll.theta);
  const auto u = pr_step(d.h_2, st.h2, next.i_ref - m.i_ac, dt);
  next.h2 = u.state;
  const double v_bus = std::max(m.v_pv, 1.0);
  next.modulation = std::clamp((m.v_g + u.value) / v_bus, -1.0, 1.0);
  return next;
}

}  // namespace rgti
