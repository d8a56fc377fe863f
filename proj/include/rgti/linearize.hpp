#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "rgti/plant.hpp"
#include "rgti/sim_core.hpp"

namespace rgti {

struct MeasuredResponse {
  double frequency = 0.0;
  double duty_amplitude = 0.0;
  std::complex<double> v_pv;  // phasor of the PV voltage response
  std::complex<double> i_L;   // phasor of the inductor current response

  // v_pv / d
  std::complex<double> voltage_gain() const { return v_pv / duty_amplitude; }
  // i_L / v_pv
  std::complex<double> current_gain() const { return i_L / v_pv; }
};

struct LinearizeOptions {
  double duty_amplitude = 2e-4;
  double max_step = 20e-6;
  double settle = 0.5;      // seconds discarded before the window
  double min_window = 0.1;  // seconds; at least two periods are always used
};

inline void check_equilibrium(const SystemParams& sys, const OperatingPoint& op) {
  const auto d = battery_tied_derivatives(op.state(), sys.pv, op.irradiance, sys.battery, sys.converter, op.r_load);
  const double cap_balance = std::abs(d.dv_cap * sys.converter.c_in);
  const double ind_balance = std::abs(d.di_L * sys.converter.l_f);
  if (cap_balance > 1e-6 * std::max(op.I_pv, 1e-9) || ind_balance > 1e-6 * op.D * op.V_pv)
    throw PreconditionError("linearize_numeric: operating point is not an equilibrium");
}

/// Frequency response of the nonlinear battery-tied model around `op`,
/// obtained by driving the duty ratio with a small sinusoid and projecting the
/// steady-state response onto the drive frequency.
inline std::vector<MeasuredResponse> linearize_numeric(const SystemParams& sys, const OperatingPoint& op,
                                                       std::span<const double> freqs,
                                                       const LinearizeOptions& opt = {}) {
  op.validate();
  check_equilibrium(sys, op);
  std::vector<MeasuredResponse> out;
  out.reserve(freqs.size());
  for (const double f : freqs) {
    if (!(f > 0.0)) throw ConfigError("linearize_numeric: frequencies must be positive");
    const double per_period = std::ceil(1.0 / (f * opt.max_step));
    const double dt = 1.0 / (f * per_period);
    const double periods = std::max(2.0, std::ceil(opt.min_window * f));
    const auto n_window = static_cast<std::size_t>(periods * per_period);
    const auto n_settle = static_cast<std::size_t>(std::ceil(opt.settle / dt));

    const double w = kTwoPi * f;
    const double a = opt.duty_amplitude;
    auto duty_at = [&](double t) { return op.D + a * std::sin(w * t); };
    auto deriv = [&](double t, const StateVec<2>& x) -> StateVec<2> {
      const auto d = battery_tied_derivatives({x[0], x[1], duty_at(t)}, sys.pv, op.irradiance, sys.battery,
                                              sys.converter, op.r_load);
      return {d.dv_cap, d.di_L};
    };

    StateVec<2> x{op.V_pv, op.I_L()};
    std::vector<double> v_samples;
    std::vector<double> i_samples;
    v_samples.reserve(n_window);
    i_samples.reserve(n_window);
    const std::size_t total = n_settle + n_window;
    for (std::size_t k = 0; k < total; ++k) {
      const double t = static_cast<double>(k) * dt;
      x = integrate_step(x, deriv, t, dt);
      if (k + 1 > n_settle) {
        const double t1 = static_cast<double>(k + 1) * dt;
        const double v = pv_terminal_voltage(sys.pv, op.irradiance, x[0], duty_at(t1) * x[1], sys.converter.r_esr);
        v_samples.push_back(v);
        i_samples.push_back(x[1]);
      }
    }
    const double t_first = static_cast<double>(n_settle + 1) * dt;
    const double window = static_cast<double>(n_window) * dt;
    const Tone tv = extract_tone(v_samples, dt, f, window, t_first);
    const Tone ti = extract_tone(i_samples, dt, f, window, t_first);
    out.push_back({f, a, tv.phasor(), ti.phasor()});
  }
  return out;
}

}  // namespace rgti
