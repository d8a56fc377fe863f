#pragma once

// Loop designs derived from the system parameters: the battery-tied inner
// voltage loop and outer battery-current loop, the grid-tied bus-voltage and
// AC-current loops, and the PLL.

#include <cmath>
#include <limits>
#include <numbers>

#include "rgti/controllers.hpp"
#include "rgti/plant.hpp"

namespace rgti {

struct DesignTargets {
  double voltage_bw = 55.0;     // Hz, battery-tied inner loop
  double voltage_pm = 35.0;     // deg
  double current_bw = 0.5;      // Hz, battery current loop
  double current_pm = 80.0;     // deg; a PI on this quasi-static plant cannot go below ~79
  double lag_corner_hz = 5.0;   // H_i lag
  double bec_design_v = 520.0;  // V, operating point used for the current loop
  double grid_voltage_bw = 8.0; // Hz, H_1
  double grid_voltage_pm = 55.0;
  double grid_current_bw = 800.0;  // Hz, H_2
  double bus_filter = 0.010;       // s, moving average on v_pv in grid-tied mode
  double pll_bw = 20.0;            // Hz, natural frequency of the PLL
  double pll_damping = std::numbers::sqrt2 / 2.0;
  double iq_limit_factor = 1.2;    // H_1 output limit relative to rated peak current
};

struct PllParams {
  double w_nom = 2.0 * std::numbers::pi * 50.0;
  double sogi_gain = std::numbers::sqrt2;
  double k_p = 0.0;
  double k_i = 0.0;
  double nominal_amplitude = 200.0 * std::numbers::sqrt2;
};

struct ControlDesign {
  DesignTargets targets;
  OperatingPoint voltage_op;  // MPP, no load
  OperatingPoint current_op;  // BEC design point
  PiParams h_v;               // duty = H_v (v_pv - v_ref)
  PiLagParams h_i;            // v_ref = H_i (0 - i_B)
  PiParams h_1;               // I_q* = H_1 (v_pv - v_ref)
  PrParams h_2;               // volts per amp of current error
  PllParams pll;
  double iq_max = 0.0;
};

/// Inner voltage loop gain (the voltage plant has negative gain).
inline RationalTf voltage_loop(const SystemParams& sys, const OperatingPoint& op, const PiParams& h_v) {
  const auto& c = sys.converter;
  return -plant_tf_voltage(op, c.c_in, c.r_esr, c.l_f) * pi_tf(h_v);
}

/// Plant seen by the battery current loop: i_B per volt of v_ref.
inline RationalTf current_loop_plant(const SystemParams& sys, const OperatingPoint& op, const PiParams& h_v) {
  const auto& c = sys.converter;
  const RationalTf t_v = voltage_loop(sys, op, h_v).unity_feedback();
  return -op.battery_share * plant_tf_current(op, c.c_in, c.r_esr, c.l_f) * t_v;
}

/// Drop in v_pv per amp of I_q* (peak) in grid-tied mode, including the bus
/// filter delay as a first-order Pade term. H_1 acts on v_pv - v_ref, which
/// absorbs the sign.
inline RationalTf grid_voltage_plant(const SystemParams& sys, double v_pv, double g, double filter_delay) {
  const double i = pv_current(sys.pv, v_pv, g);
  const double r1 = pv_dynamic_resistance(sys.pv, v_pv, g);
  const RationalTf bus({sys.grid.amplitude() / 2.0}, {v_pv / r1 - i, sys.converter.c_in * v_pv});
  const double h = filter_delay / 2.0;
  return bus * RationalTf({1.0, -h}, {1.0, h});
}

/// Continuous model of the current loop: PR on the L filter (feedforward
/// cancels the grid voltage).
inline RationalTf grid_current_loop(const SystemParams& sys, const PrParams& h2) {
  return pr_tf(h2) * RationalTf({1.0}, {sys.converter.r_series, sys.converter.l_f});
}

inline ControlDesign design_controls(const SystemParams& sys, const DesignTargets& targets = {}) {
  sys.validate();
  ControlDesign d;
  d.targets = targets;
  const auto& c = sys.converter;
  const double inf = std::numeric_limits<double>::infinity();

  d.voltage_op = battery_operating_point(sys, sys.pv.v_mpp, 1.0, inf);
  d.h_v = tune_pi_for_margin(-plant_tf_voltage(d.voltage_op, c.c_in, c.r_esr, c.l_f), targets.voltage_bw,
                             targets.voltage_pm);
  d.h_v.out_min = 0.0;
  d.h_v.out_max = 1.0;

  const double r_bec = bec_load_resistance(sys, targets.bec_design_v, 1.0);
  d.current_op = battery_operating_point(sys, targets.bec_design_v, 1.0, r_bec);
  d.h_i.w_n = 2.0 * std::numbers::pi * targets.lag_corner_hz;
  const RationalTf lag = RationalTf::first_order_lag(d.h_i.w_n);
  d.h_i.pi = tune_pi_for_margin(current_loop_plant(sys, d.current_op, d.h_v) * lag, targets.current_bw,
                                targets.current_pm);
  d.h_i.pi.out_min = 0.1 * sys.pv.v_oc;
  d.h_i.pi.out_max = sys.pv.v_oc;

  d.h_1 = tune_pi_for_margin(grid_voltage_plant(sys, sys.pv.v_mpp, 1.0, targets.bus_filter / 2.0),
                             targets.grid_voltage_bw, targets.grid_voltage_pm);
  d.iq_max = targets.iq_limit_factor * std::numbers::sqrt2 * sys.rated_power / sys.grid.v_rms;
  d.h_1.out_min = 0.0;
  d.h_1.out_max = d.iq_max;

  d.h_2.w0 = sys.grid.omega();
  d.h_2.k_p = 2.0 * std::numbers::pi * targets.grid_current_bw * c.l_f;
  d.h_2.k_r = d.h_2.k_p * d.h_2.w0;
  d.h_2.damping = 5e-4;

  d.pll.w_nom = sys.grid.omega();
  d.pll.nominal_amplitude = sys.grid.amplitude();
  const double wn = 2.0 * std::numbers::pi * targets.pll_bw;
  d.pll.k_p = 2.0 * targets.pll_damping * wn;
  d.pll.k_i = wn * wn;
  return d;
}

}  // namespace rgti
