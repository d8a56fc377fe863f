#pragma once

// Switching-averaged models of the converter in its two topologies and the
// small-signal plant of the battery-tied buck stage.
//
// Battery current follows the supervisor convention: i_B > 0 discharges the
// battery, i_B = i_load - i_L.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rgti/errors.hpp"
#include "rgti/pv.hpp"
#include "rgti/rational_tf.hpp"

namespace rgti {

struct BatteryParams {
  double v_oc = 192.0;
  double r_b = 0.10;
  double ampacity_ah = 60.0;
  double rated_current = 60.0;  // 1C

  void validate() const {
    if (!(v_oc > 0.0)) throw ConfigError("BatteryParams: v_oc must be positive");
    if (!(r_b > 0.0)) throw ConfigError("BatteryParams: r_b must be positive");
    if (!(ampacity_ah > 0.0)) throw ConfigError("BatteryParams: ampacity must be positive");
    if (!(rated_current > 0.0)) throw ConfigError("BatteryParams: rated current must be positive");
  }
};

struct ConverterParams {
  double c_in = 1230e-6;
  double r_esr = 0.080;
  double l_f = 2e-3;       // L_f1 + L_f2
  double r_series = 0.05;  // inductor winding + switch drop
  double c_f = 4e-6;       // not part of the averaged control-path model

  void validate() const {
    if (!(c_in > 0.0) || !(l_f > 0.0)) throw ConfigError("ConverterParams: C_in and L_f must be positive");
    if (r_esr < 0.0 || r_series < 0.0) throw ConfigError("ConverterParams: resistances must be >= 0");
  }
};

struct GridParams {
  double v_rms = 200.0;
  double frequency = 50.0;

  double amplitude() const { return std::sqrt(2.0) * v_rms; }
  double omega() const { return 2.0 * std::numbers::pi * frequency; }
};

struct SystemParams {
  PvParams pv = PvParams::reference();
  BatteryParams battery;
  ConverterParams converter;
  GridParams grid;
  double rated_power = 3600.0;

  static SystemParams reference() { return {}; }

  void validate() const {
    pv.validate();
    battery.validate();
    converter.validate();
    if (grid.frequency != 50.0 && grid.frequency != 60.0) throw ConfigError("grid frequency must be 50 or 60 Hz");
  }
};

struct ConverterState {
  double v_cap = 0.0;  // C_in voltage (behind r_esr)
  double i_L = 0.0;
  double duty = 0.0;
};

/// PV terminal voltage v solving v = v_cap + r_esr * (i_pv(v) - i_draw),
/// where i_draw is the averaged current the bridge takes from the bus.
inline double pv_terminal_voltage(const PvParams& pv, double g, double v_cap, double i_draw, double r_esr) {
  if (r_esr == 0.0) return v_cap;
  const double v_max = 1.05 * pv.v_oc;
  double v = std::clamp(v_cap, 0.0, v_max);
  for (int k = 0; k < 50; ++k) {
    const double f = v - v_cap - r_esr * (pv_current(pv, v, g) - i_draw);
    const double df = 1.0 - r_esr * pv_slope(pv, v, g);
    const double next = std::clamp(v - f / df, 0.0, v_max);
    if (std::abs(next - v) <= 1e-12 * (1.0 + std::abs(v))) return next;
    v = next;
  }
  return v;
}

struct BatteryNode {
  double v_bat = 0.0;
  double i_B = 0.0;  // discharge positive
  double i_load = 0.0;
};

// Battery (v_oc, r_b) in parallel with the UPS load resistance, fed by i_L.
// r_load = +inf means no load.
inline BatteryNode battery_node(const BatteryParams& b, double i_L, double r_load) {
  const double g_load = std::isinf(r_load) ? 0.0 : 1.0 / r_load;
  const double v_bat = (b.v_oc + b.r_b * i_L) / (1.0 + b.r_b * g_load);
  const double i_load = v_bat * g_load;
  return {v_bat, i_load - i_L, i_load};
}

struct BatteryTiedDerivatives {
  double dv_cap = 0.0;
  double di_L = 0.0;
  double v_pv = 0.0;
  double i_pv = 0.0;
  BatteryNode node;
};

inline BatteryTiedDerivatives battery_tied_derivatives(const ConverterState& s, const PvParams& pv, double g,
                                                       const BatteryParams& b, const ConverterParams& c,
                                                       double r_load) {
  if (!(r_load > 0.0)) throw ConfigError("battery_tied_derivatives: r_load must be positive or infinite");
  BatteryTiedDerivatives out;
  out.v_pv = pv_terminal_voltage(pv, g, s.v_cap, s.duty * s.i_L, c.r_esr);
  out.i_pv = pv_current(pv, out.v_pv, g);
  out.node = battery_node(b, s.i_L, r_load);
  out.dv_cap = (out.i_pv - s.duty * s.i_L) / c.c_in;
  out.di_L = (s.duty * out.v_pv - out.node.v_bat - c.r_series * s.i_L) / c.l_f;
  return out;
}

struct GridVoltage {
  double amplitude = 0.0;
  double omega = 0.0;
  double phase = 0.0;

  double at(double t) const { return amplitude * std::sin(omega * t + phase); }
};

struct GridTiedDerivatives {
  double dv_cap = 0.0;
  double di_L = 0.0;
  double v_pv = 0.0;
  double i_pv = 0.0;
  bool saturated = false;  // bus below grid peak: modulation cannot follow
};

// Averaged H-bridge on a single L filter; i_L is the AC inductor current
// flowing into the grid and v_grid the instantaneous grid voltage.
inline GridTiedDerivatives grid_tied_derivatives(const ConverterState& s, const PvParams& pv, double g,
                                                 const ConverterParams& c, double v_grid, double grid_peak,
                                                 double modulation) {
  if (std::abs(modulation) > 1.0 + 1e-12) throw ConfigError("grid_tied_derivatives: |modulation| must be <= 1");
  GridTiedDerivatives out;
  out.v_pv = pv_terminal_voltage(pv, g, s.v_cap, modulation * s.i_L, c.r_esr);
  out.i_pv = pv_current(pv, out.v_pv, g);
  out.dv_cap = (out.i_pv - modulation * s.i_L) / c.c_in;
  out.di_L = (modulation * out.v_pv - v_grid - c.r_series * s.i_L) / c.l_f;
  out.saturated = out.v_pv <= grid_peak;
  return out;
}

// Small-signal operating point of the battery-tied buck stage. V_B and R_2
// are the Thevenin voltage/resistance seen by the inductor (battery in
// parallel with the load, plus r_series).
struct OperatingPoint {
  double V_pv = 0.0;
  double I_pv = 0.0;
  double D = 0.0;
  double V_B = 0.0;
  double R_1 = 0.0;
  double R_2 = 0.0;
  double battery_share = 1.0;  // d(i_B)/d(i_L) magnitude = R_load/(R_load + r_b)
  double irradiance = 1.0;
  double r_load = std::numeric_limits<double>::infinity();

  double I_L() const { return I_pv / D; }

  void validate() const {
    if (!(R_1 > 0.0)) throw PreconditionError("OperatingPoint: R_1 must be positive");
    if (R_2 < 0.0) throw PreconditionError("OperatingPoint: R_2 must be >= 0");
    if (!(D > 0.0 && D <= 1.0)) throw PreconditionError("OperatingPoint: D must be in (0, 1]");
    if (2.0 * D * V_pv - V_B == 0.0) throw SingularOperatingPoint("OperatingPoint: 2*D*V_pv - V_B = 0");
  }

  ConverterState state() const { return {V_pv, I_L(), D}; }
};

/// Battery-tied equilibrium with the PV held at terminal voltage v_pv.
inline OperatingPoint battery_operating_point(const SystemParams& sys, double v_pv, double g, double r_load) {
  const auto& b = sys.battery;
  const double g_load = std::isinf(r_load) ? 0.0 : 1.0 / r_load;
  const double share = 1.0 / (1.0 + b.r_b * g_load);
  OperatingPoint op;
  op.V_pv = v_pv;
  op.I_pv = pv_current(sys.pv, v_pv, g);
  op.R_1 = pv_dynamic_resistance(sys.pv, v_pv, g);
  op.V_B = b.v_oc * share;
  op.R_2 = sys.converter.r_series + b.r_b * share;
  op.battery_share = share;
  op.irradiance = g;
  op.r_load = r_load;
  if (!(op.I_pv > 0.0)) throw PreconditionError("battery_operating_point: PV current must be positive");
  // D^2 V - V_B D - R_2 I_pv = 0
  op.D = (op.V_B + std::sqrt(op.V_B * op.V_B + 4.0 * v_pv * op.R_2 * op.I_pv)) / (2.0 * v_pv);
  return op;
}

/// Load resistance for which the PV at v_pv carries the whole load (i_B = 0).
inline double bec_load_resistance(const SystemParams& sys, double v_pv, double g) {
  const double i_pv = pv_current(sys.pv, v_pv, g);
  const double vb = sys.battery.v_oc;
  const double rs = sys.converter.r_series;
  const double d = (vb + std::sqrt(vb * vb + 4.0 * v_pv * rs * i_pv)) / (2.0 * v_pv);
  return vb / (i_pv / d);
}

// Corner frequencies and DC gains in factored form (rad/s).
struct PlantCorners {
  double k_a = 0.0;
  double k_b = 0.0;
  double w_a = 0.0;
  double w_b = 0.0;
  double w_c = 0.0;
  double w_d = 0.0;
};

inline PlantCorners plant_corners(const OperatingPoint& op, double c_in, double r_esr, double l_f) {
  op.validate();
  const double den = 2.0 * op.D * op.V_pv - op.V_B;
  PlantCorners pc;
  pc.k_a = -op.R_1 * den / (op.D * op.D * op.R_1 + op.R_2);
  pc.k_b = -1.0 / op.R_1 * (op.V_pv - op.I_pv * op.R_1) / den;
  pc.w_a = (op.D * op.D * op.R_1 + op.R_2) / l_f;
  pc.w_b = 1.0 / (op.R_1 * c_in);
  pc.w_c = pc.w_a * den / (op.D * op.V_pv - op.V_B);
  pc.w_d = r_esr > 0.0 ? 1.0 / (r_esr * c_in) : std::numeric_limits<double>::infinity();
  return pc;
}

namespace detail {

struct PlantPolys {
  Poly y_num;  // PV + capacitor branch admittance, numerator
  Poly y_den;
  Poly z_l;    // inductor branch impedance
};

inline PlantPolys plant_polys(const OperatingPoint& op, double c_in, double r_esr, double l_f) {
  return {{1.0 / op.R_1, c_in * (1.0 + r_esr / op.R_1)}, {1.0, r_esr * c_in}, {op.R_2, l_f}};
}

// 1 + s/w as a polynomial; w = inf gives 1.
inline Poly corner(double w) { return std::isinf(w) ? Poly{1.0} : Poly{1.0, 1.0 / w}; }

}  // namespace detail

/// v_pv(s) / d(s) of the averaged battery-tied stage, exact to first order.
/// DC gain is k_a; r_esr contributes the zero at 1/(r_esr C_in).
inline RationalTf plant_tf_voltage(const OperatingPoint& op, double c_in, double r_esr, double l_f) {
  op.validate();
  const auto p = detail::plant_polys(op, c_in, r_esr, l_f);
  const double il = op.I_L();
  const Poly drive = poly_add(poly_scale(p.z_l, il), {op.D * op.V_pv});
  const Poly num = poly_scale(poly_mul(drive, p.y_den), -1.0);
  const Poly den = poly_add(poly_mul(p.y_num, p.z_l), poly_scale(p.y_den, op.D * op.D));
  return {num, den};
}

/// i_L(s) / v_pv(s) of the same stage. DC gain is k_b.
inline RationalTf plant_tf_current(const OperatingPoint& op, double c_in, double r_esr, double l_f) {
  op.validate();
  const auto p = detail::plant_polys(op, c_in, r_esr, l_f);
  const double il = op.I_L();
  const Poly num = poly_add(poly_scale(p.y_den, op.D * il), poly_scale(p.y_num, -op.V_pv));
  const Poly den = poly_mul(poly_add(poly_scale(p.z_l, il), {op.D * op.V_pv}), p.y_den);
  return {num, den};
}

// Literal factored forms k_a (1+s/w_c)(1+s/w_d)/((1+s/w_a)(1+s/w_b)) and
// k_b (1+s/w_b)/((1+s/w_c)(1+s/w_d)). These neglect the C_in-L_f coupling.
inline RationalTf plant_tf_voltage_factored(const OperatingPoint& op, double c_in, double r_esr, double l_f) {
  const auto pc = plant_corners(op, c_in, r_esr, l_f);
  using detail::corner;
  return {poly_scale(poly_mul(corner(pc.w_c), corner(pc.w_d)), pc.k_a), poly_mul(corner(pc.w_a), corner(pc.w_b))};
}

inline RationalTf plant_tf_current_factored(const OperatingPoint& op, double c_in, double r_esr, double l_f) {
  const auto pc = plant_corners(op, c_in, r_esr, l_f);
  using detail::corner;
  return {poly_scale(corner(pc.w_b), pc.k_b), poly_mul(corner(pc.w_c), corner(pc.w_d))};
}

}  // namespace rgti
