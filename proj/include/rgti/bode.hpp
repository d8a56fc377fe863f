#pragma once

// Named transfer functions of the design and their Bode tables.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rgti/design.hpp"
#include "rgti/linearize.hpp"

namespace rgti {

struct NamedTf {
  std::string name;
  std::string description;
  RationalTf tf;
  bool open_loop = false;  // margins are reported for loop gains
};

/// Every transfer function the `bode` command knows, evaluated at the
/// design operating points: plant at the MPP with no load, battery-current
/// loop at the emulation design point.
inline std::vector<NamedTf> named_tfs(const SystemParams& sys, const ControlDesign& d) {
  const auto& c = sys.converter;
  const auto& op = d.voltage_op;
  const auto& bec = d.current_op;
  const RationalTf lag = RationalTf::first_order_lag(d.h_i.w_n);
  const RationalTf grid_plant = grid_voltage_plant(sys, sys.pv.v_mpp, 1.0, d.targets.bus_filter / 2.0);
  return {
      {"Gpv", "PV voltage per unit duty, MPP, no load", plant_tf_voltage(op, c.c_in, c.r_esr, c.l_f), false},
      {"Gpi", "inductor current per volt of PV voltage, MPP, no load", plant_tf_current(op, c.c_in, c.r_esr, c.l_f),
       false},
      {"Hv", "inner voltage PI, duty per volt", pi_tf(d.h_v), false},
      {"Hi", "battery-current PI with lag, volts per amp", pi_lag_tf(d.h_i), false},
      {"H1", "grid-tied bus-voltage PI, amps per volt", pi_tf(d.h_1), false},
      {"H2", "grid current PR, volts per amp", pr_tf(d.h_2), false},
      {"loop_v", "inner voltage loop gain", voltage_loop(sys, op, d.h_v), true},
      {"loop_i", "battery-current loop gain at the emulation design point",
       pi_tf(d.h_i.pi) * lag * current_loop_plant(sys, bec, d.h_v), true},
      {"loop_1", "grid-tied bus-voltage loop gain", pi_tf(d.h_1) * grid_plant, true},
      {"loop_2", "grid current loop gain", grid_current_loop(sys, d.h_2), true},
  };
}

inline std::vector<double> log_frequencies(double f_lo, double f_hi, int per_decade) {
  if (!(f_lo > 0.0 && f_hi > f_lo) || per_decade < 1) throw ConfigError("log_frequencies: bad range");
  std::vector<double> f;
  const int n = static_cast<int>(std::ceil(std::log10(f_hi / f_lo) * per_decade - 1e-9));
  for (int k = 0; k <= n; ++k) f.push_back(std::min(f_hi, f_lo * std::pow(10.0, static_cast<double>(k) / per_decade)));
  return f;
}

struct BodeOptions {
  double f_lo = 0.1;
  double f_hi = 10e3;
  int per_decade = 20;
  bool numeric = false;  // add columns from the nonlinear model (Gpv, Gpi)
};

/// Writes `f_hz,mag_db,phase_deg` rows for the named TF; loop gains end with
/// a `# crossover_hz=... phase_margin_deg=... gain_margin_db=...` line.
inline void emit_bode(std::ostream& os, const std::string& name, const SystemParams& sys, const ControlDesign& d,
                      const BodeOptions& opt = {}) {
  const auto tfs = named_tfs(sys, d);
  const NamedTf* sel = nullptr;
  for (const auto& t : tfs)
    if (t.name == name) sel = &t;
  if (!sel) {
    std::string known;
    for (const auto& t : tfs) known += (known.empty() ? "" : ", ") + t.name;
    throw ConfigError("unknown transfer function '" + name + "' (known: " + known + ")");
  }
  const bool numeric = opt.numeric && (name == "Gpv" || name == "Gpi");
  if (opt.numeric && !numeric) throw ConfigError("--numeric is available for Gpv and Gpi only");

  const auto freqs = log_frequencies(opt.f_lo, opt.f_hi, opt.per_decade);
  std::vector<MeasuredResponse> measured;
  if (numeric) measured = linearize_numeric(sys, d.voltage_op, freqs);

  os << "# " << sel->name << ": " << sel->description << '\n';
  os << (numeric ? "f_hz,mag_db,phase_deg,numeric_mag_db,numeric_phase_deg\n" : "f_hz,mag_db,phase_deg\n");
  char buf[160];
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    const auto p = freq_response(sel->tf, freqs[k]);
    std::snprintf(buf, sizeof buf, "%.6g,%.6f,%.4f", freqs[k], p.magnitude_db, p.phase_deg);
    os << buf;
    if (numeric) {
      const auto h = name == "Gpv" ? measured[k].voltage_gain() : measured[k].current_gain();
      std::snprintf(buf, sizeof buf, ",%.6f,%.4f", 20.0 * std::log10(std::abs(h)), std::arg(h) * 180.0 / std::numbers::pi);
      os << buf;
    }
    os << '\n';
  }
  if (sel->open_loop) {
    const auto m = margins(sel->tf);
    std::snprintf(buf, sizeof buf, "# crossover_hz=%.6g phase_margin_deg=%.4f gain_margin_db=%.4f\n",
                  m.gain_crossover_hz, m.phase_margin_deg, m.gain_margin_db);
    os << buf;
  }
}

}  // namespace rgti
