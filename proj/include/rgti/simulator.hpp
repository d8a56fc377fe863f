#pragma once

// Closed-loop time-domain run of a scenario: averaged plant, the active
// control law, the supervisor at 10 Hz, and the evaluation of the
// scenario's expectations on the resulting trace.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "rgti/design.hpp"
#include "rgti/mode_control.hpp"
#include "rgti/scenario.hpp"
#include "rgti/sim_core.hpp"
#include "rgti/supervisor.hpp"

namespace rgti {

inline const std::vector<std::string>& trace_channels() {
  static const std::vector<std::string> names{
      "v_pv", "i_pv", "p_pv", "i_L",  "i_B",  "i_load", "v_bat",  "p_load", "cmd",   "v_ref",   "i_ref",
      "v_g",  "p_ac", "v_pv_avg", "iq", "g_r", "mode",  "f_grid", "f_chg",  "f_G",   "perturbation", "i_B_avg"};
  return names;
}

// Supervisory-rate record: means over the preceding tick interval.
struct TickRecord {
  double t = 0.0;
  Mode mode = Mode::GT_MPPT;  // mode during the interval
  bool active = false;        // converter running during the whole interval
  double v_pv = 0.0;
  double i_pv = 0.0;
  double i_B = 0.0;
  double i_L = 0.0;
  MarginEstimate margin;
};

struct PhaseMetrics {
  double t0 = 0.0;
  double t1 = 0.0;
  Mode mode = Mode::GT_MPPT;  // at the end of the phase
  double i_B = 0.0;           // means over the last second of the phase
  double p_pv = 0.0;
  double p_load = 0.0;
  double g_r = NAN;
};

struct ExpectationResult {
  std::string text;
  int line = 0;
  bool pass = false;
  double value = NAN;
  std::string detail;
};

struct OverchargeCheck {
  bool ok = true;
  int intervals_checked = 0;
  double min_i_B = std::numeric_limits<double>::infinity();  // most negative mean in checked ticks
};

struct RunReport {
  std::string scenario;
  Mode final_mode = Mode::GT_MPPT;
  std::vector<Transition> transitions;
  std::vector<PhaseMetrics> phases;
  std::vector<std::string> warnings;
  std::vector<ExpectationResult> expectations;
  std::vector<TickRecord> ticks;
  std::vector<double> event_times;
  double i_b_deadband = 0.3;

  bool passed() const {
    return std::all_of(expectations.begin(), expectations.end(), [](const auto& e) { return e.pass; });
  }
};

struct RunResult {
  Trace trace;
  RunReport report;
};

/// No-overcharge property: in steady battery-emulation intervals (more than
/// `settle` seconds after BEC entry or any scenario event) the 100 ms mean of
/// i_B never goes below -deadband.
inline OverchargeCheck check_no_overcharge(const RunReport& r, double settle = 5.0, double tick = 0.1) {
  OverchargeCheck out;
  std::vector<double> disturbances = r.event_times;
  disturbances.push_back(0.0);  // start of the run
  for (const auto& tr : r.transitions)
    if (tr.to == Mode::BT_BEC) disturbances.push_back(tr.t);
  std::sort(disturbances.begin(), disturbances.end());
  for (const auto& tk : r.ticks) {
    if (tk.mode != Mode::BT_BEC || !tk.active) continue;
    const double start = tk.t - tick;
    const auto it = std::upper_bound(disturbances.begin(), disturbances.end(), start + 1e-9);
    const double last = it == disturbances.begin() ? -std::numeric_limits<double>::infinity() : *(it - 1);
    if (start < last + settle - 1e-9) continue;
    ++out.intervals_checked;
    out.min_i_B = std::min(out.min_i_B, tk.i_B);
    if (tk.i_B < -r.i_b_deadband) out.ok = false;
  }
  return out;
}

class Simulator {
 public:
  Simulator(Scenario sc, SystemParams sys, std::optional<double> dt_override = std::nullopt)
      : sc_(std::move(sc)), sys_(std::move(sys)), design_(design_controls(sys_)) {
    th_ = Thresholds::for_battery(sys_.battery);
    cfg_.dt = dt_override ? *dt_override : sc_.dt.value_or(20e-6);
    cfg_.t_end = sc_.t_end;
    cfg_.sample_decimation = sc_.decimation;
    cfg_.grid_frequency = sys_.grid.frequency;
    cfg_.validate();
  }

  void set_design(const ControlDesign& d) { design_ = d; }
  const ControlDesign& design() const { return design_; }

  RunResult run();

 private:
  struct Measurement {
    double v_pv = 0.0, i_pv = 0.0, i_B = 0.0, i_load = 0.0, v_bat = 0.0, v_g = 0.0;
  };

  Measurement measure(double t) const;
  void apply_event(const Event& ev, double t);
  void enter_mode(Mode next, double t, const Measurement& m, bool reconfigure);
  double control(double t, const Measurement& m);
  void integrate(double t);
  void on_tick(double t, RunReport& rep, const Measurement& m);
  bool perturbation_on() const;
  double set_point(const std::string& name) const { return sp_.at(name); }
  bool converter_active() const { return enabled_ && !(mode_ == Mode::GT_MPPT && !grid_present_); }
  double grid_voltage(double t) const {
    return grid_present_ ? sys_.grid.amplitude() * std::sin(sys_.grid.omega() * t) : 0.0;
  }
  MpptParams mppt_params() const {
    MpptParams p = MpptParams::for_pv(sys_.pv);
    p.step = set_point("mppt_step");
    p.algorithm = set_point("mppt_algorithm") != 0.0 ? MpptAlgorithm::PerturbObserve
                                                     : MpptAlgorithm::IncrementalConductance;
    return p;
  }

  Scenario sc_;
  SystemParams sys_;
  ControlDesign design_;
  Thresholds th_;
  SimConfig cfg_;

  // plant
  double v_cap_ = 0.0;
  double i_L_ = 0.0;
  double cmd_ = 0.0;
  double g_ = 1.0;
  double r_load_ = std::numeric_limits<double>::infinity();
  bool grid_present_ = true;
  bool enabled_ = true;

  // control
  Mode mode_ = Mode::GT_MPPT;
  std::map<std::string, double> sp_;
  MpptState mppt_;
  PiState inner_;
  BecState bec_;
  GridTiedState gt_;
  PerturbationSource perturb_;
  double v_ref_ = 0.0;
  double perturb_value_ = 0.0;
  bool collapse_warned_ = false;

  // supervisory accumulators
  double acc_v_ = 0.0, acc_i_ = 0.0, acc_ib_ = 0.0, acc_il_ = 0.0;
  bool tick_active_ = true;
  Mode tick_mode_ = Mode::GT_MPPT;
  std::deque<double> margin_v_, margin_i_;
  std::size_t margin_decim_ = 1;
  std::size_t margin_len_ = 0;
  MarginEstimate margin_;
  double last_g_r_ = NAN;
  MovingAverage v_avg_;
  MovingAverage i_b_avg_;
  std::optional<Supervisor> sup_;
};

inline Simulator::Measurement Simulator::measure(double t) const {
  Measurement m;
  m.v_g = grid_voltage(t);
  const bool active = converter_active();
  const double i_L = active ? i_L_ : 0.0;
  const double draw = active ? cmd_ * i_L : 0.0;
  m.v_pv = pv_terminal_voltage(sys_.pv, g_, v_cap_, draw, sys_.converter.r_esr);
  m.i_pv = pv_current(sys_.pv, m.v_pv, g_);
  const double i_into_battery_node = (active && mode_ != Mode::GT_MPPT) ? i_L : 0.0;
  const auto node = battery_node(sys_.battery, i_into_battery_node, r_load_);
  m.i_B = node.i_B;
  m.i_load = node.i_load;
  m.v_bat = node.v_bat;
  return m;
}

inline bool Simulator::perturbation_on() const {
  const double p = set_point("perturbation");
  if (p < 0.0 || !converter_active()) return false;
  if (p > 0.0) return is_battery_tied(mode_);
  return mode_ == Mode::BT_BEC;
}

inline void Simulator::enter_mode(Mode next, double t, const Measurement& m, bool reconfigure) {
  const Mode prev = mode_;
  mode_ = next;
  const MpptParams mp = mppt_params();
  if (reconfigure) i_L_ = 0.0;
  if (next == Mode::GT_MPPT) {
    gt_ = grid_tied_start(design_, m.v_pv, cfg_.dt, gt_.pll);
    gt_.voltage_loop = set_point("voltage_loop") != 0.0;
    gt_.iq_ref = set_point("iq_ref");
    mppt_ = mppt_start(mp, m.v_pv);
    v_ref_ = set_point("mppt") != 0.0 ? mppt_.v_ref : set_point("v_ref");
    gt_.v_ref = v_ref_;
    cmd_ = 0.0;
    return;
  }
  if (next == Mode::BT_MPPT) {
    const double ref = prev == Mode::BT_BEC ? bec_.v_ref : m.v_pv;
    mppt_ = mppt_start(mp, ref);
    v_ref_ = set_point("mppt") != 0.0 ? mppt_.v_ref : set_point("v_ref");
    if (reconfigure || prev == Mode::GT_MPPT || !enabled_) {
      // Duty that holds zero inductor current at the present bus voltage.
      const double duty0 = std::clamp(m.v_bat / std::max(m.v_pv, 1.0), 0.0, 1.0);
      inner_ = pi_preload(design_.h_v, duty0, m.v_pv - v_ref_);
      cmd_ = duty0;
    }
    return;
  }
  // BT_BEC: hand the present reference to the outer loop.
  if (reconfigure) {
    v_ref_ = m.v_pv;
    const double duty0 = std::clamp(m.v_bat / std::max(m.v_pv, 1.0), 0.0, 1.0);
    inner_ = pi_preload(design_.h_v, duty0, 0.0);
    cmd_ = duty0;
  }
  bec_.outer = pi_lag_preload(design_.h_i, v_ref_, -m.i_B);
  bec_.inner = inner_;
  bec_.v_ref = v_ref_;
  bec_.saturated_time = 0.0;
  (void)t;
}

inline void Simulator::apply_event(const Event& ev, double t) {
  switch (ev.action) {
    case Action::GridLoss: grid_present_ = false; break;
    case Action::GridReturn: grid_present_ = true; break;
    case Action::LoadStep: r_load_ = ev.value; break;
    case Action::IrradianceStep: g_ = ev.value; break;
    case Action::DisableRgti:
      enabled_ = false;
      i_L_ = 0.0;
      cmd_ = 0.0;
      break;
    case Action::EnableRgti:
      if (!enabled_) {
        const Measurement m = measure(t);
        const Mode start = sup_->flags().f_grid ? Mode::GT_MPPT : Mode::BT_MPPT;
        enabled_ = true;
        mode_ = start;
        enter_mode(start, t, m, true);
        sup_->enter(start, t);
        // Force the supervisor's view to the new mode.
        sup_ = Supervisor(start, th_, sup_->flags().f_grid);
      }
      break;
    case Action::SetPoint:
      sp_[ev.name] = ev.value;
      if (ev.name == "v_ref" && set_point("mppt") == 0.0) v_ref_ = ev.value;
      if (ev.name == "mppt" && ev.value != 0.0) mppt_ = mppt_start(mppt_params(), v_ref_);
      if (ev.name == "mppt" && ev.value == 0.0) v_ref_ = set_point("v_ref");
      if (ev.name == "voltage_loop") {
        const bool on = ev.value != 0.0;
        if (on && !gt_.voltage_loop) gt_.h1 = pi_preload(design_.h_1, gt_.iq, 0.0);
        gt_.voltage_loop = on;
      }
      if (ev.name == "iq_ref") gt_.iq_ref = ev.value;
      break;
  }
}

inline double Simulator::control(double t, const Measurement& m) {
  perturb_.enabled = perturbation_on();
  perturb_value_ = inject_perturbation(perturb_, t);
  const double dt = cfg_.dt;
  if (mode_ == Mode::GT_MPPT) {
    gt_.v_ref = v_ref_;
    gt_ = grid_tied_step(design_, gt_, {m.v_g, converter_active() ? i_L_ : 0.0, m.v_pv}, dt);
    return converter_active() ? gt_.modulation : 0.0;
  }
  gt_.pll = pll_step(design_.pll, gt_.pll, m.v_g, dt);
  if (!converter_active()) return 0.0;
  if (mode_ == Mode::BT_MPPT) {
    const auto r = voltage_loop_step(design_.h_v, inner_, v_ref_ + perturb_value_, m.v_pv, dt);
    inner_ = r.state;
    return r.duty;
  }
  const auto r = bec_step(design_.h_i, design_.h_v, bec_, m.i_B, m.v_pv, perturb_value_, dt);
  bec_ = r.state;
  inner_ = bec_.inner;
  v_ref_ = bec_.v_ref;
  if (r.margin_collapse && !collapse_warned_) {
    collapse_warned_ = true;
  }
  return r.duty;
}

inline void Simulator::integrate(double t) {
  static constexpr std::string_view names[] = {"v_cap", "i_L"};
  const auto& c = sys_.converter;
  const StateVec<2> x0{v_cap_, i_L_};
  StateVec<2> x;
  if (!converter_active()) {
    auto f = [&](double, const StateVec<2>& s) -> StateVec<2> {
      const double v = pv_terminal_voltage(sys_.pv, g_, s[0], 0.0, c.r_esr);
      return {pv_current(sys_.pv, v, g_) / c.c_in, 0.0};
    };
    x = integrate_step(x0, f, t, cfg_.dt, names);
    x[1] = 0.0;
  } else if (mode_ == Mode::GT_MPPT) {
    const double amp = sys_.grid.amplitude();
    auto f = [&](double tt, const StateVec<2>& s) -> StateVec<2> {
      const auto d = grid_tied_derivatives({s[0], s[1], 0.0}, sys_.pv, g_, c, grid_voltage(tt), amp, cmd_);
      return {d.dv_cap, d.di_L};
    };
    x = integrate_step(x0, f, t, cfg_.dt, names);
  } else {
    auto f = [&](double, const StateVec<2>& s) -> StateVec<2> {
      const auto d = battery_tied_derivatives({s[0], s[1], cmd_}, sys_.pv, g_, sys_.battery, c, r_load_);
      return {d.dv_cap, d.di_L};
    };
    x = integrate_step(x0, f, t, cfg_.dt, names);
  }
  v_cap_ = x[0];
  i_L_ = x[1];
}

inline void Simulator::on_tick(double t, RunReport& rep, const Measurement& m) {
  const double n = std::round(0.1 / cfg_.dt);
  TickRecord rec;
  rec.t = t;
  rec.mode = tick_mode_;
  rec.active = tick_active_;
  rec.v_pv = acc_v_ / n;
  rec.i_pv = acc_i_ / n;
  rec.i_B = acc_ib_ / n;
  rec.i_L = acc_il_ / n;
  acc_v_ = acc_i_ = acc_ib_ = acc_il_ = 0.0;

  margin_ = {};
  if (perturb_.enabled && margin_v_.size() == margin_len_) {
    const std::vector<double> v(margin_v_.begin(), margin_v_.end());
    const std::vector<double> i(margin_i_.begin(), margin_i_.end());
    margin_ = estimate_margin(v, i, cfg_.dt * static_cast<double>(margin_decim_), 0.2, perturb_.amplitude);
    if (margin_.valid) last_g_r_ = margin_.g_r;
  }
  rec.margin = margin_;
  rep.ticks.push_back(rec);

  // MPPT update from the interval means.
  const bool mppt_mode = mode_ == Mode::GT_MPPT || mode_ == Mode::BT_MPPT;
  if (mppt_mode && converter_active() && tick_active_ && set_point("mppt") != 0.0) {
    mppt_ = mppt_step(mppt_params(), mppt_, rec.v_pv, rec.i_pv);
    v_ref_ = mppt_.v_ref;
  }

  FlagMeasurement fm;
  fm.grid_ok = gt_.pll.locked && grid_present_;
  fm.i_B = rec.i_B;
  fm.margin = margin_;
  const bool allow = enabled_ && set_point("supervisor") != 0.0;
  const auto r = sup_->tick(t, fm, allow);
  if (sup_->flag_state().near_open_circuit)
    if (rep.warnings.empty() || rep.warnings.back().find("near open circuit") == std::string::npos)
      rep.warnings.push_back("t=" + text::format_number(t) + ": g_r >= " + text::format_number(th_.g_r_high) +
                             " (near open circuit)");
  if (r.transition) {
    const bool reconfigure = is_battery_tied(r.transition->from) != is_battery_tied(r.transition->to);
    enter_mode(r.transition->to, t, m, reconfigure);
    rep.transitions.push_back(*r.transition);
    rep.transitions.back().g_r = std::isnan(r.transition->g_r) ? last_g_r_ : r.transition->g_r;
  }
  if (r.chatter)
    rep.warnings.push_back("t=" + text::format_number(t) + ": more than " + std::to_string(th_.chatter_count) +
                           " transitions within " + text::format_number(th_.chatter_window) + " s");
  tick_active_ = converter_active();
  tick_mode_ = mode_;
}

inline RunResult Simulator::run() {
  const double dt = cfg_.dt;
  const auto steps_per_tick = static_cast<std::size_t>(std::llround(0.1 / dt));
  if (std::abs(static_cast<double>(steps_per_tick) * dt - 0.1) > 1e-9)
    throw ConfigError("run: dt must divide the 100 ms supervisory period");
  // Margin samples: the largest divisor of the tick not coarser than 0.5 ms.
  margin_decim_ = 1;
  for (std::size_t d = 1; d <= steps_per_tick; ++d)
    if (steps_per_tick % d == 0 && static_cast<double>(d) * dt <= 0.5e-3 + 1e-12) margin_decim_ = d;
  margin_len_ = 2 * steps_per_tick / margin_decim_;

  sp_ = set_point_defaults();
  for (const auto& [k, v] : sc_.set_points) sp_[k] = v;
  g_ = sc_.irradiance;
  r_load_ = sc_.load;
  grid_present_ = sc_.grid;
  enabled_ = sc_.rgti;
  v_cap_ = sys_.pv.v_oc;
  i_L_ = 0.0;
  cmd_ = 0.0;
  perturb_ = {0.01 * sys_.pv.v_mpp, 10.0, false};
  v_avg_ = MovingAverage(static_cast<std::size_t>(std::llround(design_.targets.bus_filter / dt)), v_cap_);
  i_b_avg_ = MovingAverage(steps_per_tick, measure(0.0).i_B);
  gt_.pll = grid_present_ ? pll_locked_at(design_.pll, sys_.grid.amplitude(), 0.0) : pll_start(design_.pll);
  gt_.bus_filter = MovingAverage(static_cast<std::size_t>(std::llround(design_.targets.bus_filter / dt)), v_cap_);
  v_ref_ = set_point("v_ref");

  mode_ = sc_.mode.value_or(grid_present_ ? Mode::GT_MPPT : Mode::BT_MPPT);
  sup_.emplace(mode_, th_, grid_present_);
  if (enabled_) {
    enter_mode(mode_, 0.0, measure(0.0), true);
    sup_->enter(mode_, 0.0);
  }
  tick_mode_ = mode_;
  tick_active_ = converter_active();

  RunResult res{Trace(trace_channels()), {}};
  RunReport& rep = res.report;
  rep.scenario = sc_.name;
  rep.i_b_deadband = th_.i_b_deadband;
  for (const auto& ev : sc_.events) rep.event_times.push_back(ev.t);

  const auto n_steps = static_cast<std::size_t>(std::llround(sc_.t_end / dt));
  const auto decim = static_cast<std::size_t>(cfg_.sample_decimation);
  std::size_t next_event = 0;
  std::vector<double> row(trace_channels().size());
  try {
    for (std::size_t k = 0; k <= n_steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      while (next_event < sc_.events.size() && sc_.events[next_event].t <= t + dt / 2) {
        apply_event(sc_.events[next_event], t);
        ++next_event;
      }
      Measurement m = measure(t);
      if (k > 0 && k % steps_per_tick == 0) {
        on_tick(t, rep, m);
        m = measure(t);
      }
      const double v_avg = v_avg_.push(m.v_pv);
      const double i_b_avg = i_b_avg_.push(m.i_B);
      if (k % margin_decim_ == 0) {
        margin_v_.push_back(m.v_pv);
        margin_i_.push_back(m.i_pv);
        if (margin_v_.size() > margin_len_) {
          margin_v_.pop_front();
          margin_i_.pop_front();
        }
      }
      if (k == n_steps) {
        // final sample only
      } else {
        cmd_ = control(t, m);
      }
      const bool active = converter_active();
      if (k % decim == 0) {
        const Flags& f = sup_->flags();
        const double i_L = active ? i_L_ : 0.0;
        const bool gt = mode_ == Mode::GT_MPPT;
        row = {m.v_pv,
               m.i_pv,
               m.v_pv * m.i_pv,
               i_L,
               m.i_B,
               m.i_load,
               m.v_bat,
               m.v_bat * m.i_load,
               cmd_,
               gt ? gt_.v_ref : v_ref_,
               gt ? gt_.i_ref : 0.0,
               m.v_g,
               gt && active ? m.v_g * i_L : 0.0,
               v_avg,
               gt ? gt_.iq : 0.0,
               last_g_r_,
               static_cast<double>(static_cast<int>(mode_)),
               f.f_grid ? 1.0 : 0.0,
               f.f_chg ? 1.0 : 0.0,
               f.f_G ? 1.0 : 0.0,
               perturb_value_,
               i_b_avg};
        res.trace.append(t, row);
      }
      if (k == n_steps) break;
      acc_v_ += m.v_pv;
      acc_i_ += m.i_pv;
      acc_ib_ += m.i_B;
      acc_il_ += active ? i_L_ : 0.0;
      integrate(t);
      if (!converter_active()) i_L_ = 0.0;
    }
  } catch (const SimulationDiverged& e) {
    throw SimulationDiverged(e.time(), std::string(e.channel()));
  }
  rep.final_mode = mode_;
  return res;
}

// ------------------------------------------------------------ evaluation

namespace detail {

inline std::vector<double> window_values(const Trace& tr, const std::string& ch, double t0, double t1) {
  if (!tr.has_channel(ch)) throw ConfigError("unknown trace channel '" + ch + "'");
  const auto& t = tr.time();
  const auto& x = tr.channel(ch);
  std::vector<double> out;
  for (std::size_t k = 0; k < t.size(); ++k)
    if (t[k] >= t0 - 1e-9 && t[k] <= t1 + 1e-9 && !std::isnan(x[k])) out.push_back(x[k]);
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? NAN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace detail

inline ExpectationResult evaluate(const Expectation& e, const Trace& tr, const RunReport& rep) {
  ExpectationResult r;
  r.text = describe(e);
  r.line = e.line;
  const auto& a = e.args;
  char buf[256];
  try {
    switch (e.kind) {
      case ExpectKind::FinalMode:
        r.pass = rep.final_mode == e.mode_a;
        r.detail = "final mode " + std::string(to_string(rep.final_mode));
        break;
      case ExpectKind::Transition: {
        const auto it = std::find_if(rep.transitions.begin(), rep.transitions.end(),
                                     [&](const Transition& x) { return x.from == e.mode_a && x.to == e.mode_b; });
        r.pass = it != rep.transitions.end();
        if (r.pass) {
          r.value = it->t;
          std::snprintf(buf, sizeof buf, "at t=%.3f s with f_grid=%c f_chg=%c f_G=%c", it->t, level(it->flags.f_grid),
                        level(it->flags.f_chg), level(it->flags.f_G));
          r.detail = buf;
        } else {
          r.detail = "no such transition";
        }
        break;
      }
      case ExpectKind::Transitions:
        r.value = static_cast<double>(rep.transitions.size());
        r.pass = r.value >= a[0] && r.value <= a[1];
        r.detail = std::to_string(rep.transitions.size()) + " transition(s)";
        break;
      case ExpectKind::Stat: {
        const auto v = detail::window_values(tr, e.channel, a[0], a[1]);
        if (v.empty()) throw ConfigError("no samples in window");
        if (e.stat == "mean") r.value = detail::mean_of(v);
        if (e.stat == "min") r.value = *std::min_element(v.begin(), v.end());
        if (e.stat == "max") r.value = *std::max_element(v.begin(), v.end());
        if (e.stat == "absmax") {
          r.value = 0.0;
          for (double x : v) r.value = std::max(r.value, std::abs(x));
        }
        r.pass = r.value >= a[2] && r.value <= a[3];
        std::snprintf(buf, sizeof buf, "%s = %.6g (allowed [%g, %g])", e.stat.c_str(), r.value, a[2], a[3]);
        r.detail = buf;
        break;
      }
      case ExpectKind::Settle: {
        // args: t_event t_end target tol max_time
        const auto& t = tr.time();
        const auto& x = tr.channel(e.channel);
        double last_out = a[0];
        for (std::size_t k = 0; k < t.size(); ++k)
          if (t[k] >= a[0] && t[k] <= a[1] && std::abs(x[k] - a[2]) > a[3]) last_out = t[k];
        r.value = last_out - a[0];
        r.pass = r.value <= a[4] && last_out < a[1];
        std::snprintf(buf, sizeof buf, "settling time %.4f s (limit %g s)", r.value, a[4]);
        r.detail = buf;
        break;
      }
      case ExpectKind::Track: {
        const auto& t = tr.time();
        const auto& x = tr.channel(e.channel);
        const auto& y = tr.channel(e.channel2);
        r.value = 0.0;
        for (std::size_t k = 0; k < t.size(); ++k)
          if (t[k] >= a[0] && t[k] <= a[1]) r.value = std::max(r.value, std::abs(x[k] - y[k]));
        r.pass = r.value <= a[2];
        std::snprintf(buf, sizeof buf, "max |%s - %s| = %.4g (limit %g)", e.channel.c_str(), e.channel2.c_str(),
                      r.value, a[2]);
        r.detail = buf;
        break;
      }
      case ExpectKind::Continuity: {
        // args: pre_window post_t0 post_t1 rel_tol
        const auto it = std::find_if(rep.transitions.begin(), rep.transitions.end(),
                                     [&](const Transition& x) { return x.from == e.mode_a && x.to == e.mode_b; });
        if (it == rep.transitions.end()) {
          r.detail = "transition did not occur";
          break;
        }
        const double pre = detail::mean_of(detail::window_values(tr, e.channel, it->t - a[0], it->t));
        const double post = detail::mean_of(detail::window_values(tr, e.channel, a[1], a[2]));
        r.value = std::abs(post - pre) / std::abs(pre);
        r.pass = r.value < a[3];
        std::snprintf(buf, sizeof buf, "before %.4g, after %.4g, change %.2f%% (limit %.2f%%)", pre, post,
                      100.0 * r.value, 100.0 * a[3]);
        r.detail = buf;
        break;
      }
      case ExpectKind::Tone: {
        // args: frequency t0 t1 lo hi
        const auto v = detail::window_values(tr, e.channel, a[1], a[2]);
        const double period = tr.sample_period();
        std::vector<double> w(v.begin(), v.end() - (v.size() > 1 ? 1 : 0));  // half-open window
        r.value = extract_tone(w, period, a[0], static_cast<double>(w.size()) * period).amplitude;
        r.pass = r.value >= a[3] && r.value <= a[4];
        std::snprintf(buf, sizeof buf, "%g Hz amplitude %.4g (allowed [%g, %g])", a[0], r.value, a[3], a[4]);
        r.detail = buf;
        break;
      }
      case ExpectKind::NoOvercharge: {
        const auto c = check_no_overcharge(rep);
        r.pass = c.ok;
        r.value = c.intervals_checked > 0 ? c.min_i_B : NAN;
        std::snprintf(buf, sizeof buf, "%d steady BEC interval(s), lowest mean i_B %.4g A (limit %.3g A)",
                      c.intervals_checked, c.intervals_checked > 0 ? c.min_i_B : 0.0, -rep.i_b_deadband);
        r.detail = buf;
        break;
      }
    }
  } catch (const Error& ex) {
    r.pass = false;
    r.detail = ex.what();
  }
  return r;
}

/// Runs the scenario and evaluates its expectations and phase metrics.
inline RunResult run(const Scenario& sc, const SystemParams& sys, std::optional<double> dt = std::nullopt,
                     const std::optional<ControlDesign>& design = std::nullopt) {
  Simulator sim(sc, sys, dt);
  if (design) sim.set_design(*design);
  RunResult res = sim.run();
  auto& rep = res.report;
  // Phase metrics between scenario events.
  std::vector<double> bounds{0.0};
  for (const auto& ev : sc.events)
    if (ev.t > bounds.back() && ev.t < sc.t_end) bounds.push_back(ev.t);
  bounds.push_back(sc.t_end);
  for (std::size_t p = 0; p + 1 < bounds.size(); ++p) {
    PhaseMetrics pm;
    pm.t0 = bounds[p];
    pm.t1 = bounds[p + 1];
    const double w0 = std::max(pm.t0, pm.t1 - 1.0);
    const double w1 = pm.t1 - 1e-6;  // exclude the sample taken after the next event
    pm.i_B = detail::mean_of(detail::window_values(res.trace, "i_B", w0, w1));
    pm.p_pv = detail::mean_of(detail::window_values(res.trace, "p_pv", w0, w1));
    pm.p_load = detail::mean_of(detail::window_values(res.trace, "p_load", w0, w1));
    pm.g_r = detail::mean_of(detail::window_values(res.trace, "g_r", w0, w1));
    const auto modes = detail::window_values(res.trace, "mode", w0, w1);
    pm.mode = modes.empty() ? rep.final_mode : static_cast<Mode>(static_cast<int>(modes.back()));
    rep.phases.push_back(pm);
  }
  for (const auto& e : sc.expectations) rep.expectations.push_back(evaluate(e, res.trace, rep));
  return res;
}

inline void write_report(std::ostream& os, const RunReport& rep) {
  char buf[512];
  os << "scenario: " << rep.scenario << '\n';
  os << "final mode: " << to_string(rep.final_mode) << '\n';
  os << "transitions:\n";
  for (const auto& tr : rep.transitions) {
    std::snprintf(buf, sizeof buf, "  t=%.3f %s -> %s (f_grid=%c f_chg=%c f_G=%c, g_r=%.3g, i_B=%.3g A)\n", tr.t,
                  std::string(to_string(tr.from)).c_str(), std::string(to_string(tr.to)).c_str(),
                  level(tr.flags.f_grid), level(tr.flags.f_chg), level(tr.flags.f_G), tr.g_r, tr.i_B);
    os << buf;
  }
  os << "phases (means over the last second of each phase):\n";
  for (const auto& p : rep.phases) {
    std::snprintf(buf, sizeof buf, "  [%.2f, %.2f] %-8s i_B=%8.4f A  P_pv=%8.1f W  P_load=%8.1f W  g_r=%.3g\n", p.t0,
                  p.t1, std::string(to_string(p.mode)).c_str(), p.i_B, p.p_pv, p.p_load, p.g_r);
    os << buf;
  }
  for (const auto& w : rep.warnings) os << "warning: " << w << '\n';
  os << "expectations:\n";
  for (const auto& e : rep.expectations)
    os << "  [" << (e.pass ? "PASS" : "FAIL") << "] " << e.text << " -- " << e.detail << '\n';
  os << (rep.passed() ? "RESULT: PASS" : "RESULT: FAIL") << '\n';
}

}  // namespace rgti
