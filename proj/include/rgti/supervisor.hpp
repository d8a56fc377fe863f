#pragma once

// Decision flags with debounce and the operating-mode transition table.

#include <array>
#include <cstdio>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "rgti/errors.hpp"
#include "rgti/mode_control.hpp"

namespace rgti {

enum class Mode { GT_MPPT, BT_MPPT, BT_BEC };

inline constexpr std::array<Mode, 3> kAllModes{Mode::GT_MPPT, Mode::BT_MPPT, Mode::BT_BEC};

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::GT_MPPT: return "GT_MPPT";
    case Mode::BT_MPPT: return "BT_MPPT";
    case Mode::BT_BEC: return "BT_BEC";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (Mode m : kAllModes)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

inline bool is_battery_tied(Mode m) { return m != Mode::GT_MPPT; }

// true = H, false = L
struct Flags {
  bool f_grid = true;
  bool f_chg = false;
  bool f_G = true;

  bool operator==(const Flags&) const = default;
};

inline char level(bool f) { return f ? 'H' : 'L'; }

struct Thresholds {
  double g_r_low = 4.0;
  double g_r_high = 1000.0;
  double i_b_deadband = 0.3;       // A, 0.5% of the 60 A rated current
  double debounce = 0.2;           // s, f_chg and f_G
  double grid_qualification = 2.0; // s, before f_grid returns to H
  double bec_blanking = 2.0;       // s after BEC entry with f_G held H
  int chatter_count = 5;           // more than this many transitions ...
  double chatter_window = 10.0;    // ... within this many seconds warns

  void validate() const {
    if (!(g_r_low > 0.0 && g_r_low < g_r_high)) throw ConfigError("Thresholds: need 0 < g_r_low < g_r_high");
    if (!(i_b_deadband > 0.0)) throw ConfigError("Thresholds: i_b_deadband must be positive");
    if (!(debounce > 0.0)) throw ConfigError("Thresholds: debounce must be positive");
  }

  static Thresholds for_battery(const BatteryParams& b) {
    Thresholds th;
    th.i_b_deadband = 0.005 * b.rated_current;
    return th;
  }
};

struct FlagMeasurement {
  bool grid_ok = false;  // PLL locked with amplitude in range
  double i_B = 0.0;      // discharge positive
  MarginEstimate margin;
};

// Flags plus the onset times of pending changes (NaN = no pending change).
struct FlagState {
  Flags flags;
  double grid_ok_since = NAN;
  double charging_since = NAN;
  double discharging_since = NAN;
  double low_margin_since = NAN;
  bool near_open_circuit = false;  // advisory: g_r at or above g_r_high
};

namespace detail {

inline bool sustained(double& since, bool condition, double t, double hold) {
  if (!condition) {
    since = NAN;
    return false;
  }
  if (std::isnan(since)) since = t;
  return t - since >= hold - 1e-9;
}

}  // namespace detail

inline FlagState update_flags(const FlagMeasurement& m, const Thresholds& th, const FlagState& prev, double t) {
  FlagState s = prev;
  // Grid: lost immediately, returns after the qualification time.
  if (!m.grid_ok) {
    s.flags.f_grid = false;
    s.grid_ok_since = NAN;
  } else if (!s.flags.f_grid) {
    s.flags.f_grid = detail::sustained(s.grid_ok_since, true, t, th.grid_qualification);
  }

  const bool charging = m.i_B < -th.i_b_deadband;
  const bool discharging = m.i_B > th.i_b_deadband;
  if (detail::sustained(s.charging_since, charging, t, th.debounce)) s.flags.f_chg = true;
  if (detail::sustained(s.discharging_since, discharging, t, th.debounce)) s.flags.f_chg = false;

  s.near_open_circuit = false;
  if (m.margin.valid) {
    const double g_r = m.margin.g_r;
    if (detail::sustained(s.low_margin_since, g_r < th.g_r_low, t, th.debounce)) s.flags.f_G = false;
    if (g_r > th.g_r_low) s.flags.f_G = true;
    s.near_open_circuit = g_r >= th.g_r_high;
  }
  return s;
}

/// Mode-transition table, completed so that a qualified grid always returns to
/// GT_MPPT.
inline Mode next_mode(Mode current, const Flags& f) {
  if (f.f_grid) return Mode::GT_MPPT;
  switch (current) {
    case Mode::GT_MPPT: return Mode::BT_MPPT;
    case Mode::BT_MPPT: return f.f_chg ? Mode::BT_BEC : Mode::BT_MPPT;
    case Mode::BT_BEC: return f.f_G ? Mode::BT_BEC : Mode::BT_MPPT;
  }
  return current;
}

// One row of the published transition table; nullopt = don't care.
struct TableRow {
  int condition;
  Mode present;
  std::optional<bool> f_grid, f_chg, f_G;
  Mode next;
};

inline constexpr std::array<TableRow, 6> kTransitionTable{{
    {1, Mode::GT_MPPT, true, std::nullopt, std::nullopt, Mode::GT_MPPT},
    {2, Mode::GT_MPPT, false, std::nullopt, std::nullopt, Mode::BT_MPPT},
    {3, Mode::BT_MPPT, false, false, std::nullopt, Mode::BT_MPPT},
    {4, Mode::BT_MPPT, false, true, std::nullopt, Mode::BT_BEC},
    {5, Mode::BT_BEC, false, std::nullopt, true, Mode::BT_BEC},
    {6, Mode::BT_BEC, false, std::nullopt, false, Mode::BT_MPPT},
}};

struct FsmCheckRow {
  Mode present;
  Flags flags;
  Mode next;
  int condition = 0;  // matching table row, 0 = completion
  bool matches = true;
};

/// Enumerates every (mode, flags) combination through next_mode and compares
/// against the table rows that cover it.
inline std::vector<FsmCheckRow> fsm_check() {
  std::vector<FsmCheckRow> rows;
  for (Mode m : kAllModes) {
    for (int bits = 0; bits < 8; ++bits) {
      Flags f{(bits & 4) != 0, (bits & 2) != 0, (bits & 1) != 0};
      FsmCheckRow r{m, f, next_mode(m, f)};
      for (const auto& row : kTransitionTable) {
        if (row.present != m) continue;
        if (row.f_grid && *row.f_grid != f.f_grid) continue;
        if (row.f_chg && *row.f_chg != f.f_chg) continue;
        if (row.f_G && *row.f_G != f.f_G) continue;
        r.condition = row.condition;
        r.matches = r.next == row.next;
      }
      rows.push_back(r);
    }
  }
  return rows;
}

struct Transition {
  double t = 0.0;
  Mode from = Mode::GT_MPPT;
  Mode to = Mode::GT_MPPT;
  Flags flags;
  double g_r = NAN;
  double i_B = 0.0;
};

inline void write_transitions_csv(std::ostream& os, const std::vector<Transition>& log) {
  os << "t,from_mode,to_mode,f_grid,f_chg,f_G,g_r,i_B\n";
  char buf[256];
  for (const auto& tr : log) {
    std::snprintf(buf, sizeof buf, "%.17g,%s,%s,%c,%c,%c,%.17g,%.17g\n", tr.t, std::string(to_string(tr.from)).c_str(),
                  std::string(to_string(tr.to)).c_str(), level(tr.flags.f_grid), level(tr.flags.f_chg),
                  level(tr.flags.f_G), tr.g_r, tr.i_B);
    os << buf;
  }
}

/// Stateful supervisor: flag tracking, blanking after BEC entry, mode
/// changes and chatter detection. Call tick() at the supervisory rate.
class Supervisor {
 public:
  Supervisor(Mode initial, const Thresholds& th, bool grid_present) : mode_(initial), th_(th) {
    th_.validate();
    state_.flags.f_grid = grid_present;
  }

  struct TickResult {
    std::optional<Transition> transition;
    bool chatter = false;
  };

  TickResult tick(double t, FlagMeasurement m, bool allow_transitions = true) {
    if (mode_ != Mode::BT_BEC || t < blank_until_) m.margin.valid = false;
    state_ = update_flags(m, th_, state_, t);
    TickResult out;
    if (!allow_transitions) return out;
    const Mode next = next_mode(mode_, state_.flags);
    if (next == mode_) return out;
    Transition tr{t, mode_, next, state_.flags, m.margin.valid ? m.margin.g_r : last_g_r_, m.i_B};
    enter(next, t);
    log_.push_back(tr);
    out.transition = tr;
    recent_.push_back(t);
    while (!recent_.empty() && recent_.front() < t - th_.chatter_window) recent_.erase(recent_.begin());
    out.chatter = static_cast<int>(recent_.size()) > th_.chatter_count;
    return out;
  }

  /// Forces a mode (used when the converter is first enabled).
  void enter(Mode next, double t) {
    mode_ = next;
    if (next == Mode::BT_BEC) {
      state_.flags.f_G = true;
      state_.low_margin_since = NAN;
      blank_until_ = t + th_.bec_blanking;
    }
    if (next == Mode::BT_MPPT) {
      state_.flags.f_chg = false;
      state_.charging_since = NAN;
      state_.discharging_since = NAN;
    }
  }

  void note_margin(const MarginEstimate& m) {
    if (m.valid) last_g_r_ = m.g_r;
  }

  Mode mode() const { return mode_; }
  const Flags& flags() const { return state_.flags; }
  const FlagState& flag_state() const { return state_; }
  const Thresholds& thresholds() const { return th_; }
  const std::vector<Transition>& log() const { return log_; }

 private:
  Mode mode_;
  Thresholds th_;
  FlagState state_;
  double blank_until_ = -1.0;
  double last_g_r_ = NAN;
  std::vector<Transition> log_;
  std::vector<double> recent_;
};

}  // namespace rgti
