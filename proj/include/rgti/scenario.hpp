#pragma once

// Scenario files: initial conditions, a timed event script and the
// expectations a run must meet.
//
//   name = fig8b                # required
//   t_end = 40                  # s, required
//   irradiance = 0.5            # per unit
//   load = inf                  # ohm across the battery (inf = no load)
//   grid = off                  # on | off
//   rgti = on                   # converter enabled at t = 0
//   mode = BT_MPPT              # optional initial mode
//   decimation = 100            # trace rows every N steps
//   dt = 2e-05                  # s, optional step override
//   set.mppt = 0                # initial set-point values
//
//   at 4 load_step 17.45        # events, strictly increasing in time
//   at 8 enable_rgti
//   at 10 set v_ref 480
//
//   expect final_mode BT_BEC
//   expect transition BT_MPPT BT_BEC
//   expect transitions 1 1
//   expect mean i_B 38 40 -0.3 0.3
//   expect settle v_pv_avg 1 1.5 480 2.4 0.15
//   expect track i_L i_ref 1.005 1.04 0.7
//   expect continuity i_L BT_BEC BT_MPPT 0.2 18 20 0.05
//   expect tone v_pv 100 7 8 2 10
//   expect no_overcharge

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rgti/params.hpp"
#include "rgti/supervisor.hpp"

namespace rgti {

// Scenario-addressable set-points and their defaults.
inline const std::map<std::string, double>& set_point_defaults() {
  static const std::map<std::string, double> d{
      {"mppt", 1.0},            // 1: MPPT drives v_ref, 0: v_ref set-point is used
      {"v_ref", 480.0},         // V, manual PV voltage reference
      {"voltage_loop", 1.0},    // grid-tied H_1 on/off
      {"iq_ref", 0.0},          // A peak, manual grid current command when H_1 is off
      {"perturbation", 0.0},    // 0: only in BT_BEC, 1: in every battery-tied mode, -1: never
      {"supervisor", 1.0},      // 1: mode transitions allowed
      {"mppt_algorithm", 0.0},  // 0: incremental conductance, 1: perturb and observe
      {"mppt_step", 2.0},       // V
  };
  return d;
}

enum class Action { GridLoss, GridReturn, LoadStep, IrradianceStep, EnableRgti, DisableRgti, SetPoint };

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::GridLoss: return "grid_loss";
    case Action::GridReturn: return "grid_return";
    case Action::LoadStep: return "load_step";
    case Action::IrradianceStep: return "irradiance_step";
    case Action::EnableRgti: return "enable_rgti";
    case Action::DisableRgti: return "disable_rgti";
    case Action::SetPoint: return "set";
  }
  return "?";
}

struct Event {
  double t = 0.0;
  Action action = Action::GridLoss;
  double value = 0.0;      // ohm, per-unit irradiance or set-point value
  std::string name;        // set-point name

  bool operator==(const Event&) const = default;
};

enum class ExpectKind { FinalMode, Transition, Transitions, Stat, Settle, Track, Continuity, Tone, NoOvercharge };

struct Expectation {
  ExpectKind kind = ExpectKind::FinalMode;
  std::string stat;      // mean | min | max | absmax (Stat)
  std::string channel;
  std::string channel2;  // reference channel (Track)
  Mode mode_a = Mode::GT_MPPT;
  Mode mode_b = Mode::GT_MPPT;
  std::vector<double> args;
  int line = 0;  // not part of equality

  bool operator==(const Expectation& o) const {
    return kind == o.kind && stat == o.stat && channel == o.channel && channel2 == o.channel2 && mode_a == o.mode_a &&
           mode_b == o.mode_b && args == o.args;
  }
};

struct Scenario {
  std::string name;
  double t_end = 0.0;
  double irradiance = 1.0;
  double load = std::numeric_limits<double>::infinity();
  bool grid = true;
  bool rgti = true;
  std::optional<Mode> mode;
  int decimation = 25;
  std::optional<double> dt;
  std::map<std::string, double> set_points;  // initial overrides
  std::vector<Event> events;
  std::vector<Expectation> expectations;

  bool operator==(const Scenario&) const = default;
};

namespace detail {

struct ExpectSyntax {
  const char* word;
  ExpectKind kind;
  int numbers;  // numeric arguments after the named ones
};

inline std::string describe_expectation(const Expectation& e);

inline std::optional<bool> parse_on_off(std::string_view v) {
  if (v == "on" || v == "1" || v == "true") return true;
  if (v == "off" || v == "0" || v == "false") return false;
  return std::nullopt;
}

}  // namespace detail

inline Scenario parse_scenario(std::string_view text) {
  using text::parse_number;
  std::vector<ParseError::Item> errors;
  Scenario sc;
  std::vector<std::pair<int, std::vector<std::string>>> event_lines;
  std::vector<std::pair<int, std::vector<std::string>>> expect_lines;

  auto other = [&](int line, std::string_view l) {
    auto words = text::split_ws(l);
    std::vector<std::string> w(words.begin(), words.end());
    if (w[0] == "at") {
      event_lines.push_back({line, w});
      return true;
    }
    if (w[0] == "expect") {
      expect_lines.push_back({line, w});
      return true;
    }
    return false;
  };
  const auto kvs = text::key_values(text, errors, other);

  bool have_name = false;
  bool have_t_end = false;
  for (const auto& kv : kvs) {
    double x = 0.0;
    auto number = [&](double& out) {
      if (!parse_number(kv.value, out)) errors.push_back({kv.line, "'" + kv.value + "' is not a number"});
    };
    if (kv.key == "name") {
      sc.name = kv.value;
      have_name = true;
    } else if (kv.key == "t_end") {
      number(sc.t_end);
      have_t_end = true;
      if (!(sc.t_end > 0.0)) errors.push_back({kv.line, "t_end must be positive"});
    } else if (kv.key == "irradiance") {
      number(sc.irradiance);
      if (sc.irradiance < 0.0 || sc.irradiance > 1.2) errors.push_back({kv.line, "irradiance must be in [0, 1.2]"});
    } else if (kv.key == "load") {
      number(sc.load);
      if (!(sc.load > 0.0)) errors.push_back({kv.line, "load must be positive (inf for no load)"});
    } else if (kv.key == "grid" || kv.key == "rgti") {
      const auto v = detail::parse_on_off(kv.value);
      if (!v) errors.push_back({kv.line, kv.key + " must be on or off"});
      else (kv.key == "grid" ? sc.grid : sc.rgti) = *v;
    } else if (kv.key == "mode") {
      try {
        sc.mode = parse_mode(kv.value);
      } catch (const ConfigError& e) {
        errors.push_back({kv.line, e.what()});
      }
    } else if (kv.key == "decimation") {
      number(x);
      if (x < 1.0 || x != std::floor(x)) errors.push_back({kv.line, "decimation must be an integer >= 1"});
      else sc.decimation = static_cast<int>(x);
    } else if (kv.key == "dt") {
      number(x);
      if (!(x > 0.0)) errors.push_back({kv.line, "dt must be positive"});
      sc.dt = x;
    } else if (kv.key.starts_with("set.")) {
      const auto name = kv.key.substr(4);
      if (!set_point_defaults().contains(name)) errors.push_back({kv.line, "unknown set-point '" + name + "'"});
      else if (!parse_number(kv.value, x)) errors.push_back({kv.line, "'" + kv.value + "' is not a number"});
      else sc.set_points[name] = x;
    } else {
      errors.push_back({kv.line, "unknown key '" + kv.key + "'"});
    }
  }
  if (!have_name) errors.push_back({0, "missing required key 'name'"});
  if (!have_t_end) errors.push_back({0, "missing required key 't_end'"});

  double last_t = -std::numeric_limits<double>::infinity();
  for (const auto& [line, w] : event_lines) {
    Event ev;
    if (w.size() < 3 || !parse_number(w[1], ev.t)) {
      errors.push_back({line, "expected 'at <t> <action> [args]'"});
      continue;
    }
    const std::string& a = w[2];
    auto want_args = [&](std::size_t n) {
      if (w.size() != 3 + n) {
        errors.push_back({line, a + " takes " + std::to_string(n) + " argument(s)"});
        return false;
      }
      return true;
    };
    bool ok = true;
    if (a == "grid_loss") {
      ev.action = Action::GridLoss;
      ok = want_args(0);
    } else if (a == "grid_return") {
      ev.action = Action::GridReturn;
      ok = want_args(0);
    } else if (a == "enable_rgti") {
      ev.action = Action::EnableRgti;
      ok = want_args(0);
    } else if (a == "disable_rgti") {
      ev.action = Action::DisableRgti;
      ok = want_args(0);
    } else if (a == "load_step" || a == "irradiance_step") {
      ev.action = a == "load_step" ? Action::LoadStep : Action::IrradianceStep;
      ok = want_args(1);
      if (ok && !parse_number(w[3], ev.value)) {
        errors.push_back({line, "'" + w[3] + "' is not a number"});
        ok = false;
      }
      if (ok && ev.action == Action::LoadStep && !(ev.value > 0.0)) {
        errors.push_back({line, "load must be positive"});
        ok = false;
      }
      if (ok && ev.action == Action::IrradianceStep && (ev.value < 0.0 || ev.value > 1.2)) {
        errors.push_back({line, "irradiance must be in [0, 1.2]"});
        ok = false;
      }
    } else if (a == "set") {
      ev.action = Action::SetPoint;
      ok = want_args(2);
      if (ok && !set_point_defaults().contains(w[3])) {
        errors.push_back({line, "unknown set-point '" + w[3] + "'"});
        ok = false;
      }
      if (ok && !parse_number(w[4], ev.value)) {
        errors.push_back({line, "'" + w[4] + "' is not a number"});
        ok = false;
      }
      if (ok) ev.name = w[3];
    } else {
      errors.push_back({line, "unknown action '" + a + "'"});
      ok = false;
    }
    if (ev.t <= last_t) errors.push_back({line, "event time " + w[1] + " is not after the previous event"});
    last_t = std::max(last_t, ev.t);
    if (ok) sc.events.push_back(ev);
  }

  static const detail::ExpectSyntax syntax[] = {
      {"final_mode", ExpectKind::FinalMode, 0},  {"transition", ExpectKind::Transition, 0},
      {"transitions", ExpectKind::Transitions, 2}, {"settle", ExpectKind::Settle, 5},
      {"track", ExpectKind::Track, 3},          {"continuity", ExpectKind::Continuity, 4},
      {"tone", ExpectKind::Tone, 5},            {"no_overcharge", ExpectKind::NoOvercharge, 0},
      {"mean", ExpectKind::Stat, 4},            {"min", ExpectKind::Stat, 4},
      {"max", ExpectKind::Stat, 4},             {"absmax", ExpectKind::Stat, 4},
  };
  for (const auto& [line, w] : expect_lines) {
    if (w.size() < 2) {
      errors.push_back({line, "expected 'expect <kind> ...'"});
      continue;
    }
    const detail::ExpectSyntax* sx = nullptr;
    for (const auto& s : syntax)
      if (w[1] == s.word) sx = &s;
    if (!sx) {
      errors.push_back({line, "unknown expectation '" + w[1] + "'"});
      continue;
    }
    Expectation e;
    e.kind = sx->kind;
    e.line = line;
    std::size_t pos = 2;
    std::size_t named = 0;
    switch (e.kind) {
      case ExpectKind::FinalMode: named = 1; break;
      case ExpectKind::Transition: named = 2; break;
      case ExpectKind::Stat:
      case ExpectKind::Settle:
      case ExpectKind::Tone: named = 1; break;
      case ExpectKind::Track: named = 2; break;
      case ExpectKind::Continuity: named = 3; break;
      default: break;
    }
    if (w.size() != 2 + named + static_cast<std::size_t>(sx->numbers)) {
      errors.push_back({line, "'expect " + w[1] + "' takes " + std::to_string(named + sx->numbers) + " argument(s)"});
      continue;
    }
    bool ok = true;
    try {
      switch (e.kind) {
        case ExpectKind::FinalMode: e.mode_a = parse_mode(w[pos++]); break;
        case ExpectKind::Transition:
          e.mode_a = parse_mode(w[pos++]);
          e.mode_b = parse_mode(w[pos++]);
          break;
        case ExpectKind::Stat:
          e.stat = w[1];
          e.channel = w[pos++];
          break;
        case ExpectKind::Settle:
        case ExpectKind::Tone: e.channel = w[pos++]; break;
        case ExpectKind::Track:
          e.channel = w[pos++];
          e.channel2 = w[pos++];
          break;
        case ExpectKind::Continuity:
          e.channel = w[pos++];
          e.mode_a = parse_mode(w[pos++]);
          e.mode_b = parse_mode(w[pos++]);
          break;
        default: break;
      }
    } catch (const ConfigError& ex) {
      errors.push_back({line, ex.what()});
      ok = false;
    }
    for (; ok && pos < w.size(); ++pos) {
      double x = 0.0;
      if (!parse_number(w[pos], x)) {
        errors.push_back({line, "'" + w[pos] + "' is not a number"});
        ok = false;
      }
      e.args.push_back(x);
    }
    if (ok) sc.expectations.push_back(e);
  }

  if (!errors.empty()) {
    std::stable_sort(errors.begin(), errors.end(), [](const auto& a, const auto& b) { return a.line < b.line; });
    throw ParseError(std::move(errors));
  }
  return sc;
}

namespace detail {

inline std::string describe_expectation(const Expectation& e) {
  std::string s;
  auto add = [&](std::string_view w) {
    s += ' ';
    s += w;
  };
  switch (e.kind) {
    case ExpectKind::FinalMode: s = "final_mode"; add(to_string(e.mode_a)); break;
    case ExpectKind::Transition:
      s = "transition";
      add(to_string(e.mode_a));
      add(to_string(e.mode_b));
      break;
    case ExpectKind::Transitions: s = "transitions"; break;
    case ExpectKind::Stat: s = e.stat; add(e.channel); break;
    case ExpectKind::Settle: s = "settle"; add(e.channel); break;
    case ExpectKind::Track:
      s = "track";
      add(e.channel);
      add(e.channel2);
      break;
    case ExpectKind::Continuity:
      s = "continuity";
      add(e.channel);
      add(to_string(e.mode_a));
      add(to_string(e.mode_b));
      break;
    case ExpectKind::Tone: s = "tone"; add(e.channel); break;
    case ExpectKind::NoOvercharge: s = "no_overcharge"; break;
  }
  for (double a : e.args) add(text::format_number(a));
  return s;
}

}  // namespace detail

inline std::string describe(const Expectation& e) { return detail::describe_expectation(e); }

inline void serialize_scenario(std::ostream& os, const Scenario& sc) {
  using text::format_number;
  os << "name = " << sc.name << '\n';
  os << "t_end = " << format_number(sc.t_end) << '\n';
  os << "irradiance = " << format_number(sc.irradiance) << '\n';
  os << "load = " << format_number(sc.load) << '\n';
  os << "grid = " << (sc.grid ? "on" : "off") << '\n';
  os << "rgti = " << (sc.rgti ? "on" : "off") << '\n';
  if (sc.mode) os << "mode = " << to_string(*sc.mode) << '\n';
  os << "decimation = " << sc.decimation << '\n';
  if (sc.dt) os << "dt = " << format_number(*sc.dt) << '\n';
  for (const auto& [k, v] : sc.set_points) os << "set." << k << " = " << format_number(v) << '\n';
  if (!sc.events.empty()) os << '\n';
  for (const auto& ev : sc.events) {
    os << "at " << format_number(ev.t) << ' ' << to_string(ev.action);
    if (ev.action == Action::SetPoint) os << ' ' << ev.name << ' ' << format_number(ev.value);
    if (ev.action == Action::LoadStep || ev.action == Action::IrradianceStep) os << ' ' << format_number(ev.value);
    os << '\n';
  }
  if (!sc.expectations.empty()) os << '\n';
  for (const auto& e : sc.expectations) os << "expect " << describe(e) << '\n';
}

inline std::string serialize_scenario(const Scenario& sc) {
  std::ostringstream os;
  serialize_scenario(os, sc);
  return os.str();
}

}  // namespace rgti
