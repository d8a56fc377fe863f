#pragma once

// Plain-text parameter files: one `key = value` per line, `#` starts a
// comment. Units are SI throughout (V, A, ohm, F, H, Hz, s, W).

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rgti/design.hpp"
#include "rgti/errors.hpp"
#include "rgti/plant.hpp"

namespace rgti {

/// Error listing every problem found in a text input, each with its line.
class ParseError : public ConfigError {
 public:
  struct Item {
    int line = 0;
    std::string message;
  };

  explicit ParseError(std::vector<Item> items) : ConfigError(format(items)), items_(std::move(items)) {}

  const std::vector<Item>& items() const { return items_; }

 private:
  static std::string format(const std::vector<Item>& items) {
    std::string s;
    for (const auto& it : items) {
      if (!s.empty()) s += '\n';
      s += "line " + std::to_string(it.line) + ": " + it.message;
    }
    return s;
  }
  std::vector<Item> items_;
};

namespace text {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string_view strip_comment(std::string_view s) {
  const auto h = s.find('#');
  return h == std::string_view::npos ? s : s.substr(0, h);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

/// Parses a finite real, or inf/+inf.
inline bool parse_number(std::string_view s, double& out) {
  if (s == "inf" || s == "+inf") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  const auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && !s.empty() && !std::isnan(out);
}

/// Shortest text that reads back to the same double.
inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct KeyValue {
  int line = 0;
  std::string key;
  std::string value;
};

/// Splits `key = value` lines; blank/comment lines are skipped, malformed
/// lines are reported through `errors`. Lines rejected by `accept_other`
/// (if given) must be key/value lines.
inline std::vector<KeyValue> key_values(std::string_view text, std::vector<ParseError::Item>& errors,
                                        const std::function<bool(int, std::string_view)>& accept_other = {}) {
  std::vector<KeyValue> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      if (accept_other && accept_other(line_no, line)) continue;
      errors.push_back({line_no, "expected 'key = value', got '" + std::string(line) + "'"});
      continue;
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      errors.push_back({line_no, "empty key or value"});
      continue;
    }
    out.push_back({line_no, std::string(key), std::string(value)});
  }
  return out;
}

}  // namespace text

// ------------------------------------------------------------ system params

namespace detail {

inline std::vector<std::pair<std::string, double*>> system_fields(SystemParams& p) {
  return {
      {"pv.v_oc", &p.pv.v_oc},
      {"pv.v_mpp", &p.pv.v_mpp},
      {"pv.i_mpp", &p.pv.i_mpp},
      {"battery.v_oc", &p.battery.v_oc},
      {"battery.r_b", &p.battery.r_b},
      {"battery.ampacity_ah", &p.battery.ampacity_ah},
      {"battery.rated_current", &p.battery.rated_current},
      {"converter.c_in", &p.converter.c_in},
      {"converter.r_esr", &p.converter.r_esr},
      {"converter.l_f", &p.converter.l_f},
      {"converter.r_series", &p.converter.r_series},
      {"converter.c_f", &p.converter.c_f},
      {"grid.v_rms", &p.grid.v_rms},
      {"grid.frequency", &p.grid.frequency},
      {"rated_power", &p.rated_power},
  };
}

inline const std::map<std::string, std::string>& system_units() {
  static const std::map<std::string, std::string> units{
      {"pv.v_oc", "V, open-circuit voltage at full sun"},
      {"pv.v_mpp", "V, maximum-power-point voltage at full sun"},
      {"pv.i_mpp", "A, maximum-power-point current at full sun"},
      {"battery.v_oc", "V, battery open-circuit voltage"},
      {"battery.r_b", "ohm, battery internal resistance"},
      {"battery.ampacity_ah", "Ah, battery capacity"},
      {"battery.rated_current", "A, rated (1C) battery current"},
      {"converter.c_in", "F, DC-bus capacitor"},
      {"converter.r_esr", "ohm, DC-bus capacitor ESR"},
      {"converter.l_f", "H, total filter inductance"},
      {"converter.r_series", "ohm, inductor series resistance"},
      {"converter.c_f", "F, output filter capacitor (not modelled dynamically)"},
      {"grid.v_rms", "V, grid rms voltage"},
      {"grid.frequency", "Hz, grid frequency (50 or 60)"},
      {"rated_power", "W, PV/converter rating"},
  };
  return units;
}

}  // namespace detail

/// Reads a system parameter file on top of the reference-system defaults. The PV
/// curve is refitted so (pv.v_mpp, pv.i_mpp) is the exact power maximum.
inline SystemParams parse_system_params(std::string_view text) {
  std::vector<ParseError::Item> errors;
  const auto kvs = text::key_values(text, errors);
  SystemParams p = SystemParams::reference();
  auto fields = detail::system_fields(p);
  for (const auto& kv : kvs) {
    double* target = nullptr;
    for (auto& [k, ptr] : fields)
      if (k == kv.key) target = ptr;
    if (!target) {
      errors.push_back({kv.line, "unknown key '" + kv.key + "'"});
      continue;
    }
    if (!text::parse_number(kv.value, *target)) errors.push_back({kv.line, "'" + kv.value + "' is not a number"});
  }
  if (!errors.empty()) throw ParseError(std::move(errors));
  try {
    p.pv = PvParams::from_mpp(p.pv.v_oc, p.pv.v_mpp, p.pv.i_mpp);
    p.validate();
  } catch (const ConfigError& e) {
    throw ParseError({{0, e.what()}});
  }
  return p;
}

inline void write_system_params(std::ostream& os, const SystemParams& in) {
  SystemParams p = in;
  os << "# System parameters (SI units). The PV curve is fitted through\n"
        "# (0, i_sc), (v_mpp, i_mpp), (v_oc, 0) with the MPP exact.\n";
  for (const auto& [k, ptr] : detail::system_fields(p))
    os << k << " = " << text::format_number(*ptr) << "    # " << detail::system_units().at(k) << '\n';
}

// ------------------------------------------------------------ controllers

namespace detail {

inline std::vector<std::pair<std::string, double*>> control_fields(ControlDesign& d) {
  return {
      {"h_v.k_p", &d.h_v.k_p},           {"h_v.k_i", &d.h_v.k_i},
      {"h_i.k_p", &d.h_i.pi.k_p},        {"h_i.k_i", &d.h_i.pi.k_i},
      {"h_i.w_n", &d.h_i.w_n},           {"h_1.k_p", &d.h_1.k_p},
      {"h_1.k_i", &d.h_1.k_i},           {"h_2.k_p", &d.h_2.k_p},
      {"h_2.k_r", &d.h_2.k_r},           {"h_2.w0", &d.h_2.w0},
      {"h_2.damping", &d.h_2.damping},   {"pll.k_p", &d.pll.k_p},
      {"pll.k_i", &d.pll.k_i},           {"pll.sogi_gain", &d.pll.sogi_gain},
      {"iq_max", &d.iq_max},
  };
}

}  // namespace detail

inline void write_controls(std::ostream& os, const ControlDesign& in) {
  ControlDesign d = in;
  os << "# Controller gains. h_v: duty per volt; h_i: volts per amp; h_1: amps per volt;\n"
        "# h_2: volts per amp; w_n, w0: rad/s; pll gains: rad/s per unit error.\n";
  for (const auto& [k, ptr] : detail::control_fields(d)) os << k << " = " << text::format_number(*ptr) << '\n';
}

/// Overrides gains of `base` from a controller file.
inline ControlDesign parse_controls(std::string_view text, ControlDesign base) {
  std::vector<ParseError::Item> errors;
  const auto kvs = text::key_values(text, errors);
  auto fields = detail::control_fields(base);
  for (const auto& kv : kvs) {
    double* target = nullptr;
    for (auto& [k, ptr] : fields)
      if (k == kv.key) target = ptr;
    if (!target) {
      errors.push_back({kv.line, "unknown key '" + kv.key + "'"});
      continue;
    }
    if (!text::parse_number(kv.value, *target)) errors.push_back({kv.line, "'" + kv.value + "' is not a number"});
  }
  if (!errors.empty()) throw ParseError(std::move(errors));
  base.h_1.out_max = base.iq_max;
  return base;
}

}  // namespace rgti
