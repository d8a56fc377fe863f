#pragma once

// Single-exponential PV I-V curve:
//   i(v, g) = g * i_sc * (1 - k1 * (exp(v / (k2 * v_oc)) - 1)),  k1 = 1 / (exp(1/k2) - 1)
// which passes through (0, i_sc) and (v_oc, 0) for every irradiance g.

#include <cmath>
#include <limits>

#include "rgti/errors.hpp"

namespace rgti {

struct PvParams {
  double v_oc = 560.0;
  double i_sc = 0.0;
  double v_mpp = 480.0;
  double i_mpp = 7.5;
  double curve_sharpness = 0.0;  // k2

  // Fits k2 and i_sc so that (v_mpp, i_mpp) is the exact power maximum at g = 1.
  static PvParams from_mpp(double v_oc, double v_mpp, double i_mpp);

  // Fits k2 so the curve passes through (v_mpp, i_mpp) with the given i_sc.
  static PvParams through_point(double v_oc, double i_sc, double v_mpp, double i_mpp);

  static PvParams reference() { return from_mpp(560.0, 480.0, 7.5); }

  double k1() const { return 1.0 / std::expm1(1.0 / curve_sharpness); }

  void validate() const {
    if (!(0.0 < v_mpp && v_mpp < v_oc)) throw ConfigError("PvParams: need 0 < v_mpp < v_oc");
    if (!(0.0 < i_mpp && i_mpp < i_sc)) throw ConfigError("PvParams: need 0 < i_mpp < i_sc");
    if (!(v_mpp * i_mpp <= v_oc * i_sc)) throw ConfigError("PvParams: v_mpp*i_mpp exceeds v_oc*i_sc");
    if (!(curve_sharpness > 0.0)) throw ConfigError("PvParams: curve_sharpness must be positive");
  }
};

namespace detail {

template <typename F>
double bisect(F&& f, double lo, double hi, int iters = 200) {
  double flo = f(lo);
  for (int k = 0; k < iters; ++k) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline PvParams PvParams::from_mpp(double v_oc, double v_mpp, double i_mpp) {
  const double x = v_mpp / v_oc;
  if (!(x > 0.5 && x < 1.0)) throw ConfigError("PvParams::from_mpp needs 0.5 < v_mpp/v_oc < 1");
  // With a = 1/k2 the power maximum at x satisfies a(1 - x) = ln(1 + a x).
  auto g = [x](double a) { return a * (1.0 - x) - std::log1p(a * x); };
  double hi = 1.0;
  while (g(hi) <= 0.0) hi *= 2.0;
  double lo = hi / 2.0;
  while (g(lo) > 0.0 && lo > 1e-9) lo /= 2.0;
  const double a = detail::bisect(g, lo, hi);
  PvParams p;
  p.v_oc = v_oc;
  p.v_mpp = v_mpp;
  p.i_mpp = i_mpp;
  p.curve_sharpness = 1.0 / a;
  p.i_sc = i_mpp * std::expm1(a) / (std::exp(a) - std::exp(a * x));
  p.validate();
  return p;
}

inline PvParams PvParams::through_point(double v_oc, double i_sc, double v_mpp, double i_mpp) {
  const double x = v_mpp / v_oc;
  const double target = i_mpp / i_sc;
  // Relative current at x as a function of a = 1/k2; decreasing in a.
  auto rel = [x, target](double a) { return (std::exp(a) - std::exp(a * x)) / std::expm1(a) - target; };
  const double a = detail::bisect(rel, 1e-6, 700.0);
  PvParams p;
  p.v_oc = v_oc;
  p.i_sc = i_sc;
  p.v_mpp = v_mpp;
  p.i_mpp = i_mpp;
  p.curve_sharpness = 1.0 / a;
  p.validate();
  return p;
}

inline void check_pv_domain(const PvParams& p, double v, double g) {
  if (!(v >= 0.0 && v <= 1.05 * p.v_oc))
    throw DomainError("pv_current: voltage " + std::to_string(v) + " V outside [0, 1.05*v_oc]");
  if (!(g >= 0.0)) throw DomainError("pv_current: irradiance must be non-negative");
}

inline double pv_current(const PvParams& p, double v, double g) {
  check_pv_domain(p, v, g);
  return g * p.i_sc * (1.0 - p.k1() * std::expm1(v / (p.curve_sharpness * p.v_oc)));
}

// di/dv (negative).
inline double pv_slope(const PvParams& p, double v, double g) {
  check_pv_domain(p, v, g);
  const double scale = p.curve_sharpness * p.v_oc;
  return -g * p.i_sc * p.k1() * std::exp(v / scale) / scale;
}

// R_1 = -1/(di/dv); infinite at zero irradiance.
inline double pv_dynamic_resistance(const PvParams& p, double v, double g) {
  const double s = pv_slope(p, v, g);
  if (s == 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / s;
}

struct PowerPoint {
  double v = 0.0;
  double i = 0.0;
  double p = 0.0;
};

// Brute-force sweep of v * i(v) over [0, v_oc] at the given resolution.
inline PowerPoint sweep_mpp(const PvParams& p, double g, double resolution = 0.1) {
  PowerPoint best;
  const auto n = static_cast<long>(std::floor(p.v_oc / resolution));
  for (long k = 0; k <= n; ++k) {
    const double v = static_cast<double>(k) * resolution;
    const double i = pv_current(p, v, g);
    if (v * i > best.p) best = {v, i, v * i};
  }
  return best;
}

}  // namespace rgti
