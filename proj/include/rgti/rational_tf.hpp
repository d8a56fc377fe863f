#pragma once

// Rational transfer functions in the Laplace variable, Bode evaluation and
// stability margins.

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "rgti/errors.hpp"

namespace rgti {

// Polynomial coefficients in ascending powers of s.
using Poly = std::vector<double>;

inline Poly poly_mul(const Poly& a, const Poly& b) {
  if (a.empty() || b.empty()) return {};
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

inline Poly poly_add(const Poly& a, const Poly& b) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += b[i];
  return r;
}

inline Poly poly_scale(const Poly& a, double k) {
  Poly r = a;
  for (auto& c : r) c *= k;
  return r;
}

inline std::complex<double> poly_eval(const Poly& p, std::complex<double> s) {
  std::complex<double> acc{0.0, 0.0};
  for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * s + *it;
  return acc;
}

// Drops trailing (highest-power) zero coefficients.
inline Poly poly_trim(Poly p) {
  while (p.size() > 1 && p.back() == 0.0) p.pop_back();
  return p;
}

class RationalTf {
 public:
  RationalTf() : num_{0.0}, den_{1.0} {}

  RationalTf(Poly num, Poly den) : num_(poly_trim(std::move(num))), den_(poly_trim(std::move(den))) {
    if (num_.empty()) num_ = {0.0};
    if (den_.empty() || den_.back() == 0.0)
      throw ConfigError("RationalTf: denominator must have a nonzero leading coefficient");
  }

  static RationalTf gain(double k) { return {{k}, {1.0}}; }
  // 1 / (1 + s/w)
  static RationalTf first_order_lag(double w) { return {{1.0}, {1.0, 1.0 / w}}; }
  // k / s
  static RationalTf integrator(double k = 1.0) { return {{k}, {0.0, 1.0}}; }

  const Poly& num() const { return num_; }
  const Poly& den() const { return den_; }

  std::size_t num_degree() const { return num_.size() - 1; }
  std::size_t den_degree() const { return den_.size() - 1; }
  bool proper() const { return num_degree() <= den_degree(); }

  // Infinite when there is a pole at the origin.
  double dc_gain() const {
    if (den_[0] == 0.0) return std::numeric_limits<double>::infinity();
    return num_[0] / den_[0];
  }

  std::complex<double> operator()(std::complex<double> s) const {
    const auto d = poly_eval(den_, s);
    if (std::abs(d) == 0.0) return {std::numeric_limits<double>::infinity(), 0.0};
    return poly_eval(num_, s) / d;
  }

  std::complex<double> at_hz(double f) const { return (*this)({0.0, 2.0 * std::numbers::pi * f}); }

  friend RationalTf operator*(const RationalTf& a, const RationalTf& b) {
    return {poly_mul(a.num_, b.num_), poly_mul(a.den_, b.den_)};
  }
  friend RationalTf operator+(const RationalTf& a, const RationalTf& b) {
    return {poly_add(poly_mul(a.num_, b.den_), poly_mul(b.num_, a.den_)), poly_mul(a.den_, b.den_)};
  }
  friend RationalTf operator*(double k, const RationalTf& a) { return {poly_scale(a.num_, k), a.den_}; }
  RationalTf operator-() const { return {poly_scale(num_, -1.0), den_}; }

  // L / (1 + L)
  RationalTf unity_feedback() const { return {num_, poly_add(den_, num_)}; }

 private:
  Poly num_;
  Poly den_;
};

struct FrequencyPoint {
  double magnitude_db = 0.0;
  double phase_deg = 0.0;
};

inline double wrap_degrees(double deg) {
  deg = std::fmod(deg, 360.0);
  if (deg > 180.0) deg -= 360.0;
  if (deg <= -180.0) deg += 360.0;
  return deg;
}

/// Evaluates `tf` at s = j*2*pi*f. A pole on the axis yields +inf dB.
inline FrequencyPoint freq_response(const RationalTf& tf, double f) {
  if (!(f > 0.0)) throw ConfigError("freq_response: frequency must be positive");
  const double w = 2.0 * std::numbers::pi * f;
  const auto d = poly_eval(tf.den(), {0.0, w});
  const auto n = poly_eval(tf.num(), {0.0, w});
  if (std::abs(d) == 0.0) return {std::numeric_limits<double>::infinity(), 0.0};
  const auto h = n / d;
  return {20.0 * std::log10(std::abs(h)), std::arg(h) * 180.0 / std::numbers::pi};
}

struct Margins {
  double gain_crossover_hz = 0.0;
  double phase_margin_deg = 0.0;
  // +inf when the phase never reaches -180 deg above the gain crossover.
  double gain_margin_db = std::numeric_limits<double>::infinity();
  double phase_crossover_hz = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

template <typename F>
double bisect_log(F&& g, double lo, double hi, int iters = 80) {
  double glo = g(lo);
  if (glo == 0.0) return lo;
  for (int k = 0; k < iters; ++k) {
    const double mid = std::sqrt(lo * hi);
    const double gm = g(mid);
    if (gm == 0.0) return mid;
    if ((gm > 0.0) == (glo > 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

}  // namespace detail

/// Gain crossover, phase margin and gain margin of an open loop.
///
/// The crossover is the highest frequency in [1e-2, 1e5] Hz where |L| passes
/// through unity, refined by bisection. The gain margin is read at the first
/// -180 deg phase crossing above that crossover.
inline Margins margins(const RationalTf& open_loop) {
  constexpr double f_lo = 1e-2;
  constexpr int per_decade = 400;
  auto log_mag = [&](double f) { return std::log(std::abs(open_loop.at_hz(f))); };

  const int n = 7 * per_decade;
  std::optional<std::pair<double, double>> bracket;
  double f_prev = f_lo;
  double m_prev = log_mag(f_prev);
  for (int k = 1; k <= n; ++k) {
    const double f = f_lo * std::pow(10.0, static_cast<double>(k) / per_decade);
    const double m = log_mag(f);
    if (m_prev >= 0.0 && m < 0.0) bracket = {f_prev, f};
    f_prev = f;
    m_prev = m;
  }
  if (!bracket) throw NoCrossover("margins: no unity-gain crossover in [1e-2, 1e5] Hz");

  Margins out;
  out.gain_crossover_hz = detail::bisect_log(log_mag, bracket->first, bracket->second);
  const auto lc = open_loop.at_hz(out.gain_crossover_hz);
  out.phase_margin_deg = wrap_degrees(180.0 + std::arg(lc) * 180.0 / std::numbers::pi);

  // Phase crossover: Im(L) changes sign while Re(L) < 0.
  auto imag_part = [&](double f) { return open_loop.at_hz(f).imag(); };
  const int start = static_cast<int>(std::floor(std::log10(out.gain_crossover_hz / f_lo) * per_decade));
  f_prev = out.gain_crossover_hz;
  double i_prev = imag_part(f_prev);
  for (int k = start + 1; k <= n; ++k) {
    const double f = f_lo * std::pow(10.0, static_cast<double>(k) / per_decade);
    if (f <= f_prev) continue;
    const double im = imag_part(f);
    if ((im > 0.0) != (i_prev > 0.0)) {
      const double fx = detail::bisect_log(imag_part, f_prev, f);
      const auto l = open_loop.at_hz(fx);
      if (l.real() < 0.0) {
        out.phase_crossover_hz = fx;
        out.gain_margin_db = -20.0 * std::log10(std::abs(l));
        break;
      }
    }
    f_prev = f;
    i_prev = im;
  }
  return out;
}

}  // namespace rgti
