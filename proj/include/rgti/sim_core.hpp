#pragma once

// Fixed-step time marching, perturbation injection, single-bin tone
// extraction and the sampled trace container.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rgti/errors.hpp"

namespace rgti {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct SimConfig {
  double dt = 20e-6;
  double t_end = 1.0;
  int sample_decimation = 25;
  double grid_frequency = 50.0;

  // Fastest closed-loop bandwidth that has to be resolved.
  static constexpr double kMaxBandwidth = 800.0;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(t_end > dt)) throw ConfigError("t_end must exceed dt");
    if (dt > 1.0 / (20.0 * kMaxBandwidth) * (1.0 + 1e-12))
      throw ConfigError("dt must not exceed 62.5 us");
    if (sample_decimation < 1) throw ConfigError("sample_decimation must be >= 1");
    if (grid_frequency != 50.0 && grid_frequency != 60.0)
      throw ConfigError("grid_frequency must be 50 or 60 Hz");
  }
};

template <std::size_t N>
using StateVec = std::array<double, N>;

namespace detail {

template <std::size_t N>
void check_finite(const StateVec<N>& d, double t, std::span<const std::string_view> names) {
  for (std::size_t k = 0; k < N; ++k) {
    if (!std::isfinite(d[k])) {
      std::string name = k < names.size() ? std::string(names[k]) : "x" + std::to_string(k);
      throw SimulationDiverged(t, name);
    }
  }
}

template <std::size_t N>
StateVec<N> axpy(const StateVec<N>& x, double a, const StateVec<N>& y) {
  StateVec<N> r;
  for (std::size_t k = 0; k < N; ++k) r[k] = x[k] + a * y[k];
  return r;
}

}  // namespace detail

/// Advances `x` by one classical fourth-order Runge-Kutta step.
///
/// `derivative(t, x)` must return a StateVec<N>. Any non-finite stage
/// derivative raises SimulationDiverged naming the channel (from `names` when
/// given, otherwise "x<k>").
template <std::size_t N, typename F>
StateVec<N> integrate_step(const StateVec<N>& x, F&& derivative, double t, double dt,
                           std::span<const std::string_view> names = {}) {
  if (!(dt > 0.0)) throw ConfigError("integrate_step: dt must be positive");
  const StateVec<N> k1 = derivative(t, x);
  detail::check_finite(k1, t, names);
  const StateVec<N> k2 = derivative(t + 0.5 * dt, detail::axpy(x, 0.5 * dt, k1));
  detail::check_finite(k2, t, names);
  const StateVec<N> k3 = derivative(t + 0.5 * dt, detail::axpy(x, 0.5 * dt, k2));
  detail::check_finite(k3, t, names);
  const StateVec<N> k4 = derivative(t + dt, detail::axpy(x, dt, k3));
  detail::check_finite(k4, t, names);
  StateVec<N> out;
  for (std::size_t k = 0; k < N; ++k)
    out[k] = x[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
  return out;
}

struct PerturbationSource {
  double amplitude = 0.0;  // volts
  double frequency = 10.0; // Hz
  bool enabled = false;

  void validate(double nominal_v_pv) const {
    if (!(frequency > 0.0)) throw ConfigError("perturbation frequency must be positive");
    if (enabled && !(amplitude > 0.0)) throw ConfigError("enabled perturbation needs amplitude > 0");
    if (amplitude > 0.02 * nominal_v_pv * (1.0 + 1e-12))
      throw ConfigError("perturbation amplitude exceeds 2% of nominal PV voltage");
  }
};

inline double inject_perturbation(const PerturbationSource& src, double t) {
  if (!src.enabled) return 0.0;
  return src.amplitude * std::sin(kTwoPi * src.frequency * t);
}

// Amplitude/phase of x(t) = amplitude * sin(2*pi*f*t + phase).
struct Tone {
  double amplitude = 0.0;
  double phase = 0.0;

  std::complex<double> phasor() const { return std::polar(amplitude, phase); }
};

/// Single-bin Fourier projection over the trailing `window` seconds of
/// `samples` (uniform spacing `sample_period`, first sample at `t_first`).
///
/// The window must hold an integer number (>= 2) of periods and the sample
/// rate must be at least 10x the tone frequency. Exact for a pure tone plus DC.
inline Tone extract_tone(std::span<const double> samples, double sample_period, double frequency,
                         double window, double t_first = 0.0) {
  if (!(frequency > 0.0) || !(sample_period > 0.0) || !(window > 0.0))
    throw ConfigError("extract_tone: frequency, sample period and window must be positive");
  const double periods = window * frequency;
  const double n_periods = std::round(periods);
  if (std::abs(periods - n_periods) > 1e-6 * std::max(1.0, periods))
    throw ConfigError("extract_tone: window is not an integer number of periods");
  if (n_periods < 2.0) throw ConfigError("extract_tone: window must span at least 2 periods");
  if (1.0 / sample_period < 10.0 * frequency * (1.0 - 1e-9))
    throw ConfigError("extract_tone: sample rate below 10x tone frequency");
  const double n_real = window / sample_period;
  const auto n = static_cast<std::size_t>(std::llround(n_real));
  if (std::abs(n_real - static_cast<double>(n)) > 1e-6 * n_real)
    throw ConfigError("extract_tone: window is not an integer number of samples");
  if (n > samples.size()) throw ConfigError("extract_tone: not enough samples for the window");

  const std::size_t first = samples.size() - n;
  const double w = kTwoPi * frequency;
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t_first + static_cast<double>(first + k) * sample_period;
    acc += samples[first + k] * std::polar(1.0, -w * t);
  }
  // j * (2/N) * sum x e^{-jwt} = amplitude * e^{j phase}
  const std::complex<double> ph = std::complex<double>(0.0, 2.0 / static_cast<double>(n)) * acc;
  return {std::abs(ph), std::arg(ph)};
}

/// Decimated multi-channel time series.
class Trace {
 public:
  Trace() = default;
  explicit Trace(std::vector<std::string> channels) : channels_(std::move(channels)) {}

  const std::vector<std::string>& channels() const { return channels_; }
  std::size_t size() const { return time_.size(); }
  bool empty() const { return time_.empty(); }

  void append(double t, std::span<const double> values) {
    if (values.size() != channels_.size()) throw ConfigError("Trace: channel count mismatch");
    if (!time_.empty() && !(t > time_.back())) throw ConfigError("Trace: time must increase");
    time_.push_back(t);
    data_.insert(data_.end(), values.begin(), values.end());
  }

  const std::vector<double>& time() const { return time_; }

  std::size_t index_of(std::string_view name) const {
    auto it = std::find(channels_.begin(), channels_.end(), name);
    if (it == channels_.end()) throw ConfigError("Trace: unknown channel '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - channels_.begin());
  }

  bool has_channel(std::string_view name) const {
    return std::find(channels_.begin(), channels_.end(), name) != channels_.end();
  }

  double at(std::size_t row, std::size_t channel) const { return data_[row * channels_.size() + channel]; }

  std::vector<double> channel(std::string_view name) const {
    const std::size_t c = index_of(name);
    std::vector<double> out(time_.size());
    for (std::size_t r = 0; r < time_.size(); ++r) out[r] = at(r, c);
    return out;
  }

  // Sample spacing; assumes uniform decimation.
  double sample_period() const { return time_.size() > 1 ? time_[1] - time_[0] : 0.0; }

  // Rows with t in [t0, t1].
  std::pair<std::size_t, std::size_t> rows_between(double t0, double t1) const {
    auto lo = std::lower_bound(time_.begin(), time_.end(), t0 - 1e-12);
    auto hi = std::upper_bound(time_.begin(), time_.end(), t1 + 1e-12);
    return {static_cast<std::size_t>(lo - time_.begin()), static_cast<std::size_t>(hi - time_.begin())};
  }

  void write_csv(std::ostream& os) const {
    os << "t";
    for (const auto& c : channels_) os << ',' << c;
    os << '\n';
    char buf[40];
    for (std::size_t r = 0; r < time_.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", time_[r]);
      os << buf;
      for (std::size_t c = 0; c < channels_.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", at(r, c));
        os << ',' << buf;
      }
      os << '\n';
    }
  }

 private:
  std::vector<std::string> channels_;
  std::vector<double> time_;
  std::vector<double> data_;
};

}  // namespace rgti
