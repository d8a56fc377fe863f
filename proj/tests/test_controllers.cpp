#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "rgti/controllers.hpp"
#include "rgti/design.hpp"

namespace {

using rgti::PiParams;
using rgti::PrParams;
constexpr double kPi = std::numbers::pi;

TEST(Pi, TrapezoidalSteps) {
  const PiParams p{2.0, 10.0};
  auto r1 = rgti::pi_step(p, {}, 1.0, 0.1);
  // integrator = 0.5 * 10 * 0.1 * (1 + 0)
  EXPECT_DOUBLE_EQ(r1.value, 2.0 + 0.5);
  auto r2 = rgti::pi_step(p, r1.state, 1.0, 0.1);
  EXPECT_DOUBLE_EQ(r2.value, 2.0 + 0.5 + 1.0);
}

TEST(Pi, OutputClampedToLimits) {
  const PiParams p{2.0, 10.0, 0.0, 3.0};
  rgti::PiState st;
  double out = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto r = rgti::pi_step(p, st, 1.0, 0.1);
    st = r.state;
    out = r.value;
  }
  EXPECT_DOUBLE_EQ(out, 3.0);
  EXPECT_TRUE(st.saturated);
  EXPECT_LE(st.integrator, 3.0);
}

TEST(Pi, AntiWindupRecoversImmediately) {
  PiParams with{2.0, 10.0, 0.0, 3.0, true};
  PiParams without = with;
  without.anti_windup = false;
  rgti::PiState a, b;
  for (int k = 0; k < 100; ++k) {
    a = rgti::pi_step(with, a, 1.0, 0.1).state;
    b = rgti::pi_step(without, b, 1.0, 0.1).state;
  }
  // A small reversal leaves saturation at once only with anti-windup.
  const auto ra = rgti::pi_step(with, a, -0.1, 0.1);
  const auto rb = rgti::pi_step(without, b, -0.1, 0.1);
  EXPECT_LT(ra.value, 3.0);
  EXPECT_DOUBLE_EQ(rb.value, 3.0);
}

TEST(Pi, PreloadIsBumpless) {
  const PiParams p{0.5, 20.0, 0.0, 1.0};
  const double dt = 20e-6;
  const double e = 0.2;
  const auto st = rgti::pi_preload(p, 0.4, e);
  const auto r = rgti::pi_step(p, st, e, dt);
  EXPECT_NEAR(r.value, 0.4, p.k_i * dt * e + 1e-12);
}

TEST(Pi, TransferFunction) {
  const PiParams p{3.0, 40.0};
  const double f = 7.0;
  const std::complex<double> jw{0.0, 2.0 * kPi * f};
  const auto want = 3.0 + 40.0 / jw;
  EXPECT_NEAR(std::abs(rgti::pi_tf(p).at_hz(f) - want), 0.0, 1e-12);
  // The trapezoidal discretisation approaches it well below Nyquist.
  EXPECT_NEAR(std::abs(rgti::pi_discrete_response(p, 20e-6, f) - want) / std::abs(want), 0.0, 1e-6);
}

TEST(PiLag, LagStepResponse) {
  rgti::PiLagParams p;
  p.pi = {1.0, 0.0};  // output = filtered error
  p.w_n = 2.0 * kPi * 5.0;
  const double dt = 1e-4;
  rgti::PiLagState st;
  double out = 0.0;
  const double t_end = 0.05;
  const int n = static_cast<int>(std::round(t_end / dt));
  for (int k = 0; k < n; ++k) {
    const auto r = rgti::pi_lag_step(p, st, 1.0, dt);
    st = r.state;
    out = r.value;
  }
  EXPECT_NEAR(out, 1.0 - std::exp(-p.w_n * t_end), 2e-3);
}

TEST(PiLag, PreloadHoldsOutput) {
  rgti::PiLagParams p;
  p.pi = {0.2, 5.0, 50.0, 560.0};
  const auto st = rgti::pi_lag_preload(p, 480.0, 0.0);
  const auto r = rgti::pi_lag_step(p, st, 0.0, 20e-6);
  EXPECT_DOUBLE_EQ(r.value, 480.0);
}

TEST(Pr, PrewarpedResonanceMatchesContinuous) {
  PrParams p{10.0, 3000.0, 2.0 * kPi * 50.0, 5e-4};
  const double dt = 20e-6;
  const auto d = rgti::pr_discrete_response(p, dt, 50.0);
  const auto c = rgti::pr_tf(p).at_hz(50.0);
  EXPECT_NEAR(std::abs(d) / std::abs(c), 1.0, 1e-9);
  // k_r / (2 zeta w0) dominates at the resonance.
  EXPECT_NEAR(std::abs(c), 10.0 + 3000.0 / (2.0 * 5e-4 * p.w0), 1e-6);
}

TEST(Pr, TimeDomainMatchesFrequencyResponse) {
  // Heavier damping so the transient dies within the run.
  PrParams p{1.0, 500.0, 2.0 * kPi * 200.0, 0.05};
  const double dt = 20e-6;
  const double f = 170.0;
  rgti::PrState st;
  const int n = static_cast<int>(std::round(1.0 / dt));
  const int n_last = static_cast<int>(std::round(10.0 / f / dt));  // ten periods
  std::complex<double> acc{0.0, 0.0};
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    const auto r = rgti::pr_step(p, st, std::sin(2.0 * kPi * f * t), dt);
    st = r.state;
    if (k >= n - n_last) acc += r.value * std::polar(1.0, -2.0 * kPi * f * t);
  }
  const double amp = 2.0 * std::abs(acc) / n_last;
  EXPECT_NEAR(amp / std::abs(rgti::pr_discrete_response(p, dt, f)), 1.0, 2e-3);
}

TEST(Pr, RejectsCoarseStep) {
  PrParams p{1.0, 100.0};
  EXPECT_THROW(rgti::pr_step(p, {}, 1.0, 1e-3), rgti::ConfigError);
}

TEST(Tune, IntegratorPlantClosedForm) {
  const rgti::RationalTf plant({1.0}, {0.0, 1.0});
  const auto p = rgti::tune_pi_for_margin(plant, 10.0, 60.0);
  const double w = 2.0 * kPi * 10.0;
  // PI phase -30 deg at the crossover with unit loop gain.
  EXPECT_NEAR(p.k_p, w * std::cos(kPi / 6.0), 1e-9 * w);
  EXPECT_NEAR(p.k_i, p.k_p * w * std::tan(kPi / 6.0), 1e-9 * p.k_i);
  const auto m = rgti::margins(rgti::pi_tf(p) * plant);
  EXPECT_NEAR(m.gain_crossover_hz, 10.0, 1e-6);
  EXPECT_NEAR(m.phase_margin_deg, 60.0, 1e-6);
}

TEST(Tune, InfeasibleMarginReportsRange) {
  const rgti::RationalTf plant({1.0}, {0.0, 1.0});
  try {
    rgti::tune_pi_for_margin(plant, 10.0, 95.0);
    FAIL() << "expected InfeasibleDesign";
  } catch (const rgti::InfeasibleDesign& e) {
    EXPECT_NEAR(e.pm_min(), 0.0, 1e-9);
    EXPECT_NEAR(e.pm_max(), 90.0, 1e-9);
  }
}

// ------------------------------------------------------------- design

const rgti::SystemParams kSys = rgti::SystemParams::reference();

TEST(Design, VoltageLoopTargets) {
  const auto d = rgti::design_controls(kSys);
  const auto m = rgti::margins(rgti::voltage_loop(kSys, d.voltage_op, d.h_v));
  EXPECT_NEAR(m.gain_crossover_hz, 55.0, 0.55);
  EXPECT_NEAR(m.phase_margin_deg, 35.0, 0.5);
  EXPECT_GT(d.h_v.k_p, 0.0);
}

TEST(Design, CurrentLoopTargets) {
  const auto d = rgti::design_controls(kSys);
  const auto lag = rgti::RationalTf::first_order_lag(d.h_i.w_n);
  const auto loop = rgti::pi_tf(d.h_i.pi) * lag * rgti::current_loop_plant(kSys, d.current_op, d.h_v);
  const auto m = rgti::margins(loop);
  EXPECT_NEAR(m.gain_crossover_hz, 0.5, 0.005);
  EXPECT_NEAR(m.phase_margin_deg, 80.0, 0.5);
}

TEST(Design, CurrentLoopSixtyDegreesIsInfeasible) {
  rgti::DesignTargets t;
  t.current_pm = 60.0;
  try {
    rgti::design_controls(kSys, t);
    FAIL() << "expected InfeasibleDesign";
  } catch (const rgti::InfeasibleDesign& e) {
    // The plant plus lag sits near -11 deg at 0.5 Hz, so a PI reaches
    // 79..169 deg only.
    EXPECT_NEAR(e.pm_min(), 78.7, 0.3);
    EXPECT_NEAR(e.pm_max(), 168.7, 0.3);
  }
}

TEST(Design, GridVoltageLoopTargets) {
  const auto d = rgti::design_controls(kSys);
  const auto plant = rgti::grid_voltage_plant(kSys, kSys.pv.v_mpp, 1.0, d.targets.bus_filter / 2.0);
  const auto m = rgti::margins(rgti::pi_tf(d.h_1) * plant);
  EXPECT_NEAR(m.gain_crossover_hz, d.targets.grid_voltage_bw, 0.01 * d.targets.grid_voltage_bw);
  EXPECT_NEAR(m.phase_margin_deg, d.targets.grid_voltage_pm, 0.5);
  EXPECT_DOUBLE_EQ(d.h_1.out_max, d.iq_max);
}

TEST(Design, GridCurrentLoop) {
  const auto d = rgti::design_controls(kSys);
  // Proportional gain sets the crossover of k_p / (s L).
  EXPECT_NEAR(d.h_2.k_p, 2.0 * kPi * 800.0 * kSys.converter.l_f, 1e-12);
  const auto at_w0 = rgti::pr_discrete_response(d.h_2, 20e-6, kSys.grid.frequency);
  EXPECT_GE(20.0 * std::log10(std::abs(at_w0)), 60.0);
  const auto m = rgti::margins(rgti::grid_current_loop(kSys, d.h_2));
  EXPECT_NEAR(m.gain_crossover_hz, 800.0, 20.0);
  EXPECT_GT(m.phase_margin_deg, 60.0);
}

TEST(Design, PllGains) {
  const auto d = rgti::design_controls(kSys);
  const double wn = 2.0 * kPi * 20.0;
  EXPECT_NEAR(d.pll.k_i, wn * wn, 1e-9);
  EXPECT_NEAR(d.pll.k_p, std::numbers::sqrt2 * wn, 1e-9);
}

}  // namespace
