#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "rgti/mode_control.hpp"

namespace {

constexpr double kPi = std::numbers::pi;
const rgti::SystemParams kSys = rgti::SystemParams::reference();
const rgti::ControlDesign kDesign = rgti::design_controls(kSys);

// Static PV: the voltage follows the reference exactly.
double run_mppt(rgti::MpptParams p, double g, int steps, double start, std::vector<double>* tail = nullptr) {
  auto st = rgti::mppt_start(p, start);
  for (int k = 0; k < steps; ++k) {
    const double v = st.v_ref;
    st = rgti::mppt_step(p, st, v, rgti::pv_current(kSys.pv, v, g));
    if (tail && k >= steps - 20) tail->push_back(st.v_ref);
  }
  return st.v_ref;
}

TEST(Mppt, IncrementalConductanceConvergesFromOpenCircuit) {
  const auto p = rgti::MpptParams::for_pv(kSys.pv);
  std::vector<double> tail;
  run_mppt(p, 1.0, 200, kSys.pv.v_oc, &tail);
  const double oracle = rgti::sweep_mpp(kSys.pv, 1.0, 0.01).v;
  for (double v : tail) EXPECT_NEAR(v, oracle, 2.0 * p.step);
}

TEST(Mppt, PerturbObserveConvergesFromOpenCircuit) {
  auto p = rgti::MpptParams::for_pv(kSys.pv);
  p.algorithm = rgti::MpptAlgorithm::PerturbObserve;
  std::vector<double> tail;
  run_mppt(p, 1.0, 200, kSys.pv.v_oc, &tail);
  for (double v : tail) EXPECT_NEAR(v, kSys.pv.v_mpp, 2.0 * p.step);
}

TEST(Mppt, FollowsIrradianceChange) {
  const auto p = rgti::MpptParams::for_pv(kSys.pv);
  const double oracle = rgti::sweep_mpp(kSys.pv, 0.3, 0.01).v;
  std::vector<double> tail;
  run_mppt(p, 0.3, 200, kSys.pv.v_mpp, &tail);
  for (double v : tail) EXPECT_NEAR(v, oracle, 2.0 * p.step);
}

TEST(Mppt, ClampsToRange) {
  const auto p = rgti::MpptParams::for_pv(kSys.pv);
  EXPECT_DOUBLE_EQ(rgti::mppt_start(p, 1000.0).v_ref, kSys.pv.v_oc);
  EXPECT_DOUBLE_EQ(rgti::mppt_start(p, 0.0).v_ref, 0.1 * kSys.pv.v_oc);
  auto st = rgti::mppt_start(p, p.v_min);
  st.direction = -1.0;
  st = rgti::mppt_step(p, st, p.v_min, 7.9);
  EXPECT_DOUBLE_EQ(st.v_ref, p.v_min);
}

TEST(Mppt, NoVoltageChangeFollowsCurrent) {
  const auto p = rgti::MpptParams::for_pv(kSys.pv);
  auto st = rgti::mppt_start(p, 500.0);
  st.has_prev = true;
  st.prev_v = 500.0;
  st.prev_i = 6.0;
  st.direction = -1.0;
  // Same voltage, more current (irradiance rose): move up.
  const auto up = rgti::mppt_ic_step(p, st, 500.0, 6.5);
  EXPECT_DOUBLE_EQ(up.v_ref, 502.0);
  // Same voltage, same current: perturb again in the last direction.
  const auto again = rgti::mppt_ic_step(p, st, 500.0, 6.0);
  EXPECT_DOUBLE_EQ(again.v_ref, 498.0);
}

TEST(Mppt, HoldsInsideDeadband) {
  const auto p = rgti::MpptParams::for_pv(kSys.pv);
  auto st = rgti::mppt_start(p, 480.0);
  st.has_prev = true;
  st.prev_v = 479.0;
  st.prev_i = 7.5 + 7.5 / 480.0;  // di/dv = -i/v exactly
  const auto held = rgti::mppt_ic_step(p, st, 480.0, 7.5);
  EXPECT_DOUBLE_EQ(held.v_ref, 480.0);
}

// ---------------------------------------------------------------- PLL

struct PllRun {
  rgti::PllState st;
  double max_late_error = 0.0;
  double first_lock = -1.0;
};

PllRun run_pll(rgti::PllState st, double amp, double f, double phase, double t_end, double t_check) {
  const double dt = 20e-6;
  PllRun r;
  const int n = static_cast<int>(std::round(t_end / dt));
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    st = rgti::pll_step(kDesign.pll, st, amp * std::sin(2.0 * kPi * f * t + phase), dt);
    const double t1 = t + dt;
    if (st.locked && r.first_lock < 0.0) r.first_lock = t1;
    if (t1 >= t_check) {
      const double truth = 2.0 * kPi * f * t1 + phase;
      r.max_late_error = std::max(r.max_late_error, std::abs(std::sin(truth - st.theta)));
    }
  }
  r.st = st;
  return r;
}

TEST(Pll, LocksFromRestOnNominalGrid) {
  const double amp = kSys.grid.amplitude();
  const auto r = run_pll(rgti::pll_start(kDesign.pll), amp, 50.0, 0.7, 0.5, 0.3);
  EXPECT_TRUE(r.st.locked);
  EXPECT_GT(r.first_lock, 0.0);
  EXPECT_LT(r.first_lock, 0.25);
  EXPECT_LT(r.max_late_error, std::sin(kPi / 180.0));
  EXPECT_NEAR(r.st.amplitude, amp, 0.01 * amp);
}

TEST(Pll, TracksOffNominalFrequency) {
  const double amp = kSys.grid.amplitude();
  const auto r = run_pll(rgti::pll_locked_at(kDesign.pll, amp, 0.0), amp, 51.0, 0.0, 1.0, 0.6);
  EXPECT_NEAR(r.st.omega, 2.0 * kPi * 51.0, 0.005 * 2.0 * kPi * 51.0);
  EXPECT_LT(r.max_late_error, std::sin(2.0 * kPi / 180.0));
  EXPECT_TRUE(r.st.locked);
}

TEST(Pll, LockedStartStaysLocked) {
  const double amp = kSys.grid.amplitude();
  const auto r = run_pll(rgti::pll_locked_at(kDesign.pll, amp, 0.0), amp, 50.0, 0.0, 0.2, 0.0);
  EXPECT_TRUE(r.st.locked);
  // Only the discretisation offset of the filter states remains.
  EXPECT_LT(r.max_late_error, std::sin(0.5 * kPi / 180.0));
}

TEST(Pll, LosesLockWhenGridDisappears) {
  const double amp = kSys.grid.amplitude();
  const auto r = run_pll(rgti::pll_locked_at(kDesign.pll, amp, 0.0), 0.0, 50.0, 0.0, 0.05, 0.0);
  EXPECT_FALSE(r.st.locked);
  EXPECT_LT(r.st.amplitude, 0.1 * amp);
}

// ---------------------------------------------------------------- margin

TEST(Margin, SyntheticTones) {
  const double dt = 0.5e-3;
  const int n = 400;  // 0.2 s
  const double V0 = 500.0, I0 = 7.0, G = 0.5, a = 4.8;
  std::vector<double> v(n), i(n);
  for (int k = 0; k < n; ++k) {
    const double s = std::sin(2.0 * kPi * 10.0 * k * dt);
    v[k] = V0 + a * s;
    i[k] = I0 - G * a * s;
  }
  const auto m = rgti::estimate_margin(v, i, dt, 0.2, a);
  ASSERT_TRUE(m.valid);
  EXPECT_NEAR(m.g_tilde, G, 1e-9);
  EXPECT_NEAR(m.g_dc, I0 / V0, 1e-12);
  EXPECT_NEAR(m.g_r, G * V0 / I0, 1e-8);
}

TEST(Margin, MatchesPvCurveSlope) {
  const double dt = 0.5e-3;
  const int n = 400;
  for (double V : {470.0, 500.0, 530.0}) {
    std::vector<double> v(n), i(n);
    for (int k = 0; k < n; ++k) {
      v[k] = V + 0.5 * std::sin(2.0 * kPi * 10.0 * k * dt);
      i[k] = rgti::pv_current(kSys.pv, v[k], 1.0);
    }
    const auto m = rgti::estimate_margin(v, i, dt, 0.2, 0.5);
    const double oracle = V / (rgti::pv_current(kSys.pv, V, 1.0) * rgti::pv_dynamic_resistance(kSys.pv, V, 1.0));
    EXPECT_NEAR(m.g_r / oracle, 1.0, 0.01) << "V=" << V;
  }
}

TEST(Margin, InvalidWithoutTone) {
  std::vector<double> v(400, 500.0), i(400, 7.0);
  v[3] += 1e-3;
  const auto m = rgti::estimate_margin(v, i, 0.5e-3, 0.2, 4.8);
  EXPECT_FALSE(m.valid);
}

TEST(Margin, RejectsBadWindow) {
  std::vector<double> v(400, 500.0), i(400, 7.0);
  EXPECT_THROW(rgti::estimate_margin(v, i, 0.5e-3, 0.15, 4.8), rgti::ConfigError);
  EXPECT_THROW(rgti::estimate_margin(v, std::vector<double>(300, 7.0), 0.5e-3, 0.2, 4.8), rgti::ConfigError);
}

// ---------------------------------------------------------------- loop steps

TEST(MovingAverage, WindowMean) {
  rgti::MovingAverage m(4, 10.0);
  EXPECT_DOUBLE_EQ(m.value(), 10.0);
  m.push(2.0);
  EXPECT_DOUBLE_EQ(m.value(), (10.0 * 3 + 2.0) / 4.0);
  for (double x : {4.0, 6.0, 8.0}) m.push(x);
  EXPECT_DOUBLE_EQ(m.value(), 5.0);
}

TEST(BecStep, DischargeLowersVoltageReference) {
  rgti::BecState st;
  st.outer = rgti::pi_lag_preload(kDesign.h_i, 530.0, 0.0);
  st.inner = rgti::pi_preload(kDesign.h_v, 0.4, 0.0);
  st.v_ref = 530.0;
  double v_ref = 530.0;
  for (int k = 0; k < 5000; ++k) {
    const auto r = rgti::bec_step(kDesign.h_i, kDesign.h_v, st, 2.0, 530.0, 0.0, 20e-6);
    st = r.state;
    v_ref = st.v_ref;
  }
  EXPECT_LT(v_ref, 530.0);
}

TEST(VoltageLoopStep, HighVoltageRaisesDuty) {
  const auto st = rgti::pi_preload(kDesign.h_v, 0.4, 0.0);
  const auto r = rgti::voltage_loop_step(kDesign.h_v, st, 480.0, 490.0, 20e-6);
  EXPECT_GT(r.duty, 0.4);
}

TEST(GridTiedStep, NoCurrentWithoutLock) {
  auto st = rgti::grid_tied_start(kDesign, 500.0, 20e-6, rgti::pll_start(kDesign.pll));
  st.v_ref = 480.0;
  st = rgti::grid_tied_step(kDesign, st, {0.0, 0.0, 500.0}, 20e-6);
  EXPECT_DOUBLE_EQ(st.iq, 0.0);
  EXPECT_DOUBLE_EQ(st.i_ref, 0.0);
}

TEST(GridTiedStep, ManualCurrentCommandIsClamped) {
  auto st = rgti::grid_tied_start(kDesign, 500.0, 20e-6,
                                  rgti::pll_locked_at(kDesign.pll, kSys.grid.amplitude(), 0.0));
  st.voltage_loop = false;
  st.iq_ref = 1e3;
  st = rgti::grid_tied_step(kDesign, st, {0.0, 0.0, 500.0}, 20e-6);
  EXPECT_DOUBLE_EQ(st.iq, kDesign.iq_max);
  EXPECT_LE(std::abs(st.modulation), 1.0);
}

TEST(GridTiedStep, BusAboveReferenceExportsCurrent) {
  auto st = rgti::grid_tied_start(kDesign, 520.0, 20e-6,
                                  rgti::pll_locked_at(kDesign.pll, kSys.grid.amplitude(), 0.0));
  st.v_ref = 480.0;
  const double amp = kSys.grid.amplitude();
  for (int k = 1; k <= 100; ++k) {
    const double v_g = amp * std::sin(2.0 * kPi * 50.0 * k * 20e-6);
    st = rgti::grid_tied_step(kDesign, st, {v_g, 0.0, 520.0}, 20e-6);
  }
  EXPECT_TRUE(st.pll.locked);
  EXPECT_GT(st.iq, 0.0);
}

}  // namespace
