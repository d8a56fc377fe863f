#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "rgti/sim_core.hpp"

namespace {

using rgti::StateVec;

TEST(IntegrateStep, ZeroDynamicsIsIdentity) {
  const StateVec<3> s{1.5, -2.0, 1e9};
  auto zero = [](double, const StateVec<3>&) { return StateVec<3>{0.0, 0.0, 0.0}; };
  EXPECT_EQ(rgti::integrate_step(s, zero, 0.3, 1e-3), s);
}

TEST(IntegrateStep, ExponentialDecayMatchesClosedForm) {
  StateVec<1> x{1.0};
  auto f = [](double, const StateVec<1>& s) { return StateVec<1>{-s[0]}; };
  for (int k = 0; k < 1000; ++k) x = rgti::integrate_step(x, f, k * 1e-3, 1e-3);
  EXPECT_NEAR(x[0], std::exp(-1.0), 1e-6);
}

TEST(IntegrateStep, SineForcingReturnsToZeroAfterOnePeriod) {
  StateVec<1> x{0.0};
  const double two_pi = 2.0 * std::numbers::pi;
  auto f = [&](double t, const StateVec<1>&) { return StateVec<1>{two_pi * std::cos(two_pi * t)}; };
  const int n = 1000;
  for (int k = 0; k < n; ++k) x = rgti::integrate_step(x, f, k * 1e-3, 1e-3);
  EXPECT_NEAR(x[0], 0.0, 1e-6);
}

TEST(IntegrateStep, IsBitwiseDeterministic) {
  auto f = [](double t, const StateVec<2>& s) {
    return StateVec<2>{s[1], -std::sin(s[0]) + 0.3 * std::cos(7.0 * t)};
  };
  StateVec<2> a{0.4, 0.0};
  StateVec<2> b{0.4, 0.0};
  for (int k = 0; k < 5000; ++k) {
    a = rgti::integrate_step(a, f, k * 1e-3, 1e-3);
    b = rgti::integrate_step(b, f, k * 1e-3, 1e-3);
  }
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof a), 0);
}

TEST(IntegrateStep, NonFiniteDerivativeNamesChannel) {
  auto f = [](double, const StateVec<2>& s) { return StateVec<2>{1.0, s[0] > 0.5 ? NAN : 0.0}; };
  const std::string_view names[] = {"v_cap", "i_L"};
  StateVec<2> x{0.0, 0.0};
  try {
    for (int k = 0; k < 10; ++k) x = rgti::integrate_step(x, f, k * 0.1, 0.1, names);
    FAIL() << "expected divergence";
  } catch (const rgti::SimulationDiverged& e) {
    EXPECT_EQ(e.channel(), "i_L");
    EXPECT_NEAR(e.time(), 0.5, 1e-12);
  }
}

TEST(SimConfig, RejectsStepTooCoarseForBandwidth) {
  rgti::SimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dt = 62.5e-6;
  EXPECT_NO_THROW(c.validate());
  c.dt = 70e-6;
  EXPECT_THROW(c.validate(), rgti::ConfigError);
  c = {};
  c.grid_frequency = 55.0;
  EXPECT_THROW(c.validate(), rgti::ConfigError);
  c = {};
  c.t_end = c.dt / 2;
  EXPECT_THROW(c.validate(), rgti::ConfigError);
}

TEST(InjectPerturbation, Examples) {
  rgti::PerturbationSource src{4.8, 10.0, false};
  EXPECT_EQ(rgti::inject_perturbation(src, 0.025), 0.0);
  src.enabled = true;
  EXPECT_NEAR(rgti::inject_perturbation(src, 0.025), 4.8, 1e-12);
  EXPECT_EQ(rgti::inject_perturbation(src, 0.0), 0.0);
}

TEST(InjectPerturbation, AmplitudeLimitedToTwoPercent) {
  rgti::PerturbationSource src{9.7, 10.0, true};
  EXPECT_THROW(src.validate(480.0), rgti::ConfigError);
  src.amplitude = 9.6;
  EXPECT_NO_THROW(src.validate(480.0));
}

std::vector<double> sample(double fs, double t_len, auto&& fn) {
  std::vector<double> x;
  const auto n = static_cast<std::size_t>(std::llround(t_len * fs));
  for (std::size_t k = 0; k < n; ++k) x.push_back(fn(static_cast<double>(k) / fs));
  return x;
}

TEST(ExtractTone, PureToneWithDc) {
  const double w = 2.0 * std::numbers::pi * 10.0;
  const auto x = sample(1000.0, 0.2, [&](double t) { return 3.0 * std::sin(w * t) + 5.0; });
  const auto tone = rgti::extract_tone(x, 1e-3, 10.0, 0.2);
  EXPECT_NEAR(tone.amplitude, 3.0, 1e-9);
  EXPECT_NEAR(tone.phase, 0.0, 1e-9);
}

TEST(ExtractTone, ConstantRejected) {
  const auto x = sample(1000.0, 0.2, [](double) { return 7.0; });
  EXPECT_NEAR(rgti::extract_tone(x, 1e-3, 10.0, 0.2).amplitude, 0.0, 1e-9);
}

TEST(ExtractTone, HarmonicIsOrthogonal) {
  const double w = 2.0 * std::numbers::pi * 10.0;
  const auto x = sample(1000.0, 0.2, [&](double t) { return 3.0 * std::sin(w * t) + 0.5 * std::sin(10.0 * w * t); });
  EXPECT_NEAR(rgti::extract_tone(x, 1e-3, 10.0, 0.2).amplitude, 3.0, 1e-6);
}

TEST(ExtractTone, PhaseIsReferencedToAbsoluteTime) {
  const double w = 2.0 * std::numbers::pi * 10.0;
  const double t0 = 0.0137;
  std::vector<double> x;
  for (int k = 0; k < 400; ++k) x.push_back(2.0 * std::cos(w * (t0 + k * 1e-3)));
  const auto tone = rgti::extract_tone(x, 1e-3, 10.0, 0.2, t0);
  EXPECT_NEAR(tone.amplitude, 2.0, 1e-9);
  EXPECT_NEAR(tone.phase, std::numbers::pi / 2, 1e-9);
}

TEST(ExtractTone, WindowErrors) {
  const auto x = sample(1000.0, 1.0, [](double) { return 0.0; });
  EXPECT_THROW(rgti::extract_tone(x, 1e-3, 10.0, 0.15), rgti::ConfigError);  // 1.5 periods
  EXPECT_THROW(rgti::extract_tone(x, 1e-3, 10.0, 0.1), rgti::ConfigError);   // 1 period
  EXPECT_THROW(rgti::extract_tone(x, 1e-3, 200.0, 0.05), rgti::ConfigError); // fs < 10 f
  EXPECT_THROW(rgti::extract_tone(x, 1e-3, 1.0, 2.0), rgti::ConfigError);    // too few samples
}

TEST(ExtractTone, RoundTripsInjectedPerturbation) {
  const rgti::PerturbationSource src{4.8, 10.0, true};
  const double dt = 20e-6;
  const auto x = sample(1.0 / dt, 0.4, [&](double t) { return rgti::inject_perturbation(src, t); });
  const auto tone = rgti::extract_tone(x, dt, 10.0, 0.2);
  EXPECT_NEAR(tone.amplitude / 4.8, 1.0, 1e-6);
}

TEST(Trace, CsvHasHeaderAndFullPrecision) {
  rgti::Trace tr({"a", "b"});
  const double row0[] = {1.0 / 3.0, 2.0};
  const double row1[] = {0.1, -4.5};
  tr.append(0.0, row0);
  tr.append(0.5, row1);
  std::ostringstream os;
  tr.write_csv(os);
  EXPECT_EQ(os.str(), "t,a,b\n0,0.33333333333333331,2\n0.5,0.10000000000000001,-4.5\n");
  EXPECT_THROW(tr.append(0.5, row1), rgti::ConfigError);
  EXPECT_EQ(tr.channel("b")[1], -4.5);
}

}  // namespace
