#include <gtest/gtest.h>

#include <cmath>

#include "rgti/pv.hpp"

namespace {

const rgti::PvParams kPv = rgti::PvParams::reference();

// Central finite difference of the curve, independent of pv_slope(). The
// step is wide enough that cancellation stays well below the tolerance where
// the slope is tiny (current-source region).
double fd_resistance(double v, double g = 1.0, double h = 0.1) {
  const double di = rgti::pv_current(kPv, v + h, g) - rgti::pv_current(kPv, v - h, g);
  return -2.0 * h / di;
}

TEST(PvCurve, EndPoints) {
  EXPECT_NEAR(rgti::pv_current(kPv, kPv.v_oc, 1.0), 0.0, 1e-12);
  EXPECT_NEAR(rgti::pv_current(kPv, 0.0, 1.0), kPv.i_sc, 1e-12);
  EXPECT_NEAR(rgti::pv_current(kPv, kPv.v_oc, 0.4), 0.0, 1e-12);
}

TEST(PvCurve, PassesThroughRatedPoint) {
  // 3600 W / 480 V
  EXPECT_NEAR(rgti::pv_current(kPv, 480.0, 1.0), 7.5, 1e-9);
}

TEST(PvCurve, DomainErrors) {
  EXPECT_THROW(rgti::pv_current(kPv, -0.1, 1.0), rgti::DomainError);
  EXPECT_THROW(rgti::pv_current(kPv, 1.051 * kPv.v_oc, 1.0), rgti::DomainError);
  EXPECT_NO_THROW(rgti::pv_current(kPv, 1.04 * kPv.v_oc, 1.0));
  EXPECT_THROW(rgti::pv_current(kPv, 100.0, -0.1), rgti::DomainError);
}

TEST(PvCurve, StrictlyDecreasingAndNonNegative) {
  double prev = rgti::pv_current(kPv, 0.0, 0.8);
  for (double v = 0.5; v <= kPv.v_oc; v += 0.5) {
    const double i = rgti::pv_current(kPv, v, 0.8);
    EXPECT_LT(i, prev) << v;
    EXPECT_GE(i, -1e-12);
    prev = i;
  }
}

TEST(DynamicResistance, AtMppEqualsStaticResistance) {
  EXPECT_NEAR(rgti::pv_dynamic_resistance(kPv, 480.0, 1.0), 64.0, 1e-9);
  EXPECT_NEAR(fd_resistance(480.0, 1.0, 1e-3), 64.0, 1e-4);
}

TEST(DynamicResistance, MatchesFiniteDifference) {
  for (double v : {50.0, 200.0, 400.0, 500.0, 540.0, 555.0}) {
    const double r = rgti::pv_dynamic_resistance(kPv, v, 1.0);
    EXPECT_NEAR(r / fd_resistance(v), 1.0, 1e-5) << v;
  }
}

TEST(DynamicResistance, LargeInCurrentSourceRegion) {
  EXPECT_GT(fd_resistance(1.0), 10.0 * 64.0);
  EXPECT_GT(rgti::pv_dynamic_resistance(kPv, 1.0, 1.0), 10.0 * 64.0);
}

TEST(DynamicResistance, MonotoneDecreasingInVoltage) {
  double prev = rgti::pv_dynamic_resistance(kPv, 1.0, 1.0);
  for (double v = 5.0; v < kPv.v_oc; v += 5.0) {
    const double r = rgti::pv_dynamic_resistance(kPv, v, 1.0);
    EXPECT_GT(prev, r);
    EXPECT_TRUE(std::isfinite(r) && r > 0.0);
    prev = r;
  }
}

// For every irradiance the power curve has exactly one interior local maximum.
TEST(PvCurve, SinglePowerMaximum) {
  for (double g : {0.05, 0.3, 0.6, 1.0}) {
    int maxima = 0;
    double best_v = 0.0;
    const double h = 0.1;
    for (double v = h; v < kPv.v_oc - h; v += h) {
      const double p0 = (v - h) * rgti::pv_current(kPv, v - h, g);
      const double p1 = v * rgti::pv_current(kPv, v, g);
      const double p2 = (v + h) * rgti::pv_current(kPv, v + h, g);
      if (p1 > p0 && p1 >= p2) {
        ++maxima;
        best_v = v;
      }
    }
    EXPECT_EQ(maxima, 1) << g;
    EXPECT_NEAR(best_v / kPv.v_mpp, 1.0, 0.01) << g;
  }
}

TEST(PvCurve, SweepOracleFindsRatedPower) {
  const auto mpp = rgti::sweep_mpp(kPv, 1.0, 0.1);
  EXPECT_NEAR(mpp.v, 480.0, 0.1);
  EXPECT_NEAR(mpp.p, 3600.0, 1e-3);
  EXPECT_NEAR(rgti::sweep_mpp(kPv, 0.5).p, 1800.0, 1e-3);
}

TEST(PvParams, ThroughPointFitHitsPointButNotMaximum) {
  const auto p = rgti::PvParams::through_point(560.0, 8.2, 480.0, 7.5);
  EXPECT_NEAR(rgti::pv_current(p, 480.0, 1.0), 7.5, 1e-9);
  EXPECT_GT(std::abs(rgti::sweep_mpp(p, 1.0).v - 480.0), 5.0);
}

TEST(PvParams, Validation) {
  EXPECT_THROW(rgti::PvParams::from_mpp(560.0, 200.0, 7.5), rgti::ConfigError);
  rgti::PvParams p = kPv;
  p.i_mpp = p.i_sc + 1.0;
  EXPECT_THROW(p.validate(), rgti::ConfigError);
}

}  // namespace
