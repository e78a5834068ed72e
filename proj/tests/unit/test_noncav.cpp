#include <doctest.h>

#include <cmath>
#include <limits>

#include "cavsim/noncav.hpp"

using namespace cavsim;

TEST_CASE("mode thresholds") {
  const WiedemannParams p;
  CHECK(classify_mode(std::numeric_limits<double>::infinity(), 0, 11, p) == DriverMode::FreeDriving);
  CHECK(classify_mode(8, 3, 11, p) == DriverMode::Braking);
  const double mid = 0.5 * (desired_gap(11, p) + max_following_gap(11, p));
  CHECK(classify_mode(mid, 0, 11, p) == DriverMode::Following);
  CHECK(classify_mode(500, 0, 11, p) == DriverMode::FreeDriving);
  CHECK(desired_gap(11, p) < max_following_gap(11, p));
  CHECK(approach_distance(11, 3, p) > max_following_gap(11, p));
}

TEST_CASE("mode accelerations") {
  WiedemannParams p;
  CHECK(acceleration(DriverMode::FreeDriving, p.desired_speed, std::nullopt, p) == doctest::Approx(0));
  // Closing at 5 m/s with 25 m to spare.
  const double v = 10;
  const LeaderView lead{desired_gap(v, p) + 25, v - 5};
  CHECK(acceleration(DriverMode::Approaching, v, lead, p) == doctest::Approx(-0.5));
  CHECK(acceleration(DriverMode::Braking, v, LeaderView{1e-3, 0}, p) == doctest::Approx(p.max_decel));
  const double band = 0.25 * p.comfort_accel;
  for (double d : {-1.0, 0.0, 1.0}) {
    const double u = acceleration(DriverMode::Following, v, LeaderView{15, v}, p, d);
    CHECK(std::abs(u) <= band + 1e-12);
  }
}

TEST_CASE("smooth close-up brakes more gently") {
  WiedemannParams hard;
  WiedemannParams soft = hard;
  soft.smooth_closeup = true;
  auto worst = [](const WiedemannParams& p) {
    double v = 13, gap = 120, worst = 0;
    const double v_lead = 5, dt = 0.05;
    for (int k = 0; k < 2000; ++k) {
      const double u = drive(v, LeaderView{gap, v_lead}, p, 0.0);
      worst = std::min(worst, u);
      v = std::max(0.0, v + u * dt);
      gap += (v_lead - v) * dt;
    }
    return worst;
  };
  CHECK(worst(soft) >= worst(hard) - 1e-12);
}

TEST_CASE("driver sampling") {
  WiedemannParams base;
  std::mt19937_64 a(7), b(7);
  const auto x = sample_driver(base, a);
  const auto y = sample_driver(base, b);
  CHECK(x.desired_speed == y.desired_speed);
  CHECK(x.bx_mult == y.bx_mult);
  base.jitter = 0;
  std::mt19937_64 c(1);
  CHECK(sample_driver(base, c).ax == base.ax);
  base.jitter = 0.05;
  std::mt19937_64 r(3);
  for (int k = 0; k < 1000; ++k) {
    const auto d = sample_driver(base, r);
    CHECK(std::abs(d.desired_speed / base.desired_speed - 1) <= 0.05 + 1e-12);
    CHECK(std::abs(d.ax / base.ax - 1) <= 0.05 + 1e-12);
  }
}

TEST_CASE("dither is keyed by time slot only") {
  CHECK(dither_at(5, 1.2, 1.0) == dither_at(5, 1.9, 1.0));
  for (double t = 0; t < 50; t += 0.7) {
    const double d = dither_at(11, t, 1.0);
    CHECK(d >= -1.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("a lone follower never rear-ends a braking leader") {
  WiedemannParams p;
  double v = 11, gap = 40, v_lead = 11;
  const double dt = 0.05;
  for (int k = 0; k < 4000; ++k) {
    const double t = k * dt;
    const double u_lead = (t > 20 && t < 24) ? -2.5 : (t > 60 && v_lead < 11 ? 1.0 : 0.0);
    v_lead = std::max(0.0, v_lead + u_lead * dt);
    const double u = drive(v, LeaderView{gap, v_lead}, p, dither_at(1, t, p.dither_period));
    v = std::max(0.0, v + u * dt);
    gap += (v_lead - v) * dt;
    REQUIRE(gap > 0);
  }
}
