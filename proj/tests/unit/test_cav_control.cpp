#include <doctest.h>

#include <cmath>

#include "../oracles.hpp"
#include "cavsim/cav_control.hpp"

using namespace cavsim;

TEST_CASE("FD closed form: constant speed needs no effort") {
  const auto c = solve_fd(0, 0, 10, 40, 400);
  CHECK(c.a == doctest::Approx(0).epsilon(1e-12));
  CHECK(c.b == doctest::Approx(0).epsilon(1e-12));
  CHECK(c.c == doctest::Approx(10));
  CHECK(c.d == doctest::Approx(0));
  const auto k = eval_fd(c, 17);
  CHECK(k.u == doctest::Approx(0));
  CHECK(k.v == doctest::Approx(10));
  CHECK(k.p == doctest::Approx(170));
}

TEST_CASE("FD closed form: speeding up to arrive early") {
  const auto c = solve_fd(0, 0, 10, 30, 400);
  CHECK(c.a == doctest::Approx(-1.0 / 90));
  CHECK(c.b == doctest::Approx(1.0 / 3));
  const auto end = eval_fd(c, 30);
  CHECK(end.u == doctest::Approx(0).scale(1));
  CHECK(end.v == doctest::Approx(15));
  CHECK(end.p == doctest::Approx(400));
}

TEST_CASE("FD closed form: two-vehicle scenario instance") {
  const auto c = solve_fd(2, 0, 15, 41, 400);
  const auto abs = c.in_absolute_time();
  CHECK(abs.a == doctest::Approx(0.0093562).epsilon(1e-4));
  CHECK(abs.b == doctest::Approx(-0.38360).epsilon(1e-4));
  const auto k = eval_fd(c, 2);
  CHECK(k.u == doctest::Approx(-0.3649).epsilon(1e-3));
  CHECK(k.v == doctest::Approx(15));
  CHECK(k.p == doctest::Approx(0).scale(1));
  CHECK(eval_fd(c, 41).v == doctest::Approx(7.885).epsilon(1e-3));
}

TEST_CASE("FD rejects a degenerate horizon and out-of-window samples") {
  CHECK_THROWS_AS(solve_fd(5, 0, 10, 5, 400), DegenerateHorizon);
  const auto c = solve_fd(0, 0, 10, 40, 400);
  CHECK_THROWS(eval_fd(c, 41));
  CHECK_THROWS(eval_fd(c, -1));
}

TEST_CASE("FD with pinned terminal speed meets all four conditions") {
  const auto c = solve_fd_fixed_speed(3, 10, 11, 40, 400, 13);
  const auto a = eval_fd(c, 3);
  const auto b = eval_fd(c, 40);
  CHECK(a.p == doctest::Approx(10));
  CHECK(a.v == doctest::Approx(11));
  CHECK(b.p == doctest::Approx(400));
  CHECK(b.v == doctest::Approx(13));
}

TEST_CASE("FD matches the discretized quadratic program") {
  for (double v0 : {9.0, 11.0, 14.0}) {
    for (double T : {25.0, 40.0, 55.0}) {
      const auto c = solve_fd(0, 0, v0, T, 400);
      oracle::Problem pr;
      pr.T = T;
      pr.v0 = v0;
      pr.L = 400;
      const auto sol = oracle::collocate(pr);
      const double closed = oracle::closed_form_cost([&](double t) { return eval_fd(c, t); }, 0, pr);
      const double tol = std::max(0.01 * closed, 1e-9);
      CHECK(std::abs(closed - sol.cost) <= tol);
      CHECK(closed <= sol.cost + 1e-9 + 1e-6 * sol.cost);
    }
  }
}

TEST_CASE("FD minimum feasible horizon respects the bounds") {
  ConstraintBounds b;
  for (double v0 : {5.0, 11.0, 13.0}) {
    for (double dist : {100.0, 400.0}) {
      const double T = fd_min_feasible_horizon(v0, dist, b);
      const auto c = solve_fd(0, 0, v0, T * 1.0001, dist);
      CHECK_FALSE(fd_violates_bounds(c, b));
      CHECK(eval_fd(c, 0).u <= b.u_max + 1e-6);
      CHECK(eval_fd(c, T * 1.0001).v <= b.v_max + 1e-6);
    }
  }
}

TEST_CASE("evaluators are consistent derivatives") {
  const auto fd = solve_fd(0, 0, 12, 35, 400);
  const auto af = solve_af(0, 0, 12, 35, 400, {15, 11}, 10, ObjectiveWeights{});
  const double h = 1e-4;
  for (double t : {1.0, 10.0, 20.0, 30.0}) {
    const auto f0 = eval_fd(fd, t - h), f1 = eval_fd(fd, t), f2 = eval_fd(fd, t + h);
    CHECK((f2.p - f0.p) / (2 * h) == doctest::Approx(f1.v).epsilon(1e-6));
    CHECK((f2.v - f0.v) / (2 * h) == doctest::Approx(f1.u).epsilon(1e-5).scale(1));
    const auto a0 = eval_af(af, t - h), a1 = eval_af(af, t), a2 = eval_af(af, t + h);
    CHECK((a2.p - a0.p) / (2 * h) == doctest::Approx(a1.v).epsilon(1e-6));
    CHECK((a2.v - a0.v) / (2 * h) == doctest::Approx(a1.u).epsilon(1e-5).scale(1));
  }
}

TEST_CASE("AF rate constant") {
  CHECK(af_alpha({1, 1, 1}) == doctest::Approx(std::sqrt(0.5)));
  CHECK(af_alpha({1, 4, 1}) == doctest::Approx(1.0));
}

TEST_CASE("AF boundary residuals") {
  const PredecessorAnchor pred{30, 10};
  const auto c = solve_af(5, 20, 12, 42, 400, pred, 10, ObjectiveWeights{});
  const auto a = eval_af(c, 5);
  const auto b = eval_af(c, 42);
  CHECK(std::abs(a.p - 20) < 1e-9);
  CHECK(std::abs(a.v - 12) < 1e-9);
  CHECK(std::abs(b.p - 400) < 1e-9);
  CHECK(std::abs(b.u) < 1e-9);
  CHECK_THROWS_AS(solve_af(5, 20, 12, 5, 400, pred, 10, ObjectiveWeights{}), DegenerateHorizon);
}

TEST_CASE("AF matches direct collocation on the two-vehicle engagement") {
  // Leader at 10 m/s from t = 0; the CAV engages at gap 10 m.
  const double t1 = 4.17, p1 = 31.7, v1 = 14.2, lead_p = 41.7;
  ObjectiveWeights w;
  const auto c = solve_af(t1, p1, v1, 41, 400, {lead_p, 10}, 10, w);
  oracle::Problem pr;
  pr.T = 41 - t1;
  pr.p0 = p1;
  pr.v0 = v1;
  pr.L = 400;
  pr.w_u = w.w_u;
  pr.w_s = w.w_s;
  pr.q = [&](double tau) { return lead_p + 10 * tau - 10; };
  const auto sol = oracle::collocate(pr);
  const double closed = oracle::closed_form_cost([&](double t) { return eval_af(c, t); }, t1, pr);
  CHECK(closed == doctest::Approx(sol.cost).epsilon(0.02));
  double worst = 0;
  for (std::size_t k = 0; k < sol.t.size(); ++k) {
    worst = std::max(worst, std::abs(eval_af(c, t1 + sol.t[k]).p - sol.p[k]));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("AF tends to FD as the spacing weight vanishes") {
  // Predecessor anchored on the mean path to the MZ, so the tracking error stays small.
  const double T = 20, v0 = 14, L = 400;
  oracle::Problem pr;
  pr.T = T;
  pr.v0 = v0;
  pr.L = L;
  const auto fd = solve_fd(0, 0, v0, T, L);
  const double fd_cost = oracle::closed_form_cost([&](double t) { return eval_fd(fd, t); }, 0, pr);
  for (double ws : {1e-4, 1e-6}) {
    const auto c = solve_af(0, 0, v0, T, L, {10, L / T}, 10, {1.0, ws, 1.0});
    const double cost = oracle::closed_form_cost([&](double t) { return eval_af(c, t); }, 0, pr);
    CHECK(cost == doctest::Approx(fd_cost).epsilon(0.01));
  }
}

TEST_CASE("mode transition") {
  CHECK(transition_mode(20, 10, VehicleClass::NonCav, CavMode::FreeDriving) ==
        CavMode::FreeDriving);
  CHECK(transition_mode(10, 10, VehicleClass::NonCav, CavMode::FreeDriving) ==
        CavMode::AdaptiveFollowing);
  CHECK(transition_mode(9, 10, VehicleClass::Cav, CavMode::FreeDriving) ==
        CavMode::AdaptiveFollowing);
  CHECK(transition_mode(9, 10, VehicleClass::Cav, CavMode::FreeDriving, false) ==
        CavMode::FreeDriving);
  CHECK(transition_mode(50, 10, VehicleClass::NonCav, CavMode::AdaptiveFollowing) ==
        CavMode::AdaptiveFollowing);
}

TEST_CASE("control clamping") {
  ConstraintBounds b;
  auto r = clamp_controls(5, 11, b, 0.05);
  CHECK(r.u == doctest::Approx(3));
  CHECK(r.saturated);
  r = clamp_controls(-1, b.v_min, b, 0.05);
  CHECK(r.u == doctest::Approx(0));
  CHECK(r.saturated);
  r = clamp_controls(0.2, 11, b, 0.05);
  CHECK(r.u == doctest::Approx(0.2));
  CHECK_FALSE(r.saturated);
  r = clamp_controls(2.0, 12.99, b, 0.05);
  CHECK(12.99 + r.u * 0.05 <= b.v_max + 1e-12);
}
