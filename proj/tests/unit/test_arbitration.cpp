#include <doctest.h>

#include <cmath>

#include "cavsim/arbitration.hpp"

using namespace cavsim;

namespace {

MzWindow win(VehicleId id, Approach a, double entry, double exit, bool scheduled = false) {
  MzWindow w;
  w.id = id;
  w.approach = a;
  w.entry = entry;
  w.exit = exit;
  w.scheduled = scheduled;
  w.cls = scheduled ? VehicleClass::Cav : VehicleClass::NonCav;
  return w;
}

ConflictRule rule(RuleKind k) {
  ConflictRule r;
  r.kind = k;
  return r;
}

}  // namespace

TEST_CASE("signal phases") {
  SignalCycle c;
  auto s = tlc_phase(0, c);
  CHECK(s.north_south == Signal::Green);
  CHECK(s.east_west == Signal::Red);
  s = tlc_phase(31, c);
  CHECK(s.north_south == Signal::Red);
  CHECK(s.east_west == Signal::Red);
  s = tlc_phase(34, c);
  CHECK(s.east_west == Signal::Green);
  CHECK(s.north_south == Signal::Red);
  s = tlc_phase(66 + 5, c);
  CHECK(s.north_south == Signal::Green);
}

TEST_CASE("CA1 lets everyone through") {
  MzOccupancy occ;
  occ.grant(win(1, Approach::North, 0, 3));
  occ.mark_inside(1);
  CHECK(request_mz_entry(win(2, Approach::East, 0, 3), occ, {}, rule(RuleKind::CA1_Passive), 0) ==
        Directive::Proceed);
}

TEST_CASE("CA2: minor road yields to the major road") {
  MzOccupancy occ;
  occ.grant(win(1, Approach::North, 0, 3));
  occ.mark_inside(1);
  const auto r = rule(RuleKind::CA2_Partial);
  CHECK(request_mz_entry(win(2, Approach::East, 1, 4), occ, {}, r, 1) == Directive::Yield);
  CHECK(request_mz_entry(win(3, Approach::South, 1, 4), occ, {}, r, 1) == Directive::Proceed);

  MzOccupancy minor;
  minor.grant(win(4, Approach::East, 0, 3));
  minor.mark_inside(4);
  CHECK(request_mz_entry(win(5, Approach::North, 1, 4), minor, {}, r, 1) == Directive::Proceed);

  const std::vector<MzWindow> coming{win(6, Approach::South, 5, 8)};
  CHECK(request_mz_entry(win(7, Approach::West, 4, 7), MzOccupancy{}, coming, r, 4) ==
        Directive::Yield);
  CHECK(request_mz_entry(win(7, Approach::West, 10, 13), MzOccupancy{}, coming, r, 10) ==
        Directive::Proceed);
}

TEST_CASE("CA3: exclusive conflicting occupancy, opposite approaches share") {
  MzOccupancy occ;
  occ.grant(win(1, Approach::East, 0, 3));
  const auto r = rule(RuleKind::CA3_Full);
  CHECK(request_mz_entry(win(2, Approach::North, 1, 4), occ, {}, r, 1) == Directive::Yield);
  CHECK(request_mz_entry(win(3, Approach::West, 1, 4), occ, {}, r, 1) == Directive::Proceed);
  CHECK(request_mz_entry(win(4, Approach::North, 5, 8), occ, {}, r, 5) == Directive::Proceed);
}

TEST_CASE("TLC: green and a clear box") {
  const auto r = rule(RuleKind::TLC);
  CHECK(request_mz_entry(win(1, Approach::North, 1, 4), MzOccupancy{}, {}, r, 1) ==
        Directive::Proceed);
  CHECK(request_mz_entry(win(2, Approach::East, 1, 4), MzOccupancy{}, {}, r, 1) ==
        Directive::Yield);
  // Would still be inside long after the green ends.
  CHECK(request_mz_entry(win(3, Approach::North, 29, 45), MzOccupancy{}, {}, r, 29) ==
        Directive::Yield);
}

TEST_CASE("CAV override") {
  const auto r = rule(RuleKind::CA2_Partial);
  const MzWindow cav = win(10, Approach::East, 5, 7.5, true);
  auto d = cav_mz_override(cav, MzOccupancy{}, {}, r, 5);
  CHECK_FALSE(d.override_schedule);

  MzOccupancy occ;
  occ.grant(win(1, Approach::North, 4, 7));
  occ.mark_inside(1);
  d = cav_mz_override(cav, occ, {}, r, 5);
  CHECK(d.override_schedule);
  CHECK(d.directive == Directive::Yield);

  MzOccupancy opp;
  opp.grant(win(2, Approach::West, 4, 7));
  opp.mark_inside(2);
  d = cav_mz_override(cav, opp, {}, r, 5);
  CHECK(d.directive == Directive::Proceed);

  MzOccupancy sched;
  sched.grant(win(3, Approach::North, 1, 3, true));
  d = cav_mz_override(cav, sched, {}, r, 5);
  CHECK_FALSE(d.override_schedule);
}

TEST_CASE("stop-line profile and travel time") {
  CHECK(stop_line_profile(10, 25, -6, 0.05) == doctest::Approx(-2));
  CHECK(stop_line_profile(10, 1, -6, 0.05) == doctest::Approx(-6));
  CHECK(stop_line_profile(0, 5, -6, 0.05) == 0);
  CHECK(travel_time(30, 10, 2, 13) == doctest::Approx((3.0 / 2) + (30 - (169 - 100) / 4.0) / 13));
  CHECK(travel_time(30, 0, 2, 13) == doctest::Approx(std::sqrt(30.0)));
  CHECK(travel_time(30, 15, 2, 13) == doctest::Approx(2));
}
