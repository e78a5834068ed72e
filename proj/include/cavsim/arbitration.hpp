#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cavsim/core.hpp"

namespace cavsim {

struct SignalCycle {
  double green_ns = 30.0;
  double green_ew = 30.0;
  double all_red = 3.0;
  double offset = 0.0;

  double period() const { return green_ns + green_ew + 2.0 * all_red; }
  void validate() const;
};

enum class RuleKind { CA1_Passive, CA2_Partial, CA3_Full, TLC };

std::string_view to_string(RuleKind k);

struct ConflictRule {
  RuleKind kind = RuleKind::CA2_Partial;
  Road major = Road::NorthSouth;  // CA2 only
  SignalCycle cycle;              // TLC only
};

enum class Signal { Green, Red };

struct PhaseState {
  Signal north_south = Signal::Red;
  Signal east_west = Signal::Red;
  // Absolute time at which the current green (if any) ends.
  double green_end = 0.0;

  Signal of(Approach a) const {
    return road_of(a) == Road::NorthSouth ? north_south : east_west;
  }
};

/// Fixed-time two-phase signal: NS green, all red, EW green, all red.
PhaseState tlc_phase(double t, const SignalCycle& cycle);

/// Predicted MZ window of one vehicle. `scheduled` marks a CAV that is
/// following its terminal-time schedule.
struct MzWindow {
  VehicleId id = 0;
  Approach approach = Approach::North;
  VehicleClass cls = VehicleClass::NonCav;
  bool scheduled = false;
  double entry = 0.0;
  double exit = 0.0;
};

/// Granted or physically present MZ users.
class MzOccupancy {
 public:
  void grant(const MzWindow& w);
  void update(VehicleId id, double entry, double exit);
  void mark_inside(VehicleId id);
  void release(VehicleId id);
  bool holds(VehicleId id) const;
  const MzWindow* find(VehicleId id) const;
  std::span<const MzWindow> windows() const { return windows_; }
  bool inside(VehicleId id) const;
  std::size_t size() const { return windows_.size(); }

 private:
  std::vector<MzWindow> windows_;
  std::vector<VehicleId> inside_;
};

enum class Directive { Proceed, Yield };

/// Gap kept around every predicted window [s].
inline constexpr double kWindowMargin = 0.5;

/// Entry decision at the stop line. `approaching` lists predicted windows of
/// vehicles not yet holding a grant; CA2 minor-road vehicles check them for
/// major-road traffic.
Directive request_mz_entry(const MzWindow& request, const MzOccupancy& occupancy,
                           std::span<const MzWindow> approaching, const ConflictRule& rule,
                           double t, double margin = kWindowMargin);

struct OverrideDecision {
  bool override_schedule = false;
  Directive directive = Directive::Proceed;
};

/// A scheduled CAV keeps its constant-speed crossing unless an unscheduled
/// conflicting vehicle (a non-CAV, or a CAV that lost its schedule) is in or
/// heading for the MZ, or a signal applies; then the conflict rule decides.
OverrideDecision cav_mz_override(const MzWindow& cav, const MzOccupancy& occupancy,
                                 std::span<const MzWindow> approaching, const ConflictRule& rule,
                                 double t, double margin = kWindowMargin);

/// Deceleration that brings a vehicle at speed v to rest after `distance`.
double stop_line_profile(double v, double distance, double max_decel, double dt);

/// Time needed to cover `distance` starting at v with acceleration `accel`
/// until reaching v_cruise (v_cruise > 0).
double travel_time(double distance, double v, double accel, double v_cruise);

}  // namespace cavsim
