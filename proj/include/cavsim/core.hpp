#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cavsim {

/// Raised when an operation receives inputs outside its domain.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using VehicleId = std::uint32_t;

enum class VehicleClass { Cav, NonCav };

/// Approaches are named by the side vehicles arrive from. North and South
/// form one road, East and West the other. Routes are straight through.
enum class Approach { North = 0, East = 1, South = 2, West = 3 };

inline constexpr int kApproachCount = 4;

enum class Road { NorthSouth, EastWest };

constexpr Road road_of(Approach a) {
  return (a == Approach::North || a == Approach::South) ? Road::NorthSouth
                                                        : Road::EastWest;
}

constexpr Approach opposite(Approach a) {
  return static_cast<Approach>((static_cast<int>(a) + 2) % kApproachCount);
}

std::string_view to_string(VehicleClass c);
std::string_view to_string(Approach a);
std::string_view to_string(Road r);

struct IntersectionGeometry {
  double cz_length = 400.0;  // L, CZ entry to MZ entry [m]
  double mz_side = 30.0;     // S [m]
  int approaches = kApproachCount;
  int lanes_per_approach = 1;

  double mz_exit() const { return cz_length + mz_side; }
  void validate() const;
};

struct ConstraintBounds {
  double u_min = -6.0;   // [m/s^2]
  double u_max = 3.0;    // [m/s^2]
  double v_min = 0.0;    // [m/s]
  double v_max = 13.0;   // [m/s]
  double delta = 10.0;   // minimal safety following distance [m]
  double delta_f = 10.0; // AF engagement threshold [m]

  void validate() const;
};

/// Kinematic state of one vehicle. Positions are measured along the
/// vehicle's own lane from its CZ entry point.
struct VehicleState {
  VehicleId id = 0;
  VehicleClass cls = VehicleClass::NonCav;
  Approach lane = Approach::North;
  double p = 0.0;
  double v = 0.0;
  double u = 0.0;
  double t0 = 0.0;
};

/// Relation of vehicle j with respect to vehicle i. Exactly one variant
/// applies to every ordered pair of distinct vehicles.
enum class Relation { SameLaneAhead, SameRoadOtherLane, Conflicting, Opposite };

std::string_view to_string(Relation r);

Relation classify_relation(const VehicleState& i, const VehicleState& j);

/// Relation between two approaches (single lane per approach).
Relation relation_between(Approach i, Approach j);

/// MZ exit time under constant speed inside the merging zone.
double mz_exit_time(double t_m, double v_m, double mz_side);

/// Inter-vehicle distance from follower i to leader k on the same lane.
inline double gap(const VehicleState& i, const VehicleState& k) { return k.p - i.p; }

}  // namespace cavsim
