#include "cavsim/core.hpp"

namespace cavsim {

std::string_view to_string(VehicleClass c) {
  return c == VehicleClass::Cav ? "CAV" : "nonCAV";
}

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::North: return "N";
    case Approach::East: return "E";
    case Approach::South: return "S";
    case Approach::West: return "W";
  }
  return "?";
}

std::string_view to_string(Road r) { return r == Road::NorthSouth ? "NS" : "EW"; }

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::SameLaneAhead: return "L";
    case Relation::SameRoadOtherLane: return "R";
    case Relation::Conflicting: return "C";
    case Relation::Opposite: return "O";
  }
  return "?";
}

void IntersectionGeometry::validate() const {
  if (!(mz_side > 0.0)) throw DomainError("geometry: mz_side must be > 0");
  if (!(cz_length > mz_side)) throw DomainError("geometry: cz_length must exceed mz_side");
  if (approaches != kApproachCount) throw DomainError("geometry: exactly 4 approaches supported");
  if (lanes_per_approach != 1) throw DomainError("geometry: one lane per approach supported");
}

void ConstraintBounds::validate() const {
  if (!(u_min < 0.0 && u_max > 0.0)) throw DomainError("bounds: need u_min < 0 < u_max");
  if (!(v_min >= 0.0 && v_min < v_max)) throw DomainError("bounds: need 0 <= v_min < v_max");
  if (!(delta > 0.0)) throw DomainError("bounds: delta must be > 0");
  if (!(delta_f >= delta)) throw DomainError("bounds: delta_f must be >= delta");
}

Relation relation_between(Approach i, Approach j) {
  if (i == j) return Relation::SameLaneAhead;
  if (j == opposite(i)) return Relation::Opposite;
  return Relation::Conflicting;
}

Relation classify_relation(const VehicleState& i, const VehicleState& j) {
  if (i.id == j.id) throw DomainError("classify_relation: a vehicle has no relation to itself");
  return relation_between(i.lane, j.lane);
}

double mz_exit_time(double t_m, double v_m, double mz_side) {
  if (!(v_m > 0.0)) throw DomainError("mz_exit_time: MZ speed must be positive");
  return t_m + mz_side / v_m;
}

}  // namespace cavsim
