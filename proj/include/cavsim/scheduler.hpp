#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cavsim/core.hpp"

namespace cavsim {

class SchedulingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which branch of the terminal-time recursion produced a record. Records of
/// non-CAVs are constant-speed estimates and carry EstimatedPredecessor.
enum class CaseTag { First, SameRoadROrO, SameLane, Conflicting, EstimatedPredecessor };

std::string_view to_string(CaseTag c);

struct TerminalTimeRecord {
  VehicleId vehicle_id = 0;
  double t_m = 0.0;  // MZ entry
  double t_f = 0.0;  // MZ exit
  double v_m = 0.0;  // speed through the MZ
  CaseTag case_tag = CaseTag::First;
  double t_c = 0.0;  // lower bound used
  // Set when the immediate queue predecessor's record was an estimate; the
  // record then has to be re-checked whenever that vehicle changes speed.
  bool provisional = false;
  double anchor_speed = 0.0;
  // The free-terminal-speed plan would cross slower than the speed floor;
  // the CAV then plans with v(t_m) pinned to v_m.
  bool fixed_terminal_speed = false;
};

/// Vehicles in CZ-entry order. Every vehicle (CAV or not) takes a slot; only
/// CAV records are binding, non-CAV records are estimates.
class CrossingQueue {
 public:
  struct Entry {
    VehicleId id = 0;
    Approach lane = Approach::North;
    VehicleClass cls = VehicleClass::NonCav;
    std::optional<TerminalTimeRecord> record;
  };

  std::size_t push(VehicleId id, Approach lane, VehicleClass cls);
  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_.at(i); }
  Entry& operator[](std::size_t i) { return entries_.at(i); }
  std::optional<std::size_t> index_of(VehicleId id) const;
  const std::vector<Entry>& entries() const { return entries_; }

  /// Nearest earlier entry on the same lane as entry `index`.
  std::optional<std::size_t> same_lane_predecessor(std::size_t index) const;

 private:
  std::vector<Entry> entries_;
};

/// Earliest possible MZ arrival from (t0, v0) over `distance`: the
/// maximum-acceleration time, switching to the speed-capped form when the
/// terminal speed would exceed v_max.
double lower_bound_tc(double t0, double v0, double distance, double v_max, double u_max);

/// Terminal-time recursion for entry `index` given the records of all earlier
/// entries. Returns a record with t_m set and case_tag filled; t_f and v_m are
/// left for the caller, who knows the vehicle's MZ speed.
TerminalTimeRecord assign_terminal_time(const CrossingQueue& queue, std::size_t index, double t_c,
                                        double delta, double mz_side);

/// Constant-speed estimate of a non-CAV predecessor's MZ arrival, taken at
/// t_i0. Empty when the predecessor is stopped.
std::optional<double> estimate_noncav_exit(double t_i0, double p_pred, double v_pred, double L);

/// Record for a non-CAV built from its current state.
std::optional<TerminalTimeRecord> estimate_noncav_record(VehicleId id, double now, double p,
                                                         double v, double L, double mz_side);

/// State of the CAV being scheduled, plus what is needed to turn a candidate
/// t_m into an MZ speed.
struct ScheduleInputs {
  double now = 0.0;
  double p = 0.0;
  double v = 0.0;
  IntersectionGeometry geometry;
  ConstraintBounds bounds;
  double mz_speed_floor = 13.0;  // [m/s], capped at v_max
  // Extra lower bound on t_m imposed by the caller.
  double not_before = -std::numeric_limits<double>::infinity();
  // Clearance added behind every conflicting exit, e.g. one simulation step [s].
  double conflict_buffer = 0.0;
  // Extra clearance behind a conflicting record that is only an estimate [s].
  double estimate_margin = 0.0;
  // Entries before this index have left the MZ and are skipped.
  std::size_t scan_from = 0;
};

/// Full scheduling of a CAV: lower bound, recursion, plus three lifts that
/// keep the schedule executable (FD feasibility within the speed/accel
/// bounds, clearance behind every earlier conflicting vehicle still to
/// leave the MZ, and no catch-up of the same-lane predecessor inside the MZ).
TerminalTimeRecord schedule_cav(const CrossingQueue& queue, std::size_t index,
                                const ScheduleInputs& in);

inline constexpr double kReevaluationSpeedTol = 0.5;

/// Re-schedules entry `index` if its record was built from an estimate and
/// the predecessor's observed speed moved more than the tolerance away from
/// the anchor. The caller refreshes the predecessor's estimate in the queue
/// first. Empty when no change is needed.
std::optional<TerminalTimeRecord> reevaluate(const CrossingQueue& queue, std::size_t index,
                                             double observed_pred_speed, const ScheduleInputs& in);

}  // namespace cavsim
