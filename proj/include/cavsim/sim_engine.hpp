#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cavsim/arbitration.hpp"
#include "cavsim/cav_control.hpp"
#include "cavsim/core.hpp"
#include "cavsim/noncav.hpp"
#include "cavsim/scheduler.hpp"

namespace cavsim {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Energy integrand. HalfUSquared is the control-effort cost used by the
/// controllers. Polynomial is
///   c[0] + c[1] v + c[2] v^2 + c[3] v^3 + [u > 0] (c[4] u + c[5] u v + c[6] u^2)
/// so braking earns no credit.
struct EnergyModel {
  enum class Kind { HalfUSquared, Polynomial };
  Kind kind = Kind::HalfUSquared;
  std::array<double, 7> coeffs{};

  static EnergyModel half_u_squared() { return {}; }
  static EnergyModel polynomial(const std::array<double, 7>& c) {
    return {Kind::Polynomial, c};
  }
};

double energy_rate(double v, double u, const EnergyModel& model);

/// Trapezoidal integral of the energy rate over a sampled trajectory.
double energy(std::span<const double> t, std::span<const double> v, std::span<const double> u,
              const EnergyModel& model);

/// How CAVs behave once they close in on a non-CAV.
enum class CavFollowing { Optimal, Wiedemann };

enum class CollisionResponse { RecordAndFreeze, Halt };

struct ScenarioConfig {
  IntersectionGeometry geometry;
  ConstraintBounds bounds;
  ObjectiveWeights weights;
  WiedemannParams wiedemann;
  ConflictRule rule;
  double penetration = 0.5;
  double flow_rate = 700.0;  // veh/h/lane per approach
  double horizon = 1800.0;   // [s]
  double warmup = 300.0;     // vehicles entering earlier are left out of aggregates [s]
  double dt = 0.05;          // [s]
  std::uint64_t seed = 1;
  double initial_speed_lo = 10.9;
  double initial_speed_hi = 11.1;
  EnergyModel energy_model;
  CavFollowing cav_following = CavFollowing::Optimal;
  // AF safety net behind CAV leaders. Off by default: the constant-speed
  // anchor cannot represent a scheduled leader's plan over long horizons.
  bool af_behind_cavs = false;
  // Delayed CAVs cross the MZ no slower than this; 0 leaves the terminal
  // speed free.
  double mz_speed_floor = 13.0;
  double stop_line_offset = 2.0;  // stop line distance before the MZ [m]
  CollisionResponse collision_response = CollisionResponse::RecordAndFreeze;

  /// Throws ConfigError naming every offending field.
  void validate() const;
};

struct Arrival {
  double t = 0.0;
  VehicleClass cls = VehicleClass::NonCav;
  double v0 = 0.0;
};

using ArrivalStreams = std::array<std::vector<Arrival>, kApproachCount>;

/// Poisson arrivals per approach with exponential headways of mean 3600/flow
/// seconds. Class and initial speed are drawn per arrival. Each approach and
/// each attribute has its own seeded stream.
ArrivalStreams spawn_arrivals(double flow_rate, double horizon, std::uint64_t seed,
                              double penetration, double speed_lo, double speed_hi);

struct VehicleMetrics {
  VehicleId id = 0;
  VehicleClass cls = VehicleClass::NonCav;
  Approach lane = Approach::North;
  double t0 = 0.0;
  double t_exit = 0.0;
  double travel_time = 0.0;
  double energy = 0.0;
  int saturation_count = 0;
  double min_gap = 0.0;  // +inf when never behind a leader
  bool frozen = false;
  bool completed = false;
};

struct MetricsReport {
  std::vector<VehicleMetrics> vehicles;  // in spawn order
  double mean_energy_per_s = 0.0;        // sum energy / sum travel time, measured vehicles
  double mean_travel_time = 0.0;
  int rear_end_violations = 0;
  int lateral_collisions = 0;
  int throughput = 0;   // measured vehicles that left the MZ
  int frozen = 0;
  int spawned = 0;
  int departed = 0;
  int in_system = 0;
  int waiting_to_enter = 0;
  int saturation_events = 0;
  double max_cav_speed = 0.0;
  double min_speed = 0.0;
  bool halted = false;
};

/// Trace record for plotting trajectories.
struct TraceRow {
  std::uint64_t run_id = 0;
  double t = 0.0;
  VehicleId vehicle_id = 0;
  VehicleClass cls = VehicleClass::NonCav;
  Approach lane = Approach::North;
  std::string mode;
  double p = 0.0;
  double v = 0.0;
  double u = 0.0;
};

using TraceSink = std::function<void(const TraceRow&)>;

/// Manually injected vehicle.
struct VehicleSpec {
  VehicleClass cls = VehicleClass::NonCav;
  Approach lane = Approach::North;
  double v0 = 11.0;
  double p0 = 0.0;
  // Non-CAV that holds its entry speed, ignoring everything around it.
  bool cruise_only = false;
};

/// Fixed-step world for one intersection.
class World {
 public:
  explicit World(ScenarioConfig config);

  /// Adds a vehicle at the current time. Returns its id.
  VehicleId add_vehicle(const VehicleSpec& spec);
  /// Queue arrivals for safe insertion at their times.
  void set_arrivals(ArrivalStreams streams);
  void set_trace(TraceSink sink, std::uint64_t run_id = 0);
  void set_af_enabled(bool enabled) { af_enabled_ = enabled; }

  void step();
  void run_until(double t_end);

  double time() const { return t_; }
  bool halted() const { return halted_; }
  const ScenarioConfig& config() const { return cfg_; }
  const CrossingQueue& queue() const { return queue_; }
  const MzOccupancy& occupancy() const { return occupancy_; }

  /// Scheduled records of CAVs as they stood when the CAV entered the MZ.
  const std::vector<TerminalTimeRecord>& committed_records() const { return committed_; }

  struct Snapshot {
    VehicleId id;
    VehicleClass cls;
    Approach lane;
    double p, v, u;
    std::string mode;
  };
  std::vector<Snapshot> snapshot() const;
  std::optional<Snapshot> find(VehicleId id) const;
  std::size_t active_count() const;

  MetricsReport report() const;

 private:
  enum class Control { Scheduled, Pending, Fallback };
  enum class Gate { None, Yielding, Granted };

  struct Vehicle {
    VehicleState s;
    bool cruise_only = false;
    Control control = Control::Fallback;
    CavMode cav_mode = CavMode::FreeDriving;
    std::optional<FdCoefficients> fd;
    std::optional<AfCoefficients> af;
    std::size_t af_leader = 0;
    double af_retry_at = 0.0;
    double schedule_retry_at = 0.0;
    // Re-solve the plan from the current state before the next control.
    bool replan = false;
    // Replans keep the committed MZ speed instead of a free terminal speed.
    bool pinned = false;
    WiedemannParams driver;
    std::uint64_t dither_stream = 0;
    DriverMode driver_mode = DriverMode::FreeDriving;
    Gate gate = Gate::None;
    bool in_mz = false;
    bool exited = false;
    bool frozen = false;
    double t_mz_entry = 0.0;
    double t_exit = 0.0;
    double energy = 0.0;
    double last_rate = 0.0;
    bool has_rate = false;
    int saturation = 0;
    double min_gap = 0.0;
  };

  struct LeaderInfo {
    std::size_t index;
    double gap;
  };

  std::size_t spawn(const VehicleSpec& spec);
  void admit_arrivals();
  void update_leaders();
  void update_holds();
  void refresh_estimates();
  bool try_schedule(std::size_t vi);
  std::optional<TerminalTimeRecord> schedule_checked(std::size_t vi, bool check_gap);
  bool plan_keeps_gap(std::size_t vi, const TerminalTimeRecord& rec) const;
  Kinematics plan_state(std::size_t vi, double t) const;
  double cav_safe_gap(double v) const;
  void reevaluate_schedules();
  void reschedule_from(std::size_t first);
  bool solve_plan(std::size_t vi);
  PredecessorAnchor af_anchor(std::size_t leader) const;
  void replan_or_fallback(std::size_t vi);
  void to_fallback(std::size_t vi);
  std::optional<LeaderInfo> leader_of(std::size_t vi) const;
  double control_cav(std::size_t vi, bool& exact);
  double control_driver(std::size_t vi);
  bool may_request(std::size_t vi) const;
  double apply_gate(std::size_t vi, double u);
  /// Braking that keeps the vehicle out of an MZ still occupied by a
  /// conflicting vehicle; +inf when the way is clear or it cannot stop.
  double box_guard(std::size_t vi) const;
  double safety_cap(std::size_t vi) const;
  double mz_time_left(const Vehicle& veh) const;
  MzWindow predicted_window(const Vehicle& veh) const;
  const std::vector<MzWindow>& approaching_windows();
  void integrate(const std::vector<double>& u_cmd, const std::vector<char>& exact);
  void detect_collisions();
  void freeze(std::size_t vi);
  std::string mode_tag(const Vehicle& veh) const;
  ScheduleInputs schedule_inputs(const Vehicle& veh) const;

  ScenarioConfig cfg_;
  double t_ = 0.0;
  bool halted_ = false;
  bool af_enabled_ = true;
  std::vector<Vehicle> vehicles_;  // index == id == queue index
  std::vector<std::size_t> active_;
  std::vector<std::size_t> ahead_;
  // Waiting at the stop line, or queued behind a vehicle that is.
  std::vector<char> held_;
  CrossingQueue queue_;
  MzOccupancy occupancy_;
  std::vector<TerminalTimeRecord> committed_;
  ArrivalStreams pending_;
  std::array<std::size_t, kApproachCount> next_arrival_{};
  std::mt19937_64 rng_;
  bool estimates_fresh_ = false;
  bool approaching_fresh_ = false;
  std::vector<MzWindow> approaching_;
  std::size_t cascade_from_;
  int rear_end_ = 0;
  int lateral_ = 0;
  double max_cav_speed_ = 0.0;
  double min_speed_;
  TraceSink trace_;
  std::uint64_t run_id_ = 0;
};

/// Runs one scenario to its horizon with Poisson arrivals.
MetricsReport run(const ScenarioConfig& config, TraceSink trace = {}, std::uint64_t run_id = 0);

}  // namespace cavsim
