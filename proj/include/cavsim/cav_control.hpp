#pragma once

#include <stdexcept>

#include "cavsim/core.hpp"

namespace cavsim {

class DegenerateHorizon : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConditioningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sampled control, speed and position at one instant.
struct Kinematics {
  double u = 0.0;
  double v = 0.0;
  double p = 0.0;
};

/// Integration constants of the free-driving optimum
///   u(t) = a t + b,  v(t) = a t^2/2 + b t + c,  p(t) = a t^3/6 + b t^2/2 + c t + d
/// where t is measured from `origin`. solve_fd places the origin at the CZ
/// entry time; in_absolute_time() re-expands around t = 0.
struct FdCoefficients {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double origin = 0.0;
  double valid_from = 0.0;
  double valid_to = 0.0;

  FdCoefficients in_absolute_time() const;
};

/// Predecessor state frozen at AF engagement; the predecessor is assumed to
/// keep this speed.
struct PredecessorAnchor {
  double p = 0.0;
  double v = 0.0;
};

/// Integration constants of the adaptive-following optimum. Exponential and
/// trigonometric terms are evaluated in t - origin, origin = engagement time.
struct AfCoefficients {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double delta = 0.0;
  PredecessorAnchor anchor;
  double origin = 0.0;
  double valid_from = 0.0;
  double valid_to = 0.0;
};

struct ObjectiveWeights {
  double w_u = 1.0;
  double w_s = 1.0;
  double K = 1.0;

  void validate() const;
};

enum class CavMode { FreeDriving, AdaptiveFollowing };

/// Solves the FD boundary-value system: p(t0) = p0, v(t0) = v0, p(t_m) = L,
/// and a vanishing speed costate at t_m (free terminal speed, so u(t_m) = 0).
FdCoefficients solve_fd(double t0, double p0, double v0, double t_m, double L);

/// Cubic with both terminal conditions pinned: p(t_m) = L and v(t_m) = v_m.
/// Used when the free-terminal-speed optimum would cross the MZ slower than
/// the scheduler's speed floor.
FdCoefficients solve_fd_fixed_speed(double t0, double p0, double v0, double t_m, double L,
                                    double v_m);

Kinematics eval_fd(const FdCoefficients& c, double t);

/// True when the trajectory leaves [u_min, u_max] or [v_min, v_max]
/// anywhere on its window.
bool fd_violates_bounds(const FdCoefficients& c, const ConstraintBounds& bounds);

/// Shortest horizon t_m - t0 for which the unconstrained FD optimum covering
/// `distance` from speed v0 keeps its terminal speed <= v_max and its initial
/// acceleration <= u_max.
double fd_min_feasible_horizon(double v0, double distance, const ConstraintBounds& bounds);

/// Decay/oscillation rate of the AF homogeneous solution.
double af_alpha(const ObjectiveWeights& w);

/// Solves the AF boundary-value system: p(t1) = p1, v(t1) = v1, p(t_m) = L,
/// u(t_m) = 0, with the particular term pred.p + pred.v (t - t1) - delta.
AfCoefficients solve_af(double t1, double p1, double v1, double t_m, double L,
                        const PredecessorAnchor& pred, double delta,
                        const ObjectiveWeights& weights);

Kinematics eval_af(const AfCoefficients& c, double t);

CavMode transition_mode(double gap, double delta_f, VehicleClass predecessor_class,
                        CavMode current, bool follow_cav_predecessors = true);

struct ClampResult {
  double u = 0.0;
  bool saturated = false;
};

/// Clips u to the acceleration bounds and keeps one explicit step of length
/// dt from leaving the speed bounds.
ClampResult clamp_controls(double u, double v, const ConstraintBounds& bounds, double dt);

}  // namespace cavsim
