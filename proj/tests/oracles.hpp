#pragma once

#include <functional>
#include <vector>

#include "cavsim/cav_control.hpp"

namespace cavsim::oracle {

/// Trapezoidal direct collocation of
///   min  int_0^T  w_u u^2/2 + w_s (p - q(t))^2/2  dt
///   s.t. p' = v, v' = u, p(0) = p0, v(0) = v0, p(T) = L
/// on a uniform grid, solved as one sparse KKT system. With w_s = 0 this is
/// the discretized free-driving quadratic program.
struct Problem {
  double T = 0.0;
  double p0 = 0.0;
  double v0 = 0.0;
  double L = 0.0;
  double w_u = 1.0;
  double w_s = 0.0;
  std::function<double(double)> q;  // tracked position, only read when w_s > 0
  double dt = 0.01;
};

struct Solution {
  std::vector<double> t, p, v, u;
  double cost = 0.0;
};

Solution collocate(const Problem& pr);

/// Trapezoidal cost of the same functional along a closed-form trajectory,
/// sampled at step dt over [t0, t0 + T].
double closed_form_cost(const std::function<Kinematics(double)>& traj, double t0,
                        const Problem& pr);

}  // namespace cavsim::oracle
