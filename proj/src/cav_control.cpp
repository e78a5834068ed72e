#include "cavsim/cav_control.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace cavsim {

namespace {

constexpr double kResidualTol = 1e-9;
constexpr double kWindowSlack = 1e-9;
// Largest alpha * horizon for which e^{alpha t} stays well inside double range.
constexpr double kMaxAlphaHorizon = 600.0;

void check_window(double t, double from, double to, const char* who) {
  if (t < from - kWindowSlack || t > to + kWindowSlack) {
    throw DomainError(std::string(who) + ": time outside the trajectory window");
  }
}

}  // namespace

void ObjectiveWeights::validate() const {
  if (!(w_u > 0.0)) throw DomainError("weights: w_u must be > 0");
  if (!(w_s >= 0.0)) throw DomainError("weights: w_s must be >= 0");
  if (!(K > 0.0)) throw DomainError("weights: K must be > 0");
}

FdCoefficients FdCoefficients::in_absolute_time() const {
  const double o = origin;
  FdCoefficients out = *this;
  out.origin = 0.0;
  out.a = a;
  out.b = b - a * o;
  out.c = a * o * o / 2.0 - b * o + c;
  out.d = -a * o * o * o / 6.0 + b * o * o / 2.0 - c * o + d;
  return out;
}

FdCoefficients solve_fd(double t0, double p0, double v0, double t_m, double L) {
  const double T = t_m - t0;
  if (!(T > 1e-9)) throw DegenerateHorizon("solve_fd: terminal time must exceed entry time");

  // p(T) = L and u(T) = 0 in time measured from t0.
  const double D = L - p0 - v0 * T;
  const double a = -3.0 * D / (T * T * T);
  FdCoefficients c{a, -a * T, v0, p0, t0, t0, t_m};
  if (!std::isfinite(a)) throw ConditioningError("solve_fd: non-finite coefficients");
  return c;
}

FdCoefficients solve_fd_fixed_speed(double t0, double p0, double v0, double t_m, double L,
                                    double v_m) {
  const double T = t_m - t0;
  if (!(T > 1e-9)) throw DegenerateHorizon("solve_fd_fixed_speed: terminal time must exceed entry time");
  const double D = L - p0 - v0 * T;
  const double E = v_m - v0;
  const double a = (6.0 * E * T - 12.0 * D) / (T * T * T);
  return {a, E / T - 0.5 * a * T, v0, p0, t0, t0, t_m};
}

Kinematics eval_fd(const FdCoefficients& c, double t) {
  check_window(t, c.valid_from, c.valid_to, "eval_fd");
  const double s = t - c.origin;
  return {c.a * s + c.b,
          0.5 * c.a * s * s + c.b * s + c.c,
          c.a * s * s * s / 6.0 + 0.5 * c.b * s * s + c.c * s + c.d};
}

bool fd_violates_bounds(const FdCoefficients& c, const ConstraintBounds& bounds) {
  const double tol = 1e-9;
  const Kinematics k0 = eval_fd(c, c.valid_from);
  const Kinematics k1 = eval_fd(c, c.valid_to);
  // u is affine, so its extremes sit on the window ends.
  if (std::min(k0.u, k1.u) < bounds.u_min - tol || std::max(k0.u, k1.u) > bounds.u_max + tol) {
    return true;
  }
  double v_lo = std::min(k0.v, k1.v);
  double v_hi = std::max(k0.v, k1.v);
  if (c.a != 0.0) {
    const double t_star = c.origin - c.b / c.a;  // u(t_star) = 0
    if (t_star > c.valid_from && t_star < c.valid_to) {
      const double vs = eval_fd(c, t_star).v;
      v_lo = std::min(v_lo, vs);
      v_hi = std::max(v_hi, vs);
    }
  }
  return v_lo < bounds.v_min - tol || v_hi > bounds.v_max + tol;
}

double fd_min_feasible_horizon(double v0, double distance, const ConstraintBounds& bounds) {
  if (!(distance > 0.0)) return 0.0;
  // Terminal speed of the free-terminal-speed optimum: 1.5 d/T - 0.5 v0.
  const double by_speed = 1.5 * distance / (bounds.v_max + 0.5 * v0);
  // Initial acceleration 3 (d - v0 T) / T^2 <= u_max.
  const double um = bounds.u_max;
  const double by_accel =
      (-3.0 * v0 + std::sqrt(9.0 * v0 * v0 + 12.0 * um * distance)) / (2.0 * um);
  return std::max(by_speed, by_accel);
}

double af_alpha(const ObjectiveWeights& w) {
  const double ww = std::sqrt(4.0 * w.w_u * w.w_s) / (2.0 * w.w_u);
  return std::sqrt(ww / 2.0);
}

namespace {

// Position basis and its first two derivatives at tau, with the growing
// modes multiplied by `grow_scale` (e^{-alpha T} when solving).
struct Basis {
  Eigen::Vector4d p, v, u;
};

Basis basis(double alpha, double tau, double grow_scale) {
  const double eg = std::exp(alpha * tau) * grow_scale;
  const double ed = std::exp(-alpha * tau);
  const double cs = std::cos(alpha * tau);
  const double sn = std::sin(alpha * tau);
  const double a2 = 2.0 * alpha * alpha;
  Basis b;
  b.p << eg * cs, ed * cs, eg * sn, ed * sn;
  b.v << alpha * eg * (cs - sn), -alpha * ed * (cs + sn), alpha * eg * (cs + sn),
      alpha * ed * (cs - sn);
  b.u << -a2 * eg * sn, a2 * ed * sn, a2 * eg * cs, -a2 * ed * cs;
  return b;
}

}  // namespace

AfCoefficients solve_af(double t1, double p1, double v1, double t_m, double L,
                        const PredecessorAnchor& pred, double delta,
                        const ObjectiveWeights& weights) {
  weights.validate();
  if (!(weights.w_s > 0.0)) throw DomainError("solve_af: w_s must be > 0");
  const double T = t_m - t1;
  if (!(T > 1e-9)) throw DegenerateHorizon("solve_af: terminal time must exceed engagement time");
  const double alpha = af_alpha(weights);
  if (alpha * T > kMaxAlphaHorizon) {
    throw ConditioningError(
        "solve_af: alpha * (t_m - t1) too large; shorten the horizon or re-scale the time origin to t1");
  }

  const double scale = std::exp(-alpha * T);
  const Basis b0 = basis(alpha, 0.0, scale);
  const Basis bT = basis(alpha, T, scale);
  const double q0 = pred.p - delta;
  const double qT = pred.p + pred.v * T - delta;

  Eigen::Matrix4d A;
  A.row(0) = b0.p.transpose();
  A.row(1) = b0.v.transpose();
  A.row(2) = bT.p.transpose();
  A.row(3) = bT.u.transpose();
  const Eigen::Vector4d rhs(p1 - q0, v1 - pred.v, L - qT, 0.0);

  const Eigen::JacobiSVD<Eigen::Matrix4d> svd(A);
  const auto& sv = svd.singularValues();
  if (!(sv(3) > 1e-13 * sv(0))) {
    throw ConditioningError(
        "solve_af: boundary system is near-singular; re-scale the time origin to t1");
  }
  const Eigen::Vector4d x = A.partialPivLu().solve(rhs);

  AfCoefficients c;
  c.a = x(0) * scale;
  c.b = x(1);
  c.c = x(2) * scale;
  c.d = x(3);
  c.alpha = alpha;
  c.delta = delta;
  c.anchor = pred;
  c.origin = t1;
  c.valid_from = t1;
  c.valid_to = t_m;

  const Kinematics k0 = eval_af(c, t1);
  const Kinematics kT = eval_af(c, t_m);
  const double tol = kResidualTol * std::max(1.0, std::abs(L));
  if (!(std::abs(k0.p - p1) < tol && std::abs(k0.v - v1) < tol && std::abs(kT.p - L) < tol &&
        std::abs(kT.u) < tol)) {
    throw ConditioningError("solve_af: boundary residual exceeds tolerance");
  }
  return c;
}

Kinematics eval_af(const AfCoefficients& c, double t) {
  check_window(t, c.valid_from, c.valid_to, "eval_af");
  const double tau = t - c.origin;
  const double al = c.alpha;
  const double eg = std::exp(al * tau);
  const double ed = std::exp(-al * tau);
  const double cs = std::cos(al * tau);
  const double sn = std::sin(al * tau);
  const double a2 = 2.0 * al * al;
  Kinematics k;
  k.u = -c.a * a2 * eg * sn + c.b * a2 * ed * sn + c.c * a2 * eg * cs - c.d * a2 * ed * cs;
  k.v = c.a * al * eg * (cs - sn) - c.b * al * ed * (cs + sn) + c.c * al * eg * (cs + sn) +
        c.d * al * ed * (cs - sn) + c.anchor.v;
  k.p = c.a * eg * cs + c.b * ed * cs + c.c * eg * sn + c.d * ed * sn + c.anchor.p +
        c.anchor.v * tau - c.delta;
  return k;
}

CavMode transition_mode(double gap, double delta_f, VehicleClass predecessor_class,
                        CavMode current, bool follow_cav_predecessors) {
  if (current == CavMode::AdaptiveFollowing) return current;
  if (predecessor_class == VehicleClass::Cav && !follow_cav_predecessors) return current;
  return gap <= delta_f ? CavMode::AdaptiveFollowing : CavMode::FreeDriving;
}

ClampResult clamp_controls(double u, double v, const ConstraintBounds& bounds, double dt) {
  double out = std::clamp(u, bounds.u_min, bounds.u_max);
  if (dt > 0.0) {
    out = std::min(out, (bounds.v_max - v) / dt);
    out = std::max(out, (bounds.v_min - v) / dt);
    out = std::clamp(out, bounds.u_min, bounds.u_max);
  }
  return {out, out != u};
}

}  // namespace cavsim
