#include "cavsim/noncav.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string_view>

#include "cavsim/core.hpp"

namespace cavsim {

void WiedemannParams::validate() const {
  if (!(max_decel < comfort_decel && comfort_decel < 0.0 && 0.0 < comfort_accel)) {
    throw DomainError("wiedemann: need max_decel < comfort_decel < 0 < comfort_accel");
  }
  if (!(ax > 0.0)) throw DomainError("wiedemann: ax must be > 0");
  if (!(desired_speed > 0.0)) throw DomainError("wiedemann: desired_speed must be > 0");
  if (!(follow_range >= 1.0)) throw DomainError("wiedemann: follow_range must be >= 1");
  if (!(approach_decel > 0.0 && smooth_factor >= 1.0)) {
    throw DomainError("wiedemann: approach_decel > 0 and smooth_factor >= 1 required");
  }
  if (!(dither_period > 0.0 && dither_amplitude >= 0.0)) {
    throw DomainError("wiedemann: dither_period > 0 and dither_amplitude >= 0 required");
  }
  if (!(jitter >= 0.0 && jitter < 1.0)) throw DomainError("wiedemann: jitter must be in [0, 1)");
}

std::string_view to_string(DriverMode m) {
  switch (m) {
    case DriverMode::FreeDriving: return "free";
    case DriverMode::Approaching: return "approach";
    case DriverMode::Following: return "follow";
    case DriverMode::Braking: return "brake";
  }
  return "?";
}

namespace {

// Thresholds are read at no less than this speed, so a queued driver does
// not pull away into a gap that closes again one step later.
constexpr double kStartupSpeed = 1.0;  // [m/s]

double bx(double v, const WiedemannParams& p) {
  return (p.bx_add + 0.5 * p.bx_mult) * std::sqrt(std::max(v, kStartupSpeed));
}

double effective_approach_decel(const WiedemannParams& p) {
  return p.smooth_closeup ? p.approach_decel / p.smooth_factor : p.approach_decel;
}

double free_accel(double v, const WiedemannParams& p) {
  return std::clamp(p.free_gain * (p.desired_speed - v), p.comfort_decel, p.comfort_accel);
}

}  // namespace

double desired_gap(double v, const WiedemannParams& params) { return params.ax + bx(v, params); }

double max_following_gap(double v, const WiedemannParams& params) {
  return params.ax + params.follow_range * bx(v, params);
}

double approach_distance(double v, double dv, const WiedemannParams& params) {
  const double closing = dv > 0.0 ? dv * dv / (2.0 * effective_approach_decel(params)) : 0.0;
  return max_following_gap(v, params) + closing;
}

DriverMode classify_mode(double gap, double dv, double v, const WiedemannParams& params) {
  if (!std::isfinite(gap)) return DriverMode::FreeDriving;
  const double abx = desired_gap(v, params);
  if (gap <= abx) return DriverMode::Braking;
  if (dv > 0.0 && dv * dv / (2.0 * (gap - abx)) > -params.comfort_decel) {
    return DriverMode::Braking;
  }
  if (gap > approach_distance(v, dv, params)) return DriverMode::FreeDriving;
  if (dv > 0.0 &&
      (gap > max_following_gap(v, params) ||
       dv * dv / (2.0 * (gap - abx)) > 0.25 * params.comfort_accel)) {
    return DriverMode::Approaching;
  }
  return DriverMode::Following;
}

double acceleration(DriverMode mode, double v, const std::optional<LeaderView>& leader,
                    const WiedemannParams& params, double dither) {
  const double u_free = free_accel(v, params);
  if (mode == DriverMode::FreeDriving || !leader) return u_free;

  const double gap = leader->gap;
  const double dv = v - leader->v;
  const double abx = desired_gap(v, params);

  switch (mode) {
    case DriverMode::Approaching: {
      if (dv <= 0.0) return std::min(u_free, 0.0);
      const double room = std::max(gap - abx, 1e-3);
      return std::clamp(-dv * dv / (2.0 * room), params.max_decel, 0.0);
    }
    case DriverMode::Following: {
      const double band = 0.25 * params.comfort_accel;
      const double mid = 0.5 * (abx + max_following_gap(v, params));
      const double u = 0.05 * (gap - mid) - 0.5 * dv + params.dither_amplitude * dither;
      return std::min(std::clamp(u, -band, band), u_free);
    }
    case DriverMode::Braking: {
      if (v <= 0.0) return 0.0;
      if (gap <= params.ax) return params.max_decel;
      const double base = dv > 0.0 ? -dv * dv / (2.0 * std::max(gap - params.ax, 1e-2)) : 0.0;
      const double shortfall = std::clamp((abx - gap) / abx, 0.0, 1.0);
      const double recover = params.comfort_decel * shortfall;
      return std::max(params.max_decel, std::min({base, recover, u_free}));
    }
    case DriverMode::FreeDriving:
      break;
  }
  return u_free;
}

double drive(double v, const std::optional<LeaderView>& leader, const WiedemannParams& params,
             double dither, DriverMode* mode_out) {
  const double gap = leader ? leader->gap : std::numeric_limits<double>::infinity();
  const double dv = leader ? v - leader->v : 0.0;
  const DriverMode mode = classify_mode(gap, dv, v, params);
  if (mode_out) *mode_out = mode;
  return acceleration(mode, v, leader, params, dither);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

double dither_at(std::uint64_t stream, double t, double period) {
  const auto slot = static_cast<std::int64_t>(std::floor(t / period));
  const std::uint64_t h = splitmix64(stream ^ splitmix64(static_cast<std::uint64_t>(slot)));
  return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

WiedemannParams sample_driver(const WiedemannParams& base, std::mt19937_64& rng) {
  WiedemannParams out = base;
  if (base.jitter == 0.0) return out;
  auto spread = [&](double x) { return x * (1.0 + base.jitter * (2.0 * uniform01(rng) - 1.0)); };
  out.desired_speed = spread(base.desired_speed);
  out.ax = spread(base.ax);
  out.bx_add = spread(base.bx_add);
  out.bx_mult = spread(base.bx_mult);
  return out;
}

}  // namespace cavsim
