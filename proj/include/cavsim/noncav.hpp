#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace cavsim {

/// Four-mode psychophysical car-following parameters (Wiedemann-74 style).
///
/// Threshold structure, with bx(v) = (bx_add + 0.5 bx_mult) sqrt(max(v, 1 m/s)):
///   desired gap      ABX = ax + bx(v)
///   following limit  SDX = ax + follow_range * bx(v)
///   approach range   SDV = SDX + dv^2 / (2 approach_decel)       (dv > 0)
/// Smooth close-up divides approach_decel by smooth_factor, so drivers start
/// closing in earlier and need a gentler constant deceleration.
struct WiedemannParams {
  double desired_speed = 11.0;  // [m/s]
  double ax = 2.0;              // standstill distance [m]
  double bx_add = 2.0;
  double bx_mult = 3.0;
  double max_decel = -6.0;      // [m/s^2]
  double comfort_decel = -2.0;  // [m/s^2]
  double comfort_accel = 2.0;   // [m/s^2]
  double free_gain = 0.5;       // speed-error gain in free driving [1/s]
  double follow_range = 2.0;
  double approach_decel = 1.0;  // [m/s^2]
  bool smooth_closeup = false;
  double smooth_factor = 2.0;
  double dither_amplitude = 0.5;  // following-mode oscillation [m/s^2]
  double dither_period = 1.0;     // [s]
  double jitter = 0.05;           // per-driver relative spread

  void validate() const;
};

enum class DriverMode { FreeDriving, Approaching, Following, Braking };

std::string_view to_string(DriverMode m);

struct LeaderView {
  double gap = 0.0;  // leader position minus own position [m]
  double v = 0.0;    // leader speed [m/s]
};

double desired_gap(double v, const WiedemannParams& params);
double max_following_gap(double v, const WiedemannParams& params);
double approach_distance(double v, double dv, const WiedemannParams& params);

/// dv is the closing speed (own speed minus leader speed). A missing leader
/// is passed as gap = +inf.
DriverMode classify_mode(double gap, double dv, double v, const WiedemannParams& params);

/// Acceleration for the given mode. `dither` is the current following-mode
/// oscillation draw in [-1, 1].
double acceleration(DriverMode mode, double v, const std::optional<LeaderView>& leader,
                    const WiedemannParams& params, double dither = 0.0);

/// classify_mode followed by acceleration.
double drive(double v, const std::optional<LeaderView>& leader, const WiedemannParams& params,
             double dither, DriverMode* mode_out = nullptr);

/// Piecewise-constant oscillation draw in [-1, 1], held for dither_period and
/// keyed by (stream, t) only, so it does not depend on the step size.
double dither_at(std::uint64_t stream, double t, double period);

/// Per-driver heterogeneity: desired speed and gap parameters spread
/// uniformly within +-jitter of the base values.
WiedemannParams sample_driver(const WiedemannParams& base, std::mt19937_64& rng);

/// Portable uniform draw in [0, 1).
double uniform01(std::mt19937_64& rng);

}  // namespace cavsim
