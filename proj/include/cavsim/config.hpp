#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include "cavsim/harness.hpp"
#include "cavsim/sim_engine.hpp"

namespace cavsim {

/// Flat `key = value` text. Blank lines and text after '#' are ignored.
/// Lists are comma separated; seeds also accept a range `a..b`.
///
/// Scenario keys (SI units: m, s, m/s, m/s^2):
///   cz_length mz_side approaches lanes_per_approach
///   u_min u_max v_min v_max delta delta_f
///   w_u w_s K
///   wiedemann.<field> for every WiedemannParams field
///   rule (CA1|CA2|CA3|TLC)  major_road (NS|EW)
///   green_ns green_ew all_red signal_offset
///   penetration flow_rate horizon warmup dt seed
///   initial_speed_lo initial_speed_hi
///   energy_model (half_u_squared|polynomial)  energy_coeffs (7 numbers)
///   cav_following (optimal|wiedemann)  af_behind_cavs (true|false)
///   mz_speed_floor stop_line_offset  collision_response (freeze|halt)
/// Sweep keys: variants penetrations flow_rates seeds jobs
void apply_scenario_key(ScenarioConfig& cfg, std::string_view key, std::string_view value);
void apply_sweep_key(SweepSpec& spec, std::string_view key, std::string_view value);

/// Errors name the line. Unknown keys are errors.
ScenarioConfig parse_scenario(std::istream& in);
SweepSpec parse_sweep(std::istream& in);

ScenarioConfig load_scenario(const std::string& path);
SweepSpec load_sweep(const std::string& path);

}  // namespace cavsim
