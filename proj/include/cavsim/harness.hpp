#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cavsim/sim_engine.hpp"

namespace cavsim {

/// Modeling approaches compared in the experiments.
///   S1  CA3, CAVs follow non-CAVs with the Wiedemann law
///   S2  CA2, Wiedemann following
///   S3  CA2, optimal adaptive following
///   S4  CA2, Wiedemann following, smooth close-up drivers
///   S5  CA2, optimal adaptive following, smooth close-up drivers
///   TLC fixed-time signal
enum class Variant { S1, S2, S3, S4, S5, TLC };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

/// Copy of `base` with the rule, following law and close-up flag the variant
/// prescribes. Nothing else changes.
ScenarioConfig apply_variant(ScenarioConfig base, Variant v);

struct SweepSpec {
  std::vector<Variant> variants{Variant::S3};
  std::vector<double> penetrations;
  std::vector<double> flow_rates;
  std::vector<std::uint64_t> seeds;
  ScenarioConfig base;
  int jobs = 1;

  void validate() const;
};

/// Seeds 1..n.
std::vector<std::uint64_t> seed_range(std::uint64_t n);

struct CellKey {
  Variant variant = Variant::S3;
  double penetration = 0.0;
  double flow = 0.0;
};

struct RunRow {
  CellKey key;
  std::uint64_t seed = 0;
  double mean_energy_per_s = 0.0;
  double mean_travel_time = 0.0;
  int rear_end_violations = 0;
  int lateral_collisions = 0;
  int throughput = 0;
  int frozen = 0;
  int saturation_events = 0;
  std::string error;  // empty on success
};

/// Mean and standard deviation over the seeds of one cell that ran cleanly.
struct CellSummary {
  CellKey key;
  int runs = 0;
  int failed = 0;
  double energy_mean = 0.0, energy_std = 0.0;
  double travel_mean = 0.0, travel_std = 0.0;
  double rear_end_mean = 0.0, lateral_mean = 0.0;
  double throughput_mean = 0.0, frozen_mean = 0.0, saturation_mean = 0.0;
};

struct SweepResult {
  std::vector<RunRow> rows;          // cell-major, seeds in spec order
  std::vector<CellSummary> cells;    // variant, then penetration, then flow
};

/// Runs every (variant, penetration, flow, seed) combination. Cells run on
/// `spec.jobs` threads; the result does not depend on the thread count. A
/// failing run is recorded in its row and the sweep carries on.
SweepResult run_sweep(const SweepSpec& spec);

CellSummary summarize(const CellKey& key, const std::vector<RunRow>& rows);

/// Per-run CSV. The first ten columns are
///   variant,penetration,flow,seed,mean_energy_per_s,mean_travel_time_s,
///   rear_end_violations,lateral_collisions,throughput_veh,frozen_veh
/// followed by saturation_events and error. Each cell ends with a row whose
/// seed column reads "mean".
void write_runs_csv(std::ostream& out, const SweepResult& result);

/// Per-cell means and standard deviations.
void write_summary_csv(std::ostream& out, const SweepResult& result);

/// Shortest round-trip decimal for a double, locale independent.
std::string format_number(double x);

enum class SaturationLevel { Under, Near, Over };

std::string_view to_string(SaturationLevel s);

inline constexpr double kReferenceSaturationFlow = 900.0;  // [veh/h/lane]
inline constexpr double kCriticalFlow = 750.0;             // [veh/h/lane]
inline constexpr double kUnderSaturated = 0.85;

struct SaturationDiagnostics {
  double flow = 0.0;              // [veh/h/lane]
  double service_time = 0.0;      // mean MZ service time [s]
  double mu = 0.0;                // MZ service rate [veh/h]
  double lambda_s_estimate = 0.0; // 2 mu / approaches [veh/h/lane]
  double lambda_s = kReferenceSaturationFlow;
  double lambda_c = kCriticalFlow;
  double degree = 0.0;            // flow / lambda_s
  SaturationLevel level = SaturationLevel::Under;
  bool above_critical = false;    // flow >= lambda_c
};

/// Queueing view of the MZ: one conflicting crossing per service time, two
/// opposite approaches served together, so stability needs
/// sum(lambda) < 2 mu. The degree uses the reference saturation flow.
SaturationDiagnostics saturation(double flow, const ScenarioConfig& config);

void write_saturation(std::ostream& out, const SaturationDiagnostics& d);

/// Two vehicles on one lane: a non-CAV cruising at 10 m/s from t = 0 and a
/// CAV entering at t = 2 s with 15 m/s, scheduled behind it.
struct Fig5Setup {
  double cz_length = 400.0;
  double lead_speed = 10.0;
  double cav_entry = 2.0;
  double cav_speed = 15.0;
  double delta = 10.0;
  double delta_f = 10.0;
  bool adaptive_following = true;
  double dt = 0.01;
  ObjectiveWeights weights;
  ConstraintBounds bounds = fig5_bounds();
  EnergyModel energy_model = EnergyModel::half_u_squared();

  static ConstraintBounds fig5_bounds();
};

struct Fig5Sample {
  double t = 0.0;
  double p_lead = 0.0, v_lead = 0.0;
  double p_cav = 0.0, v_cav = 0.0, u_cav = 0.0;
  double gap = 0.0;
  CavMode mode = CavMode::FreeDriving;
};

struct Fig5Result {
  double t_m = 0.0;
  std::vector<Fig5Sample> samples;   // from the CAV's entry to t_m
  double af_engaged_at = -1.0;       // negative when AF never engaged
  double first_below_delta = -1.0;   // first time the gap drops below delta
  double min_gap = 0.0;
  double energy = 0.0;               // CAV energy under the setup's model
};

Fig5Result replicate_fig5(const Fig5Setup& setup);

void write_fig5_trace(std::ostream& out, const Fig5Result& result);

}  // namespace cavsim
