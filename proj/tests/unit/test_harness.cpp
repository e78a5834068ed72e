#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cavsim/config.hpp"
#include "cavsim/harness.hpp"

using namespace cavsim;

namespace {

// Everything apart from the three fields a variant may toggle.
bool same_apart_from_variant_fields(ScenarioConfig a, ScenarioConfig b) {
  a.rule.kind = b.rule.kind;
  a.cav_following = b.cav_following;
  a.wiedemann.smooth_closeup = b.wiedemann.smooth_closeup;
  std::ostringstream x, y;
  auto dump = [](std::ostream& o, const ScenarioConfig& c) {
    o << c.geometry.cz_length << c.geometry.mz_side << c.bounds.u_min << c.bounds.u_max
      << c.bounds.v_max << c.bounds.delta << c.bounds.delta_f << c.weights.w_u << c.weights.w_s
      << c.wiedemann.ax << c.wiedemann.bx_add << c.wiedemann.smooth_factor
      << static_cast<int>(c.rule.kind) << static_cast<int>(c.rule.major) << c.rule.cycle.green_ns
      << c.penetration << c.flow_rate << c.horizon << c.warmup << c.dt << c.seed
      << c.initial_speed_lo << c.initial_speed_hi << static_cast<int>(c.cav_following)
      << c.af_behind_cavs << c.mz_speed_floor << c.stop_line_offset << c.wiedemann.smooth_closeup;
  };
  dump(x, a);
  dump(y, b);
  return x.str() == y.str();
}

}  // namespace

TEST_CASE("variants toggle only rule, following law and close-up") {
  ScenarioConfig base;
  base.penetration = 0.4;
  base.flow_rate = 650;
  const auto s1 = apply_variant(base, Variant::S1);
  const auto s2 = apply_variant(base, Variant::S2);
  const auto s3 = apply_variant(base, Variant::S3);
  const auto s4 = apply_variant(base, Variant::S4);
  const auto s5 = apply_variant(base, Variant::S5);
  const auto tlc = apply_variant(base, Variant::TLC);
  CHECK(s1.rule.kind == RuleKind::CA3_Full);
  CHECK(s1.cav_following == CavFollowing::Wiedemann);
  CHECK(s2.rule.kind == RuleKind::CA2_Partial);
  CHECK(s2.cav_following == CavFollowing::Wiedemann);
  CHECK_FALSE(s2.wiedemann.smooth_closeup);
  CHECK(s3.cav_following == CavFollowing::Optimal);
  CHECK_FALSE(s3.wiedemann.smooth_closeup);
  CHECK(s4.wiedemann.smooth_closeup);
  CHECK(s4.cav_following == CavFollowing::Wiedemann);
  CHECK(s5.wiedemann.smooth_closeup);
  CHECK(s5.cav_following == CavFollowing::Optimal);
  CHECK(tlc.rule.kind == RuleKind::TLC);
  for (const auto& v : {s1, s2, s3, s4, s5, tlc}) CHECK(same_apart_from_variant_fields(v, base));
}

TEST_CASE("variant names round trip") {
  for (Variant v : {Variant::S1, Variant::S2, Variant::S3, Variant::S4, Variant::S5, Variant::TLC}) {
    CHECK(parse_variant(to_string(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("S9"), ConfigError);
}

TEST_CASE("config text") {
  std::istringstream in(
      "# comment\n"
      "penetration = 0.3   # trailing\n"
      "flow_rate=650\n"
      "rule = CA3\n"
      "wiedemann.smooth_closeup = true\n"
      "energy_model = polynomial\n"
      "energy_coeffs = 1,2,3,4,5,6,7\n"
      "variants = S1, TLC\n"
      "penetrations = 0, 0.5\n"
      "flow_rates = 500\n"
      "seeds = 1..3, 9\n");
  const SweepSpec s = parse_sweep(in);
  CHECK(s.base.penetration == doctest::Approx(0.3));
  CHECK(s.base.flow_rate == doctest::Approx(650));
  CHECK(s.base.rule.kind == RuleKind::CA3_Full);
  CHECK(s.base.wiedemann.smooth_closeup);
  CHECK(s.base.energy_model.kind == EnergyModel::Kind::Polynomial);
  CHECK(s.base.energy_model.coeffs[6] == 7);
  CHECK(s.variants == std::vector<Variant>{Variant::S1, Variant::TLC});
  CHECK(s.seeds == std::vector<std::uint64_t>{1, 2, 3, 9});

  std::istringstream bad("dt = 0.05\nbogus = 1\n");
  try {
    parse_scenario(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream bad_value("dt = fast\n");
  CHECK_THROWS_AS(parse_scenario(bad_value), ConfigError);
  std::istringstream bad_range("penetrations = 0, 1.5\nflow_rates = 500\n");
  CHECK_THROWS_AS(parse_sweep(bad_range), ConfigError);
}

TEST_CASE("sweep rows, aggregates and determinism across threads") {
  SweepSpec spec;
  spec.penetrations = {0, 0.5, 1.0};
  spec.flow_rates = {400};
  spec.seeds = {1, 2};
  spec.base.horizon = 150;
  spec.base.warmup = 30;
  const auto r1 = run_sweep(spec);
  CHECK(r1.rows.size() == 6);
  CHECK(r1.cells.size() == 3);
  std::ostringstream a;
  write_runs_csv(a, r1);
  const std::string csv = a.str();
  CHECK(csv.rfind("variant,penetration,flow,seed,mean_energy_per_s,mean_travel_time_s,"
                  "rear_end_violations,lateral_collisions,throughput_veh,frozen_veh",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 + 3);

  spec.jobs = 3;
  std::ostringstream b;
  write_runs_csv(b, run_sweep(spec));
  CHECK(b.str() == csv);

  std::ostringstream s;
  write_summary_csv(s, r1);
  const std::string summary = s.str();
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + 3);
}

TEST_CASE("cell summary statistics") {
  std::vector<RunRow> rows(3);
  rows[0].mean_energy_per_s = 1;
  rows[1].mean_energy_per_s = 3;
  rows[2].error = "boom";
  const auto s = summarize({}, rows);
  CHECK(s.runs == 3);
  CHECK(s.failed == 1);
  CHECK(s.energy_mean == doctest::Approx(2));
  CHECK(s.energy_std == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("saturation degree and flags") {
  const ScenarioConfig c;
  auto d = saturation(750, c);
  CHECK(d.degree == doctest::Approx(750.0 / 900));
  CHECK(d.level == SaturationLevel::Under);
  CHECK(d.above_critical);
  d = saturation(900, c);
  CHECK(d.degree == doctest::Approx(1.0));
  CHECK(d.level == SaturationLevel::Near);
  d = saturation(500, c);
  CHECK(d.degree == doctest::Approx(0.5556).epsilon(1e-3));
  CHECK(d.level == SaturationLevel::Under);
  CHECK_FALSE(d.above_critical);
  CHECK(saturation(800, c).level == SaturationLevel::Near);
  CHECK(saturation(1000, c).level == SaturationLevel::Over);
  CHECK(d.mu > 0);
  CHECK_THROWS_AS(saturation(0, c), DomainError);
}

TEST_CASE("two-vehicle following scenario") {
  Fig5Setup plain;
  plain.adaptive_following = false;
  const auto r = replicate_fig5(plain);
  CHECK(r.t_m == doctest::Approx(41));
  CHECK(r.first_below_delta == doctest::Approx(4.22).epsilon(0.25 / 4.22));
  CHECK(r.af_engaged_at < 0);

  const std::array<double, 7> models[] = {{0.1, 0.01, 0.001, 0.0001, 0.05, 0.01, 0.01},
                                           {0.5, 0.0, 0.002, 0.0, 0.2, 0.05, 0.1}};
  for (const auto& coeffs : models) {
    double e[2];
    int k = 0;
    for (double df : {10.0, 15.0}) {
      Fig5Setup s;
      s.delta_f = df;
      s.energy_model = EnergyModel::polynomial(coeffs);
      const auto res = replicate_fig5(s);
      CHECK(res.af_engaged_at >= 0);
      CHECK(res.min_gap > 0);
      for (const auto& x : res.samples) {
        if (x.t > res.af_engaged_at + 5) {
          CHECK(x.gap >= s.delta - 1);
          CHECK(x.gap <= s.delta + 1);
        }
      }
      e[k++] = res.energy;
    }
    CHECK(e[1] < e[0]);
  }
}
