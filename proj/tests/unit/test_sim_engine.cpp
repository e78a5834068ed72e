#include <doctest.h>

#include <cmath>

#include "cavsim/sim_engine.hpp"

using namespace cavsim;

TEST_CASE("energy integral") {
  const std::vector<double> t{0, 1, 2, 3};
  const std::vector<double> zero(4, 0.0);
  const std::vector<double> v(4, 10.0);
  CHECK(energy(t, v, zero, EnergyModel::half_u_squared()) == 0);

  const double a = 0.02, b = -0.3, T = 30;
  std::vector<double> ts, us, vs;
  for (int k = 0; k <= 3000; ++k) {
    ts.push_back(k * 0.01);
    us.push_back(a * ts.back() + b);
    vs.push_back(10);
  }
  const double exact = 0.5 * (a * a * T * T * T / 3 + a * b * T * T + b * b * T);
  CHECK(energy(ts, vs, us, EnergyModel::half_u_squared()) == doctest::Approx(exact).epsilon(1e-3));
  CHECK_THROWS_AS(energy(t, v, std::vector<double>{0, 0}, EnergyModel::half_u_squared()),
                  DomainError);
}

TEST_CASE("polynomial energy gives no credit for braking") {
  const auto m = EnergyModel::polynomial({0.1, 0.01, 0.001, 0.0001, 0.05, 0.01, 0.01});
  CHECK(energy_rate(10, -2, m) == doctest::Approx(energy_rate(10, 0, m)));
  CHECK(energy_rate(10, 1, m) > energy_rate(10, 0, m));
}

TEST_CASE("arrival streams") {
  const auto a = spawn_arrivals(700, 36000, 4, 0.3, 10.9, 11.1);
  const auto b = spawn_arrivals(700, 36000, 4, 0.3, 10.9, 11.1);
  for (int lane = 0; lane < kApproachCount; ++lane) {
    const auto& s = a[static_cast<std::size_t>(lane)];
    REQUIRE(s.size() == b[static_cast<std::size_t>(lane)].size());
    const double mean = s.back().t / static_cast<double>(s.size());
    CHECK(mean == doctest::Approx(3600.0 / 700).epsilon(0.05));
    int cav = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      CHECK(s[k].t == b[static_cast<std::size_t>(lane)][k].t);
      CHECK(s[k].v0 >= 10.9);
      CHECK(s[k].v0 <= 11.1);
      cav += s[k].cls == VehicleClass::Cav;
    }
    CHECK(static_cast<double>(cav) / static_cast<double>(s.size()) == doctest::Approx(0.3).epsilon(0.1));
  }
}

TEST_CASE("config validation names the fields") {
  ScenarioConfig c;
  c.penetration = 2;
  c.dt = 0;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("penetration") != std::string::npos);
    CHECK(msg.find("dt") != std::string::npos);
  }
}

TEST_CASE("empty world stays empty") {
  World w(ScenarioConfig{});
  w.step();
  w.step();
  CHECK(w.active_count() == 0);
  CHECK(w.report().spawned == 0);
}

TEST_CASE("a lone CAV follows its free-driving plan to the MZ") {
  ScenarioConfig c;
  c.warmup = 0;
  World w(c);
  VehicleSpec s;
  s.cls = VehicleClass::Cav;
  s.v0 = 11;
  const auto id = w.add_vehicle(s);
  REQUIRE(w.queue()[id].record.has_value());
  const double t_m = w.queue()[id].record->t_m;
  while (w.time() + c.dt <= t_m + 1e-9) w.step();
  const auto snap = w.find(id);
  REQUIRE(snap);
  const double remaining = t_m - w.time();
  CHECK(std::abs(snap->p + snap->v * remaining - c.geometry.cz_length) < 0.1);
}

TEST_CASE("zero horizon gives an empty report") {
  ScenarioConfig c;
  c.horizon = 0;
  const auto r = run(c);
  CHECK(r.spawned == 0);
  CHECK(r.vehicles.empty());
}

TEST_CASE("runs are deterministic and conserve vehicles") {
  ScenarioConfig c;
  c.penetration = 0.5;
  c.flow_rate = 500;
  c.horizon = 400;
  c.warmup = 60;
  const auto a = run(c);
  const auto b = run(c);
  CHECK(a.mean_energy_per_s == b.mean_energy_per_s);
  CHECK(a.mean_travel_time == b.mean_travel_time);
  CHECK(a.vehicles.size() == b.vehicles.size());
  CHECK(a.spawned == a.in_system + a.departed);
  CHECK(a.min_speed >= 0.0);
  CHECK(a.max_cav_speed <= c.bounds.v_max + 1e-9);
}

TEST_CASE("full penetration at light traffic is collision free") {
  ScenarioConfig c;
  c.penetration = 1.0;
  c.flow_rate = 400;
  c.horizon = 600;
  for (std::uint64_t seed : {1, 2}) {
    c.seed = seed;
    const auto r = run(c);
    CHECK(r.rear_end_violations == 0);
    CHECK(r.lateral_collisions == 0);
    CHECK(r.throughput > 0);
  }
}

TEST_CASE("trace rows carry every vehicle every step") {
  ScenarioConfig c;
  c.flow_rate = 300;
  c.horizon = 60;
  std::size_t rows = 0;
  double last_t = -1;
  bool ordered = true;
  run(c, [&](const TraceRow& r) {
    ++rows;
    ordered = ordered && r.t >= last_t;
    last_t = r.t;
  });
  CHECK(rows > 0);
  CHECK(ordered);
}
