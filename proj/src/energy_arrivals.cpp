#include <cmath>
#include <sstream>

#include "cavsim/sim_engine.hpp"

namespace cavsim {

double energy_rate(double v, double u, const EnergyModel& model) {
  if (model.kind == EnergyModel::Kind::HalfUSquared) return 0.5 * u * u;
  const auto& c = model.coeffs;
  double rate = c[0] + v * (c[1] + v * (c[2] + v * c[3]));
  if (u > 0.0) rate += c[4] * u + c[5] * u * v + c[6] * u * u;
  return rate;
}

double energy(std::span<const double> t, std::span<const double> v, std::span<const double> u,
              const EnergyModel& model) {
  if (t.size() != v.size() || t.size() != u.size()) {
    throw DomainError("energy: sample arrays must have equal length");
  }
  double total = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    total += 0.5 * (energy_rate(v[k - 1], u[k - 1], model) + energy_rate(v[k], u[k], model)) *
             (t[k] - t[k - 1]);
  }
  return total;
}

void ScenarioConfig::validate() const {
  std::ostringstream errs;
  auto check = [&](auto&& fn, const char* field) {
    try {
      fn();
    } catch (const std::exception& e) {
      errs << field << ": " << e.what() << "; ";
    }
  };
  check([&] { geometry.validate(); }, "geometry");
  check([&] { bounds.validate(); }, "bounds");
  check([&] { weights.validate(); }, "weights");
  check([&] { wiedemann.validate(); }, "wiedemann");
  if (rule.kind == RuleKind::TLC) check([&] { rule.cycle.validate(); }, "rule.cycle");
  if (!(penetration >= 0.0 && penetration <= 1.0)) errs << "penetration: must be in [0, 1]; ";
  if (!(flow_rate > 0.0)) errs << "flow_rate: must be > 0; ";
  if (!(horizon >= 0.0)) errs << "horizon: must be >= 0; ";
  if (!(warmup >= 0.0)) errs << "warmup: must be >= 0; ";
  if (!(dt > 0.0)) errs << "dt: must be > 0; ";
  if (!(initial_speed_lo > 0.0 && initial_speed_lo <= initial_speed_hi)) {
    errs << "initial_speed: need 0 < lo <= hi; ";
  }
  if (!(mz_speed_floor >= 0.0)) errs << "mz_speed_floor: must be >= 0; ";
  if (!(stop_line_offset >= 0.0 && stop_line_offset < geometry.cz_length)) {
    errs << "stop_line_offset: must lie inside the CZ; ";
  }
  const std::string msg = errs.str();
  if (!msg.empty()) throw ConfigError("invalid scenario config: " + msg);
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return std::mt19937_64(mix(mix(mix(seed) ^ a) ^ (b << 8)));
}

}  // namespace

ArrivalStreams spawn_arrivals(double flow_rate, double horizon, std::uint64_t seed,
                              double penetration, double speed_lo, double speed_hi) {
  if (!(flow_rate > 0.0)) throw DomainError("spawn_arrivals: flow rate must be > 0");
  ArrivalStreams out;
  const double mean_headway = 3600.0 / flow_rate;
  for (int a = 0; a < kApproachCount; ++a) {
    auto times = stream(seed, static_cast<std::uint64_t>(a), 1);
    auto classes = stream(seed, static_cast<std::uint64_t>(a), 2);
    auto speeds = stream(seed, static_cast<std::uint64_t>(a), 3);
    double t = 0.0;
    while (true) {
      t += -std::log1p(-uniform01(times)) * mean_headway;
      if (t > horizon) break;
      Arrival arr;
      arr.t = t;
      arr.cls = uniform01(classes) < penetration ? VehicleClass::Cav : VehicleClass::NonCav;
      arr.v0 = speed_lo + (speed_hi - speed_lo) * uniform01(speeds);
      out[static_cast<std::size_t>(a)].push_back(arr);
    }
  }
  return out;
}

}  // namespace cavsim
