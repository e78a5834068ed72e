#include "cavsim/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

namespace cavsim {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view s) {
  s = trim(s);
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("not a number: '" + std::string(s) + "'");
  }
  return x;
}

std::uint64_t to_uint(std::string_view s) {
  s = trim(s);
  std::uint64_t x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("not a non-negative integer: '" + std::string(s) + "'");
  }
  return x;
}

int to_int(std::string_view s) {
  const std::uint64_t x = to_uint(s);
  if (x > 1'000'000) throw ConfigError("integer out of range: '" + std::string(s) + "'");
  return static_cast<int>(x);
}

bool to_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("not a boolean: '" + std::string(s) + "'");
}

std::vector<std::string_view> split(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto k = s.find(',');
    const auto item = trim(s.substr(0, k));
    if (item.empty()) throw ConfigError("empty list item");
    out.push_back(item);
    if (k == std::string_view::npos) return out;
    s.remove_prefix(k + 1);
  }
}

std::vector<double> to_doubles(std::string_view s) {
  std::vector<double> out;
  for (auto item : split(s)) out.push_back(to_double(item));
  return out;
}

using Setter = std::function<void(ScenarioConfig&, std::string_view)>;

Setter num(double ScenarioConfig::*field) {
  return [field](ScenarioConfig& c, std::string_view v) { c.*field = to_double(v); };
}

template <class Part>
Setter num(Part ScenarioConfig::*part, double Part::*field) {
  return [part, field](ScenarioConfig& c, std::string_view v) { (c.*part).*field = to_double(v); };
}

const std::map<std::string, Setter, std::less<>>& scenario_setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    using C = ScenarioConfig;
    using W = WiedemannParams;
    std::map<std::string, Setter, std::less<>> m;
    m["cz_length"] = num(&C::geometry, &IntersectionGeometry::cz_length);
    m["mz_side"] = num(&C::geometry, &IntersectionGeometry::mz_side);
    m["approaches"] = [](C& c, std::string_view v) { c.geometry.approaches = to_int(v); };
    m["lanes_per_approach"] = [](C& c, std::string_view v) {
      c.geometry.lanes_per_approach = to_int(v);
    };
    m["u_min"] = num(&C::bounds, &ConstraintBounds::u_min);
    m["u_max"] = num(&C::bounds, &ConstraintBounds::u_max);
    m["v_min"] = num(&C::bounds, &ConstraintBounds::v_min);
    m["v_max"] = num(&C::bounds, &ConstraintBounds::v_max);
    m["delta"] = num(&C::bounds, &ConstraintBounds::delta);
    m["delta_f"] = num(&C::bounds, &ConstraintBounds::delta_f);
    m["w_u"] = num(&C::weights, &ObjectiveWeights::w_u);
    m["w_s"] = num(&C::weights, &ObjectiveWeights::w_s);
    m["K"] = num(&C::weights, &ObjectiveWeights::K);
    for (auto [name, field] : std::initializer_list<std::pair<const char*, double W::*>>{
             {"desired_speed", &W::desired_speed},
             {"ax", &W::ax},
             {"bx_add", &W::bx_add},
             {"bx_mult", &W::bx_mult},
             {"max_decel", &W::max_decel},
             {"comfort_decel", &W::comfort_decel},
             {"comfort_accel", &W::comfort_accel},
             {"free_gain", &W::free_gain},
             {"follow_range", &W::follow_range},
             {"approach_decel", &W::approach_decel},
             {"smooth_factor", &W::smooth_factor},
             {"dither_amplitude", &W::dither_amplitude},
             {"dither_period", &W::dither_period},
             {"jitter", &W::jitter}}) {
      m[std::string("wiedemann.") + name] = num(&C::wiedemann, field);
    }
    m["wiedemann.smooth_closeup"] = [](C& c, std::string_view v) {
      c.wiedemann.smooth_closeup = to_bool(v);
    };
    m["rule"] = [](C& c, std::string_view v) {
      v = trim(v);
      if (v == "CA1") c.rule.kind = RuleKind::CA1_Passive;
      else if (v == "CA2") c.rule.kind = RuleKind::CA2_Partial;
      else if (v == "CA3") c.rule.kind = RuleKind::CA3_Full;
      else if (v == "TLC") c.rule.kind = RuleKind::TLC;
      else throw ConfigError("rule must be CA1, CA2, CA3 or TLC");
    };
    m["major_road"] = [](C& c, std::string_view v) {
      v = trim(v);
      if (v == "NS") c.rule.major = Road::NorthSouth;
      else if (v == "EW") c.rule.major = Road::EastWest;
      else throw ConfigError("major_road must be NS or EW");
    };
    m["green_ns"] = [](C& c, std::string_view v) { c.rule.cycle.green_ns = to_double(v); };
    m["green_ew"] = [](C& c, std::string_view v) { c.rule.cycle.green_ew = to_double(v); };
    m["all_red"] = [](C& c, std::string_view v) { c.rule.cycle.all_red = to_double(v); };
    m["signal_offset"] = [](C& c, std::string_view v) { c.rule.cycle.offset = to_double(v); };
    m["penetration"] = num(&C::penetration);
    m["flow_rate"] = num(&C::flow_rate);
    m["horizon"] = num(&C::horizon);
    m["warmup"] = num(&C::warmup);
    m["dt"] = num(&C::dt);
    m["seed"] = [](C& c, std::string_view v) { c.seed = to_uint(v); };
    m["initial_speed_lo"] = num(&C::initial_speed_lo);
    m["initial_speed_hi"] = num(&C::initial_speed_hi);
    m["energy_model"] = [](C& c, std::string_view v) {
      v = trim(v);
      if (v == "half_u_squared") c.energy_model.kind = EnergyModel::Kind::HalfUSquared;
      else if (v == "polynomial") c.energy_model.kind = EnergyModel::Kind::Polynomial;
      else throw ConfigError("energy_model must be half_u_squared or polynomial");
    };
    m["energy_coeffs"] = [](C& c, std::string_view v) {
      const auto xs = to_doubles(v);
      if (xs.size() != c.energy_model.coeffs.size()) {
        throw ConfigError("energy_coeffs needs exactly 7 numbers");
      }
      std::copy(xs.begin(), xs.end(), c.energy_model.coeffs.begin());
    };
    m["cav_following"] = [](C& c, std::string_view v) {
      v = trim(v);
      if (v == "optimal") c.cav_following = CavFollowing::Optimal;
      else if (v == "wiedemann") c.cav_following = CavFollowing::Wiedemann;
      else throw ConfigError("cav_following must be optimal or wiedemann");
    };
    m["af_behind_cavs"] = [](C& c, std::string_view v) { c.af_behind_cavs = to_bool(v); };
    m["mz_speed_floor"] = num(&C::mz_speed_floor);
    m["stop_line_offset"] = num(&C::stop_line_offset);
    m["collision_response"] = [](C& c, std::string_view v) {
      v = trim(v);
      if (v == "freeze") c.collision_response = CollisionResponse::RecordAndFreeze;
      else if (v == "halt") c.collision_response = CollisionResponse::Halt;
      else throw ConfigError("collision_response must be freeze or halt");
    };
    return m;
  }();
  return table;
}

template <class Apply>
void parse_lines(std::istream& in, Apply&& apply) {
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    std::string_view s(line);
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(no) + ": expected key = value");
    }
    const auto key = trim(s.substr(0, eq));
    const auto value = trim(s.substr(eq + 1));
    try {
      apply(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(no) + " (" + std::string(key) + "): " + e.what());
    }
  }
}

std::ifstream open(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  return f;
}

}  // namespace

void apply_scenario_key(ScenarioConfig& cfg, std::string_view key, std::string_view value) {
  const auto& table = scenario_setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  it->second(cfg, value);
}

void apply_sweep_key(SweepSpec& spec, std::string_view key, std::string_view value) {
  if (key == "variants") {
    spec.variants.clear();
    for (auto item : split(value)) spec.variants.push_back(parse_variant(item));
  } else if (key == "penetrations") {
    spec.penetrations = to_doubles(value);
  } else if (key == "flow_rates") {
    spec.flow_rates = to_doubles(value);
  } else if (key == "seeds") {
    spec.seeds.clear();
    for (auto item : split(value)) {
      if (const auto dots = item.find(".."); dots != std::string_view::npos) {
        const auto a = to_uint(item.substr(0, dots));
        const auto b = to_uint(item.substr(dots + 2));
        if (b < a) throw ConfigError("seed range must be ascending");
        for (auto s = a; s <= b; ++s) spec.seeds.push_back(s);
      } else {
        spec.seeds.push_back(to_uint(item));
      }
    }
  } else if (key == "jobs") {
    spec.jobs = to_int(value);
  } else {
    apply_scenario_key(spec.base, key, value);
  }
}

ScenarioConfig parse_scenario(std::istream& in) {
  ScenarioConfig cfg;
  parse_lines(in, [&](std::string_view k, std::string_view v) { apply_scenario_key(cfg, k, v); });
  cfg.validate();
  return cfg;
}

SweepSpec parse_sweep(std::istream& in) {
  SweepSpec spec;
  spec.seeds = seed_range(20);
  parse_lines(in, [&](std::string_view k, std::string_view v) { apply_sweep_key(spec, k, v); });
  spec.validate();
  return spec;
}

ScenarioConfig load_scenario(const std::string& path) {
  auto f = open(path);
  return parse_scenario(f);
}

SweepSpec load_sweep(const std::string& path) {
  auto f = open(path);
  return parse_sweep(f);
}

}  // namespace cavsim
