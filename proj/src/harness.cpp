#include "cavsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <ostream>
#include <thread>

namespace cavsim {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::S1: return "S1";
    case Variant::S2: return "S2";
    case Variant::S3: return "S3";
    case Variant::S4: return "S4";
    case Variant::S5: return "S5";
    case Variant::TLC: return "TLC";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::S1, Variant::S2, Variant::S3, Variant::S4, Variant::S5, Variant::TLC}) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected S1..S5 or TLC)");
}

ScenarioConfig apply_variant(ScenarioConfig base, Variant v) {
  switch (v) {
    case Variant::S1:
      base.rule.kind = RuleKind::CA3_Full;
      base.cav_following = CavFollowing::Wiedemann;
      base.wiedemann.smooth_closeup = false;
      break;
    case Variant::S2:
    case Variant::S4:
      base.rule.kind = RuleKind::CA2_Partial;
      base.cav_following = CavFollowing::Wiedemann;
      base.wiedemann.smooth_closeup = v == Variant::S4;
      break;
    case Variant::S3:
    case Variant::S5:
      base.rule.kind = RuleKind::CA2_Partial;
      base.cav_following = CavFollowing::Optimal;
      base.wiedemann.smooth_closeup = v == Variant::S5;
      break;
    case Variant::TLC:
      base.rule.kind = RuleKind::TLC;
      break;
  }
  return base;
}

void SweepSpec::validate() const {
  if (variants.empty()) throw ConfigError("sweep: variants must not be empty");
  if (penetrations.empty()) throw ConfigError("sweep: penetrations must not be empty");
  if (flow_rates.empty()) throw ConfigError("sweep: flow_rates must not be empty");
  if (seeds.empty()) throw ConfigError("sweep: seeds must not be empty");
  for (double p : penetrations) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep: penetrations must lie in [0, 1]");
  }
  for (double f : flow_rates) {
    if (!(f > 0.0)) throw ConfigError("sweep: flow_rates must be > 0");
  }
  if (jobs < 1) throw ConfigError("sweep: jobs must be >= 1");
  base.validate();
}

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
  std::vector<std::uint64_t> out(n);
  for (std::uint64_t k = 0; k < n; ++k) out[k] = k + 1;
  return out;
}

namespace {

RunRow run_one(const SweepSpec& spec, const CellKey& key, std::uint64_t seed) {
  RunRow row;
  row.key = key;
  row.seed = seed;
  try {
    ScenarioConfig cfg = apply_variant(spec.base, key.variant);
    cfg.penetration = key.penetration;
    cfg.flow_rate = key.flow;
    cfg.seed = seed;
    const MetricsReport r = run(cfg);
    row.mean_energy_per_s = r.mean_energy_per_s;
    row.mean_travel_time = r.mean_travel_time;
    row.rear_end_violations = r.rear_end_violations;
    row.lateral_collisions = r.lateral_collisions;
    row.throughput = r.throughput;
    row.frozen = r.frozen;
    row.saturation_events = r.saturation_events;
    if (r.halted) row.error = "halted on collision";
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace

CellSummary summarize(const CellKey& key, const std::vector<RunRow>& rows) {
  CellSummary s;
  s.key = key;
  std::vector<double> e, tt, re, la, th, fr, sa;
  for (const auto& r : rows) {
    ++s.runs;
    if (!r.error.empty()) {
      ++s.failed;
      continue;
    }
    e.push_back(r.mean_energy_per_s);
    tt.push_back(r.mean_travel_time);
    re.push_back(r.rear_end_violations);
    la.push_back(r.lateral_collisions);
    th.push_back(r.throughput);
    fr.push_back(r.frozen);
    sa.push_back(r.saturation_events);
  }
  std::tie(s.energy_mean, s.energy_std) = mean_std(e);
  std::tie(s.travel_mean, s.travel_std) = mean_std(tt);
  s.rear_end_mean = mean_std(re).first;
  s.lateral_mean = mean_std(la).first;
  s.throughput_mean = mean_std(th).first;
  s.frozen_mean = mean_std(fr).first;
  s.saturation_mean = mean_std(sa).first;
  return s;
}

SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  std::vector<CellKey> cells;
  for (Variant v : spec.variants) {
    for (double p : spec.penetrations) {
      for (double f : spec.flow_rates) cells.push_back({v, p, f});
    }
  }
  const std::size_t n_seeds = spec.seeds.size();
  SweepResult result;
  result.rows.resize(cells.size() * n_seeds);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < result.rows.size(); k = next++) {
      result.rows[k] = run_one(spec, cells[k / n_seeds], spec.seeds[k % n_seeds]);
    }
  };
  const auto jobs = static_cast<std::size_t>(spec.jobs);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < std::min(jobs, result.rows.size()); ++j) pool.emplace_back(worker);
  }

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto first = result.rows.begin() + static_cast<std::ptrdiff_t>(c * n_seeds);
    result.cells.push_back(
        summarize(cells[c], std::vector<RunRow>(first, first + static_cast<std::ptrdiff_t>(n_seeds))));
  }
  return result;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

// Errors go into a single CSV field.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + '"';
}

void write_key(std::ostream& out, const CellKey& k) {
  out << to_string(k.variant) << ',' << format_number(k.penetration) << ','
      << format_number(k.flow) << ',';
}

}  // namespace

void write_runs_csv(std::ostream& out, const SweepResult& result) {
  out << "variant,penetration,flow,seed,mean_energy_per_s,mean_travel_time_s,"
         "rear_end_violations,lateral_collisions,throughput_veh,frozen_veh,"
         "saturation_events,error\n";
  std::size_t k = 0;
  for (const auto& cell : result.cells) {
    for (int s = 0; s < cell.runs; ++s, ++k) {
      const RunRow& r = result.rows[k];
      write_key(out, r.key);
      out << r.seed << ',';
      if (r.error.empty()) {
        out << format_number(r.mean_energy_per_s) << ',' << format_number(r.mean_travel_time) << ','
            << r.rear_end_violations << ',' << r.lateral_collisions << ',' << r.throughput << ','
            << r.frozen << ',' << r.saturation_events << ",\n";
      } else {
        out << ",,,,,,," << csv_field(r.error) << '\n';
      }
    }
    write_key(out, cell.key);
    out << "mean," << format_number(cell.energy_mean) << ',' << format_number(cell.travel_mean)
        << ',' << format_number(cell.rear_end_mean) << ',' << format_number(cell.lateral_mean)
        << ',' << format_number(cell.throughput_mean) << ',' << format_number(cell.frozen_mean)
        << ',' << format_number(cell.saturation_mean) << ',';
    if (cell.failed > 0) out << cell.failed << " failed";
    out << '\n';
  }
}

void write_summary_csv(std::ostream& out, const SweepResult& result) {
  out << "variant,penetration,flow,runs,failed,energy_per_s_mean,energy_per_s_std,"
         "travel_time_s_mean,travel_time_s_std,rear_end_mean,lateral_mean,throughput_mean,"
         "frozen_mean,saturation_events_mean\n";
  for (const auto& c : result.cells) {
    write_key(out, c.key);
    out << c.runs << ',' << c.failed << ',' << format_number(c.energy_mean) << ','
        << format_number(c.energy_std) << ',' << format_number(c.travel_mean) << ','
        << format_number(c.travel_std) << ',' << format_number(c.rear_end_mean) << ','
        << format_number(c.lateral_mean) << ',' << format_number(c.throughput_mean) << ','
        << format_number(c.frozen_mean) << ',' << format_number(c.saturation_mean) << '\n';
  }
}

std::string_view to_string(SaturationLevel s) {
  switch (s) {
    case SaturationLevel::Under: return "under-saturated";
    case SaturationLevel::Near: return "near-saturated";
    case SaturationLevel::Over: return "over-saturated";
  }
  return "?";
}

SaturationDiagnostics saturation(double flow, const ScenarioConfig& config) {
  if (!(flow > 0.0)) throw DomainError("saturation: flow must be > 0");
  SaturationDiagnostics d;
  d.flow = flow;
  const double v_arrival = 0.5 * (config.initial_speed_lo + config.initial_speed_hi);
  // Crossing at the arrival speed plus the clearance the scheduler keeps.
  d.service_time = config.geometry.mz_side / v_arrival + 2.0 * config.dt;
  d.mu = 3600.0 / d.service_time;
  d.lambda_s_estimate = 2.0 * d.mu / config.geometry.approaches;
  d.degree = flow / d.lambda_s;
  d.level = d.degree < kUnderSaturated ? SaturationLevel::Under
            : d.degree > 1.0           ? SaturationLevel::Over
                                       : SaturationLevel::Near;
  d.above_critical = flow >= d.lambda_c;
  return d;
}

void write_saturation(std::ostream& out, const SaturationDiagnostics& d) {
  out << "flow_veh_h_lane=" << format_number(d.flow) << '\n'
      << "service_time_s=" << format_number(d.service_time) << '\n'
      << "mu_veh_h=" << format_number(d.mu) << '\n'
      << "lambda_s_estimate=" << format_number(d.lambda_s_estimate) << '\n'
      << "lambda_s=" << format_number(d.lambda_s) << '\n'
      << "lambda_c=" << format_number(d.lambda_c) << '\n'
      << "degree=" << format_number(d.degree) << '\n'
      << "level=" << to_string(d.level) << '\n'
      << "above_critical=" << (d.above_critical ? "true" : "false") << '\n';
}

ConstraintBounds Fig5Setup::fig5_bounds() {
  ConstraintBounds b;
  // The CAV enters at 15 m/s, above the urban default limit.
  b.v_max = 20.0;
  return b;
}

Fig5Result replicate_fig5(const Fig5Setup& setup) {
  if (!(setup.dt > 0.0)) throw DomainError("replicate_fig5: dt must be > 0");
  ConstraintBounds bounds = setup.bounds;
  bounds.delta = setup.delta;
  bounds.delta_f = setup.delta_f;
  bounds.validate();
  const double L = setup.cz_length;
  const double t_in = setup.cav_entry;
  auto lead_p = [&](double t) { return setup.lead_speed * t; };

  // Scheduling view at the CAV's entry: the leader is an estimated record.
  CrossingQueue queue;
  queue.push(0, Approach::North, VehicleClass::NonCav);
  queue.push(1, Approach::North, VehicleClass::Cav);
  IntersectionGeometry geom;
  geom.cz_length = L;
  queue[0].record = estimate_noncav_record(0, t_in, lead_p(t_in), setup.lead_speed, L, geom.mz_side);
  ScheduleInputs in;
  in.now = t_in;
  in.p = 0.0;
  in.v = setup.cav_speed;
  in.geometry = geom;
  in.bounds = bounds;
  in.mz_speed_floor = 0.0;
  const TerminalTimeRecord rec = schedule_cav(queue, 1, in);

  Fig5Result out;
  out.t_m = rec.t_m;
  const FdCoefficients fd = solve_fd(t_in, 0.0, setup.cav_speed, rec.t_m, L);
  std::optional<AfCoefficients> af;
  out.min_gap = std::numeric_limits<double>::infinity();

  const auto steps = static_cast<long>(std::floor((rec.t_m - t_in) / setup.dt + 1e-9));
  for (long k = 0; k <= steps; ++k) {
    const double t = k == steps ? rec.t_m : t_in + static_cast<double>(k) * setup.dt;
    Kinematics x = af ? eval_af(*af, t) : eval_fd(fd, t);
    Fig5Sample s;
    s.t = t;
    s.p_lead = lead_p(t);
    s.v_lead = setup.lead_speed;
    s.gap = s.p_lead - x.p;
    if (!af && setup.adaptive_following && k < steps &&
        transition_mode(s.gap, setup.delta_f, VehicleClass::NonCav, CavMode::FreeDriving) ==
            CavMode::AdaptiveFollowing) {
      af = solve_af(t, x.p, x.v, rec.t_m, L, {s.p_lead, setup.lead_speed}, setup.delta,
                    setup.weights);
      out.af_engaged_at = t;
      x = eval_af(*af, t);
    }
    s.p_cav = x.p;
    s.v_cav = x.v;
    s.u_cav = x.u;
    s.mode = af ? CavMode::AdaptiveFollowing : CavMode::FreeDriving;
    if (out.first_below_delta < 0.0 && s.gap < setup.delta) out.first_below_delta = t;
    out.min_gap = std::min(out.min_gap, s.gap);
    out.samples.push_back(s);
  }

  std::vector<double> ts, vs, us;
  for (const auto& s : out.samples) {
    ts.push_back(s.t);
    vs.push_back(s.v_cav);
    us.push_back(s.u_cav);
  }
  out.energy = energy(ts, vs, us, setup.energy_model);
  return out;
}

void write_fig5_trace(std::ostream& out, const Fig5Result& result) {
  out << "t,p_lead,v_lead,p_cav,v_cav,u_cav,gap,mode\n";
  for (const auto& s : result.samples) {
    out << format_number(s.t) << ',' << format_number(s.p_lead) << ',' << format_number(s.v_lead)
        << ',' << format_number(s.p_cav) << ',' << format_number(s.v_cav) << ','
        << format_number(s.u_cav) << ',' << format_number(s.gap) << ','
        << (s.mode == CavMode::AdaptiveFollowing ? "AF" : "FD") << '\n';
  }
}

}  // namespace cavsim
