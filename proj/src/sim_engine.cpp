#include "cavsim/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cavsim {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStandstill = 2.0;        // bumper gap kept by the safety filter [m]
constexpr double kBrakeShare = 0.9;        // share of max braking the filter plans with
constexpr double kScheduleRetry = 1.0;     // wait before a pending CAV asks again [s]
constexpr double kRevokeBrakeShare = 0.5;  // a grant is revocable while stopping needs less
constexpr double kDecisionMargin = 5.0;    // extra look-ahead before the stop line [m]
constexpr double kMinPlanHorizon = 0.2;    // shorter plans are not re-solved [s]
// Below this share of the desired speed a constant-speed extrapolation is
// meaningless; the estimate assumes the driver pulls away instead.
constexpr double kEstimateSpeedShare = 0.5;
constexpr double kGapCheckStep = 0.25;  // sampling of planned same-lane gaps [s]
constexpr double kGapCheckBump = 0.5;   // t_m increment while the planned gap is short [s]
constexpr int kGapCheckBumps = 20;
constexpr double kAfRetry = 1.0;        // wait before retrying a declined AF solve [s]
constexpr double kGuardRange = 40.0;    // distance to the MZ inside which the box is watched [m]
constexpr double kGuardMargin = 0.3;    // clearance kept behind a vehicle inside the MZ [s]
constexpr double kQueueSlack = 1.0;     // plan-vs-driver braking gap that hands over [m/s^2]
constexpr double kExitSlip = 0.1;       // MZ exit delay that triggers rescheduling [s]

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double decision_distance(double v, double comfort_decel) {
  return v * v / (2.0 * std::abs(comfort_decel)) + kDecisionMargin;
}

}  // namespace

World::World(ScenarioConfig config)
    : cfg_(std::move(config)), cascade_from_(kNone), min_speed_(kInf) {
  cfg_.validate();
  rng_.seed(mix(cfg_.seed ^ 0x5EEDF00DULL));
}

void World::set_arrivals(ArrivalStreams streams) {
  pending_ = std::move(streams);
  next_arrival_.fill(0);
}

void World::set_trace(TraceSink sink, std::uint64_t run_id) {
  trace_ = std::move(sink);
  run_id_ = run_id;
}

VehicleId World::add_vehicle(const VehicleSpec& spec) {
  if (!(spec.v0 >= 0.0)) throw DomainError("add_vehicle: speed must be >= 0");
  if (!(spec.p0 >= 0.0 && spec.p0 < cfg_.geometry.cz_length)) {
    throw DomainError("add_vehicle: position must lie inside the CZ");
  }
  update_leaders();
  return static_cast<VehicleId>(spawn(spec));
}

std::size_t World::spawn(const VehicleSpec& spec) {
  const std::size_t idx = vehicles_.size();
  const auto id = static_cast<VehicleId>(idx);
  Vehicle veh;
  veh.s = {id, spec.cls, spec.lane, spec.p0, spec.v0, 0.0, t_};
  veh.cruise_only = spec.cruise_only;
  veh.min_gap = kInf;
  veh.dither_stream = mix(cfg_.seed * 0x100000001B3ULL + id);
  if (spec.cls == VehicleClass::NonCav) {
    std::mt19937_64 drng(mix(veh.dither_stream ^ 0xD21BEULL));
    veh.driver = sample_driver(cfg_.wiedemann, drng);
  } else {
    veh.driver = cfg_.wiedemann;
    veh.driver.dither_amplitude = 0.0;
    veh.control = Control::Pending;
  }
  vehicles_.push_back(veh);
  active_.push_back(idx);
  ahead_.push_back(kNone);
  queue_.push(id, spec.lane, spec.cls);
  estimates_fresh_ = false;
  approaching_fresh_ = false;

  // The newcomer is last on its lane.
  double best = kInf;
  for (std::size_t j : active_) {
    const auto& o = vehicles_[j];
    if (j != idx && o.s.lane == spec.lane && o.s.p >= spec.p0 && o.s.p < best) {
      best = o.s.p;
      ahead_[idx] = j;
    }
  }
  if (spec.cls == VehicleClass::Cav) try_schedule(idx);
  return idx;
}

void World::admit_arrivals() {
  struct Candidate {
    int lane;
    Arrival arrival;
  };
  std::vector<Candidate> ready;
  for (int a = 0; a < kApproachCount; ++a) {
    const auto& list = pending_[static_cast<std::size_t>(a)];
    const std::size_t k = next_arrival_[static_cast<std::size_t>(a)];
    if (k >= list.size() || list[k].t > t_ + 1e-9) continue;
    const Arrival& arr = list[k];
    // Wait for room behind the last vehicle on the lane.
    double last_p = kInf;
    double last_v = 0.0;
    for (std::size_t j : active_) {
      const auto& o = vehicles_[j];
      if (static_cast<int>(o.s.lane) == a && o.s.p < last_p) {
        last_p = o.s.p;
        last_v = o.s.v;
      }
    }
    const double need =
        cfg_.bounds.delta +
        std::max(0.0, arr.v0 * arr.v0 - last_v * last_v) / (2.0 * std::abs(cfg_.wiedemann.comfort_decel));
    if (last_p < need) continue;
    ready.push_back({a, arr});
  }
  // Same-step arrivals enter in random order.
  for (std::size_t k = ready.size(); k > 1; --k) {
    const auto j = static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(k));
    std::swap(ready[k - 1], ready[std::min(j, k - 1)]);
  }
  for (const auto& c : ready) {
    ++next_arrival_[static_cast<std::size_t>(c.lane)];
    VehicleSpec spec;
    spec.cls = c.arrival.cls;
    spec.lane = static_cast<Approach>(c.lane);
    spec.v0 = c.arrival.v0;
    spawn(spec);
  }
}

void World::update_leaders() {
  std::array<std::vector<std::size_t>, kApproachCount> lanes;
  for (std::size_t j : active_) lanes[static_cast<std::size_t>(vehicles_[j].s.lane)].push_back(j);
  for (auto& lane : lanes) {
    std::stable_sort(lane.begin(), lane.end(), [&](std::size_t x, std::size_t y) {
      return vehicles_[x].s.p > vehicles_[y].s.p;
    });
    for (std::size_t k = 0; k < lane.size(); ++k) ahead_[lane[k]] = k == 0 ? kNone : lane[k - 1];
  }
}

std::optional<World::LeaderInfo> World::leader_of(std::size_t vi) const {
  const std::size_t j = ahead_[vi];
  if (j == kNone) return std::nullopt;
  const auto& a = vehicles_[j];
  if (a.exited || a.frozen) return std::nullopt;
  return LeaderInfo{j, a.s.p - vehicles_[vi].s.p};
}

double World::mz_time_left(const Vehicle& veh) const {
  const double rest = cfg_.geometry.mz_exit() - veh.s.p;
  // Scheduled CAVs hold their speed through the MZ.
  if (veh.s.cls == VehicleClass::Cav && veh.control == Control::Scheduled) {
    return rest / std::max(veh.s.v, 0.1);
  }
  return travel_time(rest, veh.s.v, veh.driver.comfort_accel,
                     std::max({veh.s.v, veh.driver.desired_speed, 0.1}));
}

MzWindow World::predicted_window(const Vehicle& veh) const {
  const double L = cfg_.geometry.cz_length;
  const double S = cfg_.geometry.mz_side;
  MzWindow w;
  w.id = veh.s.id;
  w.approach = veh.s.lane;
  w.cls = veh.s.cls;
  if (veh.s.cls == VehicleClass::Cav && veh.control == Control::Scheduled && !veh.in_mz) {
    const auto& rec = *queue_[veh.s.id].record;
    w.scheduled = true;
    w.entry = rec.t_m;
    w.exit = rec.t_f;
    return w;
  }
  const double cruise = std::max({veh.driver.desired_speed, veh.s.v, 0.1});
  const double accel = veh.driver.comfort_accel;
  if (veh.in_mz) {
    w.entry = veh.t_mz_entry;
    w.exit = t_ + mz_time_left(veh);
    return w;
  }
  const double dist = L - veh.s.p;
  w.entry = t_ + travel_time(dist, veh.s.v, accel, cruise);
  const double v_entry = std::min(cruise, std::sqrt(veh.s.v * veh.s.v + 2.0 * accel * dist));
  w.exit = w.entry + travel_time(S, v_entry, accel, cruise);
  return w;
}

const std::vector<MzWindow>& World::approaching_windows() {
  if (!approaching_fresh_) {
    approaching_.clear();
    for (std::size_t j : active_) {
      const auto& o = vehicles_[j];
      if (!o.in_mz && o.gate != Gate::Granted) approaching_.push_back(predicted_window(o));
    }
    approaching_fresh_ = true;
  }
  return approaching_;
}

void World::refresh_estimates() {
  if (estimates_fresh_) return;
  const double L = cfg_.geometry.cz_length;
  const double S = cfg_.geometry.mz_side;
  std::vector<char> no_claim(vehicles_.size(), 0);
  for (std::size_t j : active_) {
    const auto& o = vehicles_[j];
    if (o.in_mz) continue;
    if (o.s.cls == VehicleClass::Cav && o.control == Control::Scheduled) continue;
    auto& rec = queue_[j].record;
    // Minor-road traffic under partial control yields to the major road, so
    // until granted it has no claim either.
    const bool yields = cfg_.rule.kind == RuleKind::CA2_Partial &&
                        road_of(o.s.lane) != cfg_.rule.major && o.gate != Gate::Granted;
    TerminalTimeRecord r;
    r.vehicle_id = o.s.id;
    r.case_tag = CaseTag::EstimatedPredecessor;
    if ((j < held_.size() && held_[j]) || yields) {
      // Waiting on the conflict rule: no claim on the schedule.
      no_claim[j] = 1;
      r.t_m = r.t_f = r.t_c = t_;
      r.v_m = std::max(o.driver.desired_speed, 0.1);
      rec = r;
      continue;
    }
    const std::size_t lead = ahead_[j];
    if (lead != kNone && !vehicles_[lead].in_mz && !no_claim[lead] && queue_[lead].record) {
      // A follower crosses one following headway behind its leader, and no
      // earlier than it could on its own.
      const auto& lr = *queue_[lead].record;
      const MzWindow w = predicted_window(o);
      const double v_m = std::max(std::min(lr.v_m, std::max(o.driver.desired_speed, 0.1)), 0.1);
      r.t_m = std::max(w.entry, lr.t_m + desired_gap(v_m, o.driver) / v_m);
      r.v_m = v_m;
      r.t_f = r.t_m + S / v_m;
      r.t_c = r.t_m;
      rec = r;
    } else if (o.s.v >= kEstimateSpeedShare * o.driver.desired_speed) {
      rec = estimate_noncav_record(o.s.id, t_, o.s.p, o.s.v, L, S);
    } else {
      // Slow or stopped: assume it pulls away at its comfortable rate.
      const MzWindow w = predicted_window(o);
      r.t_m = w.entry;
      r.t_f = w.exit;
      r.v_m = S / std::max(w.exit - w.entry, 1e-6);
      r.t_c = w.entry;
      rec = r;
    }
  }
  estimates_fresh_ = true;
}

void World::update_holds() {
  held_.assign(vehicles_.size(), 0);
  for (std::size_t j : active_) {
    auto& o = vehicles_[j];
    if (o.in_mz) continue;
    const bool behind_held = ahead_[j] != kNone && held_[ahead_[j]];
    if (o.gate == Gate::Granted) {
      if (!behind_held) continue;
      // Stuck behind a waiting vehicle: the grant cannot be used.
      o.gate = Gate::None;
      occupancy_.release(o.s.id);
      approaching_fresh_ = false;
    }
    bool held = o.gate == Gate::Yielding;
    if (!held && behind_held) {
      const auto& lead = vehicles_[ahead_[j]];
      const double gap = lead.s.p - o.s.p;
      held = o.s.v < kEstimateSpeedShare * o.driver.desired_speed ||
             gap < decision_distance(o.s.v, o.driver.comfort_decel) + cfg_.bounds.delta;
    }
    if (!held) continue;
    held_[j] = 1;
    if (o.s.cls == VehicleClass::Cav && o.control == Control::Scheduled) {
      to_fallback(j);
      o.control = Control::Pending;
    }
  }
}

ScheduleInputs World::schedule_inputs(const Vehicle& veh) const {
  ScheduleInputs in;
  in.now = t_;
  in.p = veh.s.p;
  in.v = veh.s.v;
  in.geometry = cfg_.geometry;
  in.bounds = cfg_.bounds;
  in.mz_speed_floor = cfg_.mz_speed_floor;
  in.estimate_margin = kWindowMargin;
  // Sampled positions would otherwise show back-to-back slots as overlapping.
  in.conflict_buffer = 2.0 * cfg_.dt;
  // active_ stays in spawn order.
  in.scan_from = active_.empty() ? 0 : active_.front();
  return in;
}

double World::cav_safe_gap(double v) const {
  return std::max(kStandstill, cfg_.bounds.delta * v / cfg_.bounds.v_max);
}

Kinematics World::plan_state(std::size_t vi, double t) const {
  const auto& veh = vehicles_[vi];
  const auto& rec = *queue_[vi].record;
  if (t > rec.t_m) {
    const double v_m = veh.cav_mode == CavMode::AdaptiveFollowing ? eval_af(*veh.af, rec.t_m).v
                                                                  : eval_fd(*veh.fd, rec.t_m).v;
    return {0.0, v_m, cfg_.geometry.cz_length + v_m * (t - rec.t_m)};
  }
  return veh.cav_mode == CavMode::AdaptiveFollowing ? eval_af(*veh.af, t) : eval_fd(*veh.fd, t);
}

bool World::plan_keeps_gap(std::size_t vi, const TerminalTimeRecord& rec) const {
  const std::size_t li = ahead_[vi];
  if (li == kNone) return true;
  const auto& lead = vehicles_[li];
  if (lead.in_mz || lead.exited || lead.frozen) return true;
  const bool planned = lead.s.cls == VehicleClass::Cav && lead.control == Control::Scheduled &&
                       (lead.fd || lead.af);
  const auto& veh = vehicles_[vi];
  const double L = cfg_.geometry.cz_length;
  FdCoefficients plan;
  try {
    plan = rec.fixed_terminal_speed
               ? solve_fd_fixed_speed(t_, veh.s.p, veh.s.v, rec.t_m, L, rec.v_m)
               : solve_fd(t_, veh.s.p, veh.s.v, rec.t_m, L);
  } catch (const std::exception&) {
    return true;
  }
  const double gap_now = lead.s.p - veh.s.p;
  // An unplanned leader is taken to hold its current speed.
  const double end = planned ? std::min(rec.t_m, queue_[li].record->t_f) : rec.t_m;
  for (double t = t_ + kGapCheckStep; t <= end; t += kGapCheckStep) {
    const Kinematics own = eval_fd(plan, t);
    const double lead_p = planned ? plan_state(li, t).p : lead.s.p + lead.s.v * (t - t_);
    const double need = std::min(cav_safe_gap(own.v), gap_now) - 1e-6;
    if (lead_p - own.p < need) return false;
  }
  return true;
}

std::optional<TerminalTimeRecord> World::schedule_checked(std::size_t vi, bool check_gap) {
  ScheduleInputs in = schedule_inputs(vehicles_[vi]);
  const TerminalTimeRecord base = schedule_cav(queue_, vi, in);
  if (!check_gap) return base;
  TerminalTimeRecord rec = base;
  for (int k = 0; k < kGapCheckBumps; ++k) {
    if (plan_keeps_gap(vi, rec)) return rec;
    in.not_before = rec.t_m + kGapCheckBump;
    rec = schedule_cav(queue_, vi, in);
  }
  if (plan_keeps_gap(vi, rec)) return rec;
  // Behind a planned CAV the safety filter covers the residual; behind
  // anything else the CAV keeps following until there is room.
  const std::size_t li = ahead_[vi];
  const bool planned_leader = li != kNone && vehicles_[li].s.cls == VehicleClass::Cav &&
                              vehicles_[li].control == Control::Scheduled;
  if (planned_leader) return base;
  return std::nullopt;
}

bool World::try_schedule(std::size_t vi) {
  refresh_estimates();
  auto& veh = vehicles_[vi];
  std::optional<TerminalTimeRecord> rec;
  try {
    rec = schedule_checked(vi, true);
  } catch (const std::exception&) {
  }
  if (!rec) {
    veh.control = Control::Pending;
    veh.schedule_retry_at = t_ + kScheduleRetry;
    estimates_fresh_ = false;
    return false;
  }
  queue_[vi].record = *rec;
  veh.control = Control::Scheduled;
  veh.cav_mode = CavMode::FreeDriving;
  veh.af.reset();
  veh.pinned = false;
  veh.replan = false;
  approaching_fresh_ = false;
  if (!solve_plan(vi)) {
    to_fallback(vi);
    return false;
  }
  return true;
}

PredecessorAnchor World::af_anchor(std::size_t leader) const {
  const auto& lead = vehicles_[leader];
  if (lead.s.cls == VehicleClass::Cav && lead.control == Control::Scheduled && !lead.in_mz) {
    // A scheduled CAV leader is summarized by its mean speed to its own slot.
    const double remaining = queue_[leader].record->t_m - t_;
    if (remaining > 0.5) return {lead.s.p, (cfg_.geometry.cz_length - lead.s.p) / remaining};
  }
  return {lead.s.p, lead.s.v};
}

bool World::solve_plan(std::size_t vi) {
  auto& veh = vehicles_[vi];
  auto& rec = *queue_[vi].record;
  const double L = cfg_.geometry.cz_length;
  if (rec.t_m - t_ < kMinPlanHorizon) {
    const double valid_to = veh.cav_mode == CavMode::AdaptiveFollowing
                                ? (veh.af ? veh.af->valid_to : -kInf)
                                : (veh.fd ? veh.fd->valid_to : -kInf);
    return std::abs(valid_to - rec.t_m) < 1e-9;
  }
  try {
    if (veh.cav_mode == CavMode::AdaptiveFollowing) {
      const PredecessorAnchor anchor = af_anchor(veh.af_leader);
      AfCoefficients af =
          solve_af(t_, veh.s.p, veh.s.v, rec.t_m, L, anchor, cfg_.bounds.delta, cfg_.weights);
      const double v_end = eval_af(af, rec.t_m).v;
      if (v_end < 0.5) return false;
      for (int k = 1; k < 64; ++k) {
        if (eval_af(af, t_ + (rec.t_m - t_) * k / 64.0).v < 0.0) return false;
      }
      veh.af = af;
      if (v_end < rec.v_m - 0.05) {
        // Crossing slower than booked: later schedules have to know.
        rec.v_m = v_end;
        rec.t_f = mz_exit_time(rec.t_m, v_end, cfg_.geometry.mz_side);
        cascade_from_ = std::min(cascade_from_, vi + 1);
        approaching_fresh_ = false;
      }
    } else if (rec.fixed_terminal_speed || veh.pinned) {
      veh.fd = solve_fd_fixed_speed(t_, veh.s.p, veh.s.v, rec.t_m, L, rec.v_m);
    } else {
      veh.fd = solve_fd(t_, veh.s.p, veh.s.v, rec.t_m, L);
    }
  } catch (const std::exception&) {
    return false;
  }
  veh.replan = false;
  return true;
}

void World::replan_or_fallback(std::size_t vi) {
  auto& veh = vehicles_[vi];
  if (solve_plan(vi)) return;
  if (veh.cav_mode == CavMode::AdaptiveFollowing) {
    veh.cav_mode = CavMode::FreeDriving;
    veh.af.reset();
    veh.af_retry_at = t_ + kAfRetry;
    veh.pinned = true;
    if (solve_plan(vi)) return;
  }
  to_fallback(vi);
}

void World::to_fallback(std::size_t vi) {
  auto& veh = vehicles_[vi];
  if (veh.control == Control::Fallback) return;
  veh.control = Control::Fallback;
  veh.cav_mode = CavMode::FreeDriving;
  veh.fd.reset();
  veh.af.reset();
  estimates_fresh_ = false;
  approaching_fresh_ = false;
  cascade_from_ = std::min(cascade_from_, vi + 1);
}

void World::reschedule_from(std::size_t first) {
  const double L = cfg_.geometry.cz_length;
  for (std::size_t j : active_) {
    if (j < first) continue;
    auto& veh = vehicles_[j];
    if (veh.s.cls != VehicleClass::Cav || veh.in_mz || veh.gate != Gate::None) continue;
    if (veh.s.p >= L - 1.0) continue;
    if (veh.control == Control::Pending) {
      if (t_ >= veh.schedule_retry_at && !(j < held_.size() && held_[j])) try_schedule(j);
      continue;
    }
    if (veh.control != Control::Scheduled) continue;
    refresh_estimates();
    try {
      queue_[j].record = *schedule_checked(j, false);
    } catch (const std::exception&) {
      to_fallback(j);
      continue;
    }
    veh.pinned = false;
    approaching_fresh_ = false;
    replan_or_fallback(j);
  }
}

void World::reevaluate_schedules() {
  for (std::size_t j : active_) {
    auto& veh = vehicles_[j];
    if (veh.s.cls != VehicleClass::Cav || veh.control != Control::Scheduled) continue;
    if (veh.in_mz || veh.gate != Gate::None || j == 0) continue;
    const auto& rec = *queue_[j].record;
    if (!rec.provisional || rec.t_m - t_ < 1.0) continue;
    const auto& pred = vehicles_[j - 1];
    if (pred.exited || pred.frozen || pred.in_mz) continue;
    if (std::abs(pred.s.v - rec.anchor_speed) <= kReevaluationSpeedTol) continue;
    refresh_estimates();
    try {
      if (!reevaluate(queue_, j, pred.s.v, schedule_inputs(veh))) continue;
      queue_[j].record = *schedule_checked(j, false);
    } catch (const std::exception&) {
      continue;
    }
    veh.pinned = false;
    approaching_fresh_ = false;
    replan_or_fallback(j);
    cascade_from_ = std::min(cascade_from_, j + 1);
  }
}

double World::safety_cap(std::size_t vi) const {
  const auto leader = leader_of(vi);
  if (!leader) return kInf;
  const auto& veh = vehicles_[vi];
  const auto& lead = vehicles_[leader->index];
  // Largest control after which the vehicle can still stop, braking at
  // slightly less than its limit, behind the point where the leader would
  // halt under emergency braking.
  const double dt = cfg_.dt;
  const double own = kBrakeShare * std::abs(veh.driver.max_decel);
  const double lead_stop = lead.s.v * lead.s.v / (2.0 * std::abs(lead.driver.max_decel));
  const double room = leader->gap - kStandstill + lead_stop - (veh.s.v - lead.s.v) * dt;
  if (room <= 0.0) return veh.s.v > 0.0 ? -veh.s.v / dt : kInf;
  return (std::sqrt(2.0 * own * room) - veh.s.v) / dt;
}

double World::control_driver(std::size_t vi) {
  auto& veh = vehicles_[vi];
  if (veh.cruise_only) return 0.0;
  std::optional<LeaderView> view;
  if (const auto leader = leader_of(vi)) view = LeaderView{leader->gap, vehicles_[leader->index].s.v};
  const double dither = dither_at(veh.dither_stream, t_, veh.driver.dither_period);
  return drive(veh.s.v, view, veh.driver, dither, &veh.driver_mode);
}

bool World::may_request(std::size_t vi) const {
  // Only the front vehicle of a lane, or one behind a granted leader, asks.
  const auto leader = leader_of(vi);
  if (!leader) return true;
  const auto& lead = vehicles_[leader->index];
  return lead.in_mz || lead.gate == Gate::Granted;
}

double World::box_guard(std::size_t vi) const {
  const auto& veh = vehicles_[vi];
  // Passive conflict areas leave everyone uncontrolled.
  if (veh.in_mz || veh.cruise_only || cfg_.rule.kind == RuleKind::CA1_Passive) return kInf;
  const double dist = cfg_.geometry.cz_length - veh.s.p;
  const double brake = std::abs(veh.driver.max_decel);
  if (dist > kGuardRange || veh.s.v * veh.s.v / (2.0 * brake) >= dist) return kInf;
  // Scheduled slots already clear each other exactly; only a real overrun counts.
  const bool scheduled = veh.s.cls == VehicleClass::Cav && veh.control == Control::Scheduled;
  const double arrival =
      scheduled ? queue_[vi].record->t_m : t_ + dist / std::max(veh.s.v, 0.1);
  const double margin = scheduled ? 0.0 : kGuardMargin;
  for (const auto& w : occupancy_.windows()) {
    if (w.id == veh.s.id || !occupancy_.inside(w.id)) continue;
    if (relation_between(veh.s.lane, w.approach) != Relation::Conflicting) continue;
    if (w.exit + margin > arrival) {
      return std::max(-veh.s.v * veh.s.v / (2.0 * std::max(dist - 0.5, 0.1)), -brake);
    }
  }
  return kInf;
}

double World::apply_gate(std::size_t vi, double u) {
  auto& veh = vehicles_[vi];
  if (veh.cruise_only || veh.in_mz) return u;
  const double L = cfg_.geometry.cz_length;
  const double d_stop = L - cfg_.stop_line_offset - veh.s.p;
  if (veh.gate == Gate::Granted) {
    // A grant is re-checked until the vehicle can no longer stop gently.
    const bool can_stop = d_stop > 0.0 && veh.s.v * veh.s.v / (2.0 * d_stop) <=
                                              kRevokeBrakeShare * std::abs(veh.driver.max_decel);
    if (!can_stop) return u;
    const MzWindow w = predicted_window(veh);
    if (request_mz_entry(w, occupancy_, approaching_windows(), cfg_.rule, t_) ==
        Directive::Proceed) {
      return u;
    }
    veh.gate = Gate::Yielding;
    occupancy_.release(veh.s.id);
    approaching_fresh_ = false;
    estimates_fresh_ = false;
    return std::min(u, stop_line_profile(veh.s.v, d_stop, veh.driver.max_decel, cfg_.dt));
  }
  if (veh.gate == Gate::None && d_stop > decision_distance(veh.s.v, veh.driver.comfort_decel)) {
    return u;
  }
  if (!may_request(vi)) return u;
  const MzWindow w = predicted_window(veh);
  const bool cannot_stop =
      veh.s.v * veh.s.v / (2.0 * std::abs(veh.driver.max_decel)) > L - veh.s.p;
  if (cannot_stop ||
      request_mz_entry(w, occupancy_, approaching_windows(), cfg_.rule, t_) == Directive::Proceed) {
    veh.gate = Gate::Granted;
    occupancy_.grant(w);
    approaching_fresh_ = false;
    return u;
  }
  veh.gate = Gate::Yielding;
  return std::min(u, stop_line_profile(veh.s.v, d_stop, veh.driver.max_decel, cfg_.dt));
}

double World::control_cav(std::size_t vi, bool& exact) {
  exact = false;
  auto& veh = vehicles_[vi];
  const double L = cfg_.geometry.cz_length;
  const auto& b = cfg_.bounds;

  // Once the gate has decided, the window it decided on stays in force.
  if (veh.control == Control::Pending && t_ >= veh.schedule_retry_at && veh.gate == Gate::None &&
      !(vi < held_.size() && held_[vi])) {
    try_schedule(vi);
  }
  if (veh.control == Control::Scheduled && !veh.in_mz && t_ >= queue_[vi].record->t_m - 1e-9) {
    to_fallback(vi);  // late for its slot
  }

  if (veh.control == Control::Scheduled && !veh.in_mz && veh.gate == Gate::None) {
    const double d_stop = L - cfg_.stop_line_offset - veh.s.p;
    if (d_stop <= decision_distance(veh.s.v, veh.driver.comfort_decel) && may_request(vi)) {
      const MzWindow w = predicted_window(veh);
      const auto dec = cav_mz_override(w, occupancy_, approaching_windows(), cfg_.rule, t_);
      if (dec.override_schedule && dec.directive == Directive::Yield) {
        to_fallback(vi);
        veh.gate = Gate::Yielding;
      } else {
        veh.gate = Gate::Granted;
        occupancy_.grant(w);
        approaching_fresh_ = false;
      }
    }
  }

  if (veh.control == Control::Scheduled) {
    if (veh.in_mz) {
      const ClampResult clamp = clamp_controls(std::min(0.0, safety_cap(vi)), veh.s.v, b, cfg_.dt);
      return clamp.u;
    }
    const auto leader = leader_of(vi);
    if (veh.cav_mode == CavMode::FreeDriving && leader && af_enabled_) {
      const auto& lead = vehicles_[leader->index];
      // Behind a CAV the planned gap may shrink with speed; only a gap below
      // that speed-scaled distance calls for the safety net.
      const double threshold = lead.s.cls == VehicleClass::Cav
                                   ? std::min(b.delta_f, cav_safe_gap(veh.s.v))
                                   : b.delta_f;
      const CavMode next = transition_mode(leader->gap, threshold, lead.s.cls, veh.cav_mode,
                                           cfg_.af_behind_cavs);
      if (next == CavMode::AdaptiveFollowing) {
        if (lead.s.cls == VehicleClass::NonCav && cfg_.cav_following == CavFollowing::Wiedemann) {
          to_fallback(vi);
        } else if (t_ >= veh.af_retry_at) {
          veh.cav_mode = CavMode::AdaptiveFollowing;
          veh.af_leader = leader->index;
          if (!solve_plan(vi)) {
            // No physical follow trajectory: keep the FD plan under the safety filter.
            veh.cav_mode = CavMode::FreeDriving;
            veh.af.reset();
            veh.af_retry_at = t_ + kAfRetry;
          }
        }
      }
    } else if (veh.cav_mode == CavMode::AdaptiveFollowing) {
      if (!leader || leader->index != veh.af_leader) {
        veh.cav_mode = CavMode::FreeDriving;
        veh.af.reset();
        veh.pinned = true;
        veh.replan = true;
      } else if (veh.af && std::abs(af_anchor(leader->index).v - veh.af->anchor.v) >
                               kReevaluationSpeedTol) {
        veh.replan = true;
      }
    }
  }

  if (veh.control == Control::Scheduled) {
    if (veh.replan) replan_or_fallback(vi);
  }

  if (veh.control == Control::Scheduled && !veh.in_mz && box_guard(vi) < kInf) {
    // The MZ is still taken by a slower crossing.
    to_fallback(vi);
    veh.control = Control::Pending;
    veh.schedule_retry_at = t_ + kScheduleRetry;
  }

  double u = 0.0;
  if (veh.control == Control::Scheduled) {
    const auto& rec = *queue_[vi].record;
    const double te = std::min(t_, rec.t_m);
    u = veh.cav_mode == CavMode::AdaptiveFollowing ? eval_af(*veh.af, te).u : eval_fd(*veh.fd, te).u;
    const double cap = safety_cap(vi);
    const double t_next = std::min(t_ + cfg_.dt, rec.t_m);
    const double v_next = veh.cav_mode == CavMode::AdaptiveFollowing ? eval_af(*veh.af, t_next).v
                                                                     : eval_fd(*veh.fd, t_next).v;
    constexpr double tol = 1e-6;
    const bool within = u <= cap && u >= b.u_min - tol && u <= b.u_max + tol &&
                        v_next >= b.v_min - tol && v_next <= b.v_max + tol;
    bool queue_ahead = false;
    if (const auto leader = leader_of(vi)) {
      const auto& lead = vehicles_[leader->index];
      const bool planned = lead.in_mz || (lead.s.cls == VehicleClass::Cav &&
                                          lead.control == Control::Scheduled);
      if (!planned) {
        // A driver would already be braking for this leader; a plan that
        // keeps going only ends in a hard stop at its tail.
        const double u_drv = drive(veh.s.v, LeaderView{leader->gap, lead.s.v}, veh.driver, 0.0);
        queue_ahead = u_drv < 0.0 && u > u_drv + kQueueSlack;
      }
    }
    if (queue_ahead || (!within && u > cap && leader_of(vi))) {
      // A vehicle ahead is in the way of the plan: follow it instead and
      // schedule again later.
      to_fallback(vi);
      veh.control = Control::Pending;
      veh.schedule_retry_at = t_ + kScheduleRetry;
    } else if (!within) {
      const ClampResult clamp = clamp_controls(std::min(u, cap), veh.s.v, b, cfg_.dt);
      ++veh.saturation;
      veh.pinned = true;
      veh.replan = true;
      return clamp.u;
    } else {
      exact = true;
      return u;
    }
  }

  u = control_driver(vi);
  u = apply_gate(vi, u);
  u = std::min({u, safety_cap(vi), box_guard(vi)});
  const ClampResult clamp = clamp_controls(u, veh.s.v, b, cfg_.dt);
  return clamp.u;
}

void World::integrate(const std::vector<double>& u_cmd, const std::vector<char>& exact) {
  const double dt = cfg_.dt;
  const double t1 = t_ + dt;
  const double L = cfg_.geometry.cz_length;
  const double S = cfg_.geometry.mz_side;
  const double exit_p = cfg_.geometry.mz_exit();

  for (std::size_t vi : active_) {
    auto& veh = vehicles_[vi];
    const double v0 = veh.s.v;
    double u = u_cmd[vi];
    if (exact[vi]) {
      const auto& rec = *queue_[vi].record;
      auto eval = [&](double t) {
        return veh.cav_mode == CavMode::AdaptiveFollowing ? eval_af(*veh.af, t) : eval_fd(*veh.fd, t);
      };
      if (t1 <= rec.t_m) {
        const Kinematics k = eval(t1);
        veh.s.p = k.p;
        veh.s.v = k.v;
      } else {
        const Kinematics k = eval(rec.t_m);
        veh.s.p = L + k.v * (t1 - rec.t_m);
        veh.s.v = k.v;
      }
    } else {
      double v1 = v0 + u * dt;
      if (v1 < 0.0) {
        v1 = 0.0;
        u = -v0 / dt;
      }
      veh.s.p += 0.5 * (v0 + v1) * dt;
      veh.s.v = v1;
    }
    veh.s.u = u;

    const double rate = energy_rate(v0, u, cfg_.energy_model);
    if (veh.has_rate) veh.energy += 0.5 * (veh.last_rate + rate) * dt;
    veh.last_rate = rate;
    veh.has_rate = true;

    if (veh.s.cls == VehicleClass::Cav) max_cav_speed_ = std::max(max_cav_speed_, veh.s.v);
    min_speed_ = std::min(min_speed_, veh.s.v);

    if (!veh.in_mz && veh.s.p >= L) {
      veh.in_mz = true;
      veh.gate = Gate::Granted;
      const double back = veh.s.v > 1e-9 ? (veh.s.p - L) / veh.s.v : 0.0;
      veh.t_mz_entry = std::max(t_, t1 - back);
      const double v_m = std::max(veh.s.v, 1e-3);
      if (!occupancy_.holds(veh.s.id)) {
        occupancy_.grant({veh.s.id, veh.s.lane, veh.s.cls, false, veh.t_mz_entry,
                          veh.t_mz_entry + S / v_m});
      }
      occupancy_.mark_inside(veh.s.id);
      if (veh.s.cls == VehicleClass::Cav && veh.control == Control::Scheduled) {
        committed_.push_back(*queue_[vi].record);
      } else {
        TerminalTimeRecord r;
        r.vehicle_id = veh.s.id;
        r.t_m = veh.t_mz_entry;
        r.v_m = v_m;
        r.t_f = veh.t_mz_entry + S / v_m;
        r.t_c = r.t_m;
        r.case_tag = CaseTag::EstimatedPredecessor;
        queue_[vi].record = r;
      }
    }
    if (veh.in_mz) {
      if (veh.s.p >= exit_p) {
        veh.exited = true;
        const double back = veh.s.v > 1e-9 ? (veh.s.p - exit_p) / veh.s.v : 0.0;
        veh.t_exit = std::max(t_, t1 - back);
        // Close the energy integral at the exit instant.
        veh.energy += rate * (veh.t_exit - t_);
        occupancy_.release(veh.s.id);
      } else {
        const double exit_at = t1 + mz_time_left(veh);
        occupancy_.update(veh.s.id, veh.t_mz_entry, exit_at);
        auto& rec = *queue_[vi].record;
        // Later schedules clear behind this exit; tell them once it has
        // slipped noticeably since they last looked.
        if (exit_at > rec.t_f + kExitSlip) {
          cascade_from_ = std::min(cascade_from_, vi + 1);
          rec.t_f = exit_at;
        } else if (exit_at < rec.t_f) {
          rec.t_f = exit_at;
        }
      }
    }
  }
  t_ = t1;
  std::erase_if(active_, [&](std::size_t j) { return vehicles_[j].exited; });
}

void World::freeze(std::size_t vi) {
  auto& veh = vehicles_[vi];
  if (veh.frozen) return;
  veh.frozen = true;
  occupancy_.release(veh.s.id);
  if (cfg_.collision_response == CollisionResponse::Halt) halted_ = true;
}

void World::detect_collisions() {
  // Gaps are taken against the leaders of the previous step so that a
  // vehicle passing through another within one step is caught.
  const double L = cfg_.geometry.cz_length;
  const double exit_p = cfg_.geometry.mz_exit();
  std::vector<std::size_t> hit;
  std::vector<std::size_t> inside;
  for (std::size_t vi : active_) {
    auto& veh = vehicles_[vi];
    if (const auto leader = leader_of(vi)) {
      veh.min_gap = std::min(veh.min_gap, leader->gap);
      if (leader->gap <= 0.0) {
        ++rear_end_;
        hit.push_back(vi);
        hit.push_back(leader->index);
      }
    }
    if (veh.s.p > L && veh.s.p < exit_p) inside.push_back(vi);
  }
  for (std::size_t x = 0; x < inside.size(); ++x) {
    for (std::size_t y = x + 1; y < inside.size(); ++y) {
      const auto& a = vehicles_[inside[x]];
      const auto& c = vehicles_[inside[y]];
      if (relation_between(a.s.lane, c.s.lane) == Relation::Conflicting) {
        ++lateral_;
        hit.push_back(inside[x]);
        hit.push_back(inside[y]);
      }
    }
  }
  if (hit.empty()) return;
  for (std::size_t vi : hit) freeze(vi);
  std::erase_if(active_, [&](std::size_t j) { return vehicles_[j].frozen; });
  estimates_fresh_ = false;
  approaching_fresh_ = false;
  update_leaders();
}

std::string World::mode_tag(const Vehicle& veh) const {
  std::string tag;
  if (veh.in_mz) {
    tag = "MZ";
  } else if (veh.s.cls == VehicleClass::NonCav) {
    tag = veh.cruise_only ? "CRUISE" : "W-" + std::string(to_string(veh.driver_mode));
  } else if (veh.control == Control::Scheduled) {
    tag = veh.cav_mode == CavMode::AdaptiveFollowing ? "AF" : "FD";
  } else if (veh.control == Control::Pending) {
    tag = "PENDING";
  } else {
    tag = "FALLBACK";
  }
  if (veh.gate == Gate::Yielding && !veh.in_mz) tag += "+YIELD";
  return tag;
}

void World::step() {
  if (halted_) return;
  estimates_fresh_ = false;
  approaching_fresh_ = false;
  admit_arrivals();
  update_leaders();
  update_holds();

  if (cascade_from_ != kNone) {
    const std::size_t first = cascade_from_;
    cascade_from_ = kNone;
    reschedule_from(first);
    cascade_from_ = kNone;
  }
  reevaluate_schedules();

  std::vector<double> u(vehicles_.size(), 0.0);
  std::vector<char> exact(vehicles_.size(), 0);
  for (std::size_t vi : active_) {
    auto& veh = vehicles_[vi];
    if (veh.s.cls == VehicleClass::Cav) {
      bool e = false;
      u[vi] = control_cav(vi, e);
      exact[vi] = e ? 1 : 0;
    } else {
      double cmd = apply_gate(vi, control_driver(vi));
      if (!veh.cruise_only) cmd = std::min({cmd, safety_cap(vi), box_guard(vi)});
      u[vi] = std::max(cmd, veh.driver.max_decel);
    }
    if (veh.gate == Gate::Granted && !veh.in_mz && !(veh.s.cls == VehicleClass::Cav &&
                                                     veh.control == Control::Scheduled)) {
      const MzWindow w = predicted_window(veh);
      occupancy_.update(veh.s.id, w.entry, w.exit);
    }
  }

  integrate(u, exact);
  detect_collisions();

  if (trace_) {
    for (std::size_t vi : active_) {
      const auto& veh = vehicles_[vi];
      trace_({run_id_, t_, veh.s.id, veh.s.cls, veh.s.lane, mode_tag(veh), veh.s.p, veh.s.v,
              veh.s.u});
    }
  }
}

void World::run_until(double t_end) {
  while (t_ < t_end - 1e-9 && !halted_) step();
}

std::vector<World::Snapshot> World::snapshot() const {
  std::vector<Snapshot> out;
  out.reserve(active_.size());
  for (std::size_t vi : active_) {
    const auto& v = vehicles_[vi];
    out.push_back({v.s.id, v.s.cls, v.s.lane, v.s.p, v.s.v, v.s.u, mode_tag(v)});
  }
  return out;
}

std::optional<World::Snapshot> World::find(VehicleId id) const {
  if (id >= vehicles_.size()) return std::nullopt;
  const auto& v = vehicles_[id];
  if (v.exited || v.frozen) return std::nullopt;
  return Snapshot{v.s.id, v.s.cls, v.s.lane, v.s.p, v.s.v, v.s.u, mode_tag(v)};
}

std::size_t World::active_count() const { return active_.size(); }

MetricsReport World::report() const {
  MetricsReport r;
  double energy_sum = 0.0;
  double time_sum = 0.0;
  int measured = 0;
  for (const auto& veh : vehicles_) {
    VehicleMetrics m;
    m.id = veh.s.id;
    m.cls = veh.s.cls;
    m.lane = veh.s.lane;
    m.t0 = veh.s.t0;
    m.t_exit = veh.t_exit;
    m.completed = veh.exited && !veh.frozen;
    m.frozen = veh.frozen;
    m.travel_time = m.completed ? veh.t_exit - veh.s.t0 : 0.0;
    m.energy = veh.energy;
    m.saturation_count = veh.saturation;
    m.min_gap = veh.min_gap;
    r.vehicles.push_back(m);

    r.saturation_events += veh.saturation;
    if (veh.frozen) ++r.frozen;
    if (m.completed) ++r.departed;
    if (m.completed && veh.s.t0 >= cfg_.warmup) {
      energy_sum += veh.energy;
      time_sum += m.travel_time;
      ++measured;
    }
    if (m.completed && veh.t_exit >= cfg_.warmup) ++r.throughput;
  }
  r.spawned = static_cast<int>(vehicles_.size());
  r.in_system = static_cast<int>(active_.size());
  for (int a = 0; a < kApproachCount; ++a) {
    const auto& list = pending_[static_cast<std::size_t>(a)];
    for (std::size_t k = next_arrival_[static_cast<std::size_t>(a)]; k < list.size(); ++k) {
      if (list[k].t <= t_) ++r.waiting_to_enter;
    }
  }
  r.mean_energy_per_s = time_sum > 0.0 ? energy_sum / time_sum : 0.0;
  r.mean_travel_time = measured > 0 ? time_sum / measured : 0.0;
  r.rear_end_violations = rear_end_;
  r.lateral_collisions = lateral_;
  r.max_cav_speed = max_cav_speed_;
  r.min_speed = std::isfinite(min_speed_) ? min_speed_ : 0.0;
  r.halted = halted_;
  return r;
}

MetricsReport run(const ScenarioConfig& config, TraceSink trace, std::uint64_t run_id) {
  World world(config);
  world.set_arrivals(spawn_arrivals(config.flow_rate, config.horizon, config.seed,
                                    config.penetration, config.initial_speed_lo,
                                    config.initial_speed_hi));
  if (trace) world.set_trace(std::move(trace), run_id);
  world.run_until(config.horizon);
  return world.report();
}

}  // namespace cavsim
