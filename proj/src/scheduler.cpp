#include "cavsim/scheduler.hpp"

#include <algorithm>
#include <cmath>

#include "cavsim/cav_control.hpp"

namespace cavsim {

std::string_view to_string(CaseTag c) {
  switch (c) {
    case CaseTag::First: return "first";
    case CaseTag::SameRoadROrO: return "R_or_O";
    case CaseTag::SameLane: return "L";
    case CaseTag::Conflicting: return "C";
    case CaseTag::EstimatedPredecessor: return "estimated";
  }
  return "?";
}

std::size_t CrossingQueue::push(VehicleId id, Approach lane, VehicleClass cls) {
  entries_.push_back({id, lane, cls, std::nullopt});
  return entries_.size() - 1;
}

std::optional<std::size_t> CrossingQueue::index_of(VehicleId id) const {
  // Ids are issued in entry order, so search from the back.
  for (std::size_t k = entries_.size(); k-- > 0;) {
    if (entries_[k].id == id) return k;
  }
  return std::nullopt;
}

std::optional<std::size_t> CrossingQueue::same_lane_predecessor(std::size_t index) const {
  const Approach lane = entries_.at(index).lane;
  for (std::size_t k = index; k-- > 0;) {
    if (entries_[k].lane == lane) return k;
  }
  return std::nullopt;
}

double lower_bound_tc(double t0, double v0, double distance, double v_max, double u_max) {
  if (!(u_max > 0.0)) throw DomainError("lower_bound_tc: u_max must be > 0");
  const double v_end = std::sqrt(2.0 * distance * u_max + v0 * v0);
  if (v_end > v_max) {
    const double dv = v_max - v0;
    return t0 + distance / v_max + dv * dv / (2.0 * u_max * v_max);
  }
  return t0 + (v_end - v0) / u_max;
}

namespace {

const TerminalTimeRecord& require_record(const CrossingQueue& q, std::size_t k) {
  const auto& rec = q[k].record;
  if (!rec) {
    throw SchedulingError("missing terminal-time record for queue predecessor id " +
                          std::to_string(q[k].id));
  }
  return *rec;
}

}  // namespace

TerminalTimeRecord assign_terminal_time(const CrossingQueue& queue, std::size_t index, double t_c,
                                        double delta, double mz_side) {
  const auto& self = queue[index];
  TerminalTimeRecord rec;
  rec.vehicle_id = self.id;
  rec.t_c = t_c;

  if (index == 0) {
    rec.t_m = t_c;
    rec.case_tag = CaseTag::First;
    return rec;
  }

  const auto& prev_entry = queue[index - 1];
  const TerminalTimeRecord& prev = require_record(queue, index - 1);
  rec.provisional = prev.case_tag == CaseTag::EstimatedPredecessor;
  rec.anchor_speed = prev.v_m;

  switch (relation_between(self.lane, prev_entry.lane)) {
    case Relation::SameRoadOtherLane:
    case Relation::Opposite: {
      double t = std::max(prev.t_m, t_c);
      if (const auto k = queue.same_lane_predecessor(index)) {
        const TerminalTimeRecord& rk = require_record(queue, *k);
        t = std::max(t, rk.t_m + delta / rk.v_m);
      }
      rec.t_m = t;
      rec.case_tag = CaseTag::SameRoadROrO;
      break;
    }
    case Relation::SameLaneAhead:
      rec.t_m = std::max(prev.t_m + delta / prev.v_m, t_c);
      rec.case_tag = CaseTag::SameLane;
      break;
    case Relation::Conflicting:
      rec.t_m = std::max(prev.t_m + mz_side / prev.v_m, t_c);
      rec.case_tag = CaseTag::Conflicting;
      break;
  }
  return rec;
}

std::optional<double> estimate_noncav_exit(double t_i0, double p_pred, double v_pred, double L) {
  if (!(v_pred > 0.0)) return std::nullopt;
  return t_i0 + (L - p_pred) / v_pred;
}

std::optional<TerminalTimeRecord> estimate_noncav_record(VehicleId id, double now, double p,
                                                         double v, double L, double mz_side) {
  const auto t_m = estimate_noncav_exit(now, p, v, L);
  if (!t_m) return std::nullopt;
  TerminalTimeRecord rec;
  rec.vehicle_id = id;
  rec.t_m = *t_m;
  rec.v_m = v;
  rec.t_f = *t_m + mz_side / v;
  rec.t_c = *t_m;
  rec.case_tag = CaseTag::EstimatedPredecessor;
  return rec;
}

TerminalTimeRecord schedule_cav(const CrossingQueue& queue, std::size_t index,
                                const ScheduleInputs& in) {
  const double L = in.geometry.cz_length;
  const double S = in.geometry.mz_side;
  const double distance = L - in.p;
  if (!(distance > 0.0)) throw SchedulingError("schedule_cav: vehicle already at the MZ");

  double t_c = lower_bound_tc(in.now, in.v, distance, in.bounds.v_max, in.bounds.u_max);
  t_c = std::max(t_c, in.now + fd_min_feasible_horizon(in.v, distance, in.bounds));
  t_c = std::max(t_c, in.not_before);

  TerminalTimeRecord rec = assign_terminal_time(queue, index, t_c, in.bounds.delta, S);

  const Approach lane = queue[index].lane;
  double clearance = rec.t_m;
  for (std::size_t k = in.scan_from; k < index; ++k) {
    const auto& e = queue[k];
    if (e.record && relation_between(lane, e.lane) == Relation::Conflicting) {
      const bool estimate = e.record->case_tag == CaseTag::EstimatedPredecessor;
      clearance = std::max(clearance, e.record->t_f + in.conflict_buffer +
                                          (estimate ? in.estimate_margin : 0.0));
    }
  }
  double t_m = clearance;

  const auto k = queue.same_lane_predecessor(index);
  const TerminalTimeRecord* ahead = (k && queue[*k].record) ? &*queue[*k].record : nullptr;

  // Near the MZ a slow vehicle cannot reach the floor; cap it at what half
  // the acceleration budget yields over the remaining distance.
  const double floor = std::min({in.mz_speed_floor, in.bounds.v_max,
                                 std::sqrt(in.v * in.v + in.bounds.u_max * distance)});
  double v_m = 0.0;
  bool fixed = false;
  for (int iter = 0; iter < 50; ++iter) {
    const FdCoefficients fd = solve_fd(in.now, in.p, in.v, t_m, L);
    v_m = eval_fd(fd, t_m).v;
    fixed = v_m < floor;
    if (fixed) v_m = floor;
    if (!(v_m > 0.0)) throw SchedulingError("schedule_cav: non-positive MZ speed");
    if (!ahead) break;
    const double need = ahead->t_f - (S - in.bounds.delta) / v_m;
    if (need <= t_m + 1e-12) break;
    t_m = need;
  }

  rec.t_m = t_m;
  rec.v_m = v_m;
  rec.fixed_terminal_speed = fixed;
  rec.t_f = mz_exit_time(t_m, v_m, S);
  return rec;
}

std::optional<TerminalTimeRecord> reevaluate(const CrossingQueue& queue, std::size_t index,
                                             double observed_pred_speed, const ScheduleInputs& in) {
  const auto& current = queue[index].record;
  if (!current || !current->provisional) return std::nullopt;
  if (std::abs(observed_pred_speed - current->anchor_speed) <= kReevaluationSpeedTol) {
    return std::nullopt;
  }
  return schedule_cav(queue, index, in);
}

}  // namespace cavsim
