#include "cavsim/arbitration.hpp"

#include <algorithm>
#include <cmath>

namespace cavsim {

void SignalCycle::validate() const {
  if (!(green_ns > 0.0 && green_ew > 0.0 && all_red > 0.0)) {
    throw DomainError("signal cycle: all durations must be > 0");
  }
}

std::string_view to_string(RuleKind k) {
  switch (k) {
    case RuleKind::CA1_Passive: return "CA1";
    case RuleKind::CA2_Partial: return "CA2";
    case RuleKind::CA3_Full: return "CA3";
    case RuleKind::TLC: return "TLC";
  }
  return "?";
}

PhaseState tlc_phase(double t, const SignalCycle& cycle) {
  const double period = cycle.period();
  double tau = std::fmod(t - cycle.offset, period);
  if (tau < 0.0) tau += period;
  const double start = t - tau;
  PhaseState s;
  if (tau < cycle.green_ns) {
    s.north_south = Signal::Green;
    s.green_end = start + cycle.green_ns;
  } else if (tau >= cycle.green_ns + cycle.all_red &&
             tau < cycle.green_ns + cycle.all_red + cycle.green_ew) {
    s.east_west = Signal::Green;
    s.green_end = start + cycle.green_ns + cycle.all_red + cycle.green_ew;
  }
  return s;
}

void MzOccupancy::grant(const MzWindow& w) {
  release(w.id);
  windows_.push_back(w);
}

void MzOccupancy::update(VehicleId id, double entry, double exit) {
  for (auto& w : windows_) {
    if (w.id == id) {
      w.entry = entry;
      w.exit = exit;
    }
  }
}

void MzOccupancy::mark_inside(VehicleId id) {
  if (!inside(id)) inside_.push_back(id);
}

void MzOccupancy::release(VehicleId id) {
  std::erase_if(windows_, [id](const MzWindow& w) { return w.id == id; });
  std::erase(inside_, id);
}

bool MzOccupancy::holds(VehicleId id) const { return find(id) != nullptr; }

const MzWindow* MzOccupancy::find(VehicleId id) const {
  for (const auto& w : windows_) {
    if (w.id == id) return &w;
  }
  return nullptr;
}

bool MzOccupancy::inside(VehicleId id) const {
  return std::find(inside_.begin(), inside_.end(), id) != inside_.end();
}

namespace {

bool conflicts(const MzWindow& a, const MzWindow& b) {
  return a.id != b.id && relation_between(a.approach, b.approach) == Relation::Conflicting;
}

bool overlaps(const MzWindow& a, const MzWindow& b, double margin) {
  return a.entry <= b.exit + margin && b.entry <= a.exit + margin;
}

template <class Pred>
bool any_blocking(const MzWindow& req, std::span<const MzWindow> ws, double margin, Pred&& pick) {
  for (const auto& w : ws) {
    if (conflicts(req, w) && pick(w) && overlaps(req, w, margin)) return true;
  }
  return false;
}

}  // namespace

Directive request_mz_entry(const MzWindow& request, const MzOccupancy& occupancy,
                           std::span<const MzWindow> approaching, const ConflictRule& rule,
                           double t, double margin) {
  const auto all = [](const MzWindow&) { return true; };
  switch (rule.kind) {
    case RuleKind::CA1_Passive:
      return Directive::Proceed;
    case RuleKind::CA2_Partial: {
      if (road_of(request.approach) == rule.major) return Directive::Proceed;
      const auto major = [&](const MzWindow& w) { return road_of(w.approach) == rule.major; };
      for (const auto& w : occupancy.windows()) {
        if (conflicts(request, w) && occupancy.inside(w.id)) return Directive::Yield;
      }
      if (any_blocking(request, occupancy.windows(), margin, major)) return Directive::Yield;
      if (any_blocking(request, approaching, margin, major)) return Directive::Yield;
      return Directive::Proceed;
    }
    case RuleKind::CA3_Full: {
      for (const auto& w : occupancy.windows()) {
        if (conflicts(request, w) && occupancy.inside(w.id)) return Directive::Yield;
      }
      return any_blocking(request, occupancy.windows(), margin, all) ? Directive::Yield
                                                                     : Directive::Proceed;
    }
    case RuleKind::TLC: {
      const PhaseState phase = tlc_phase(t, rule.cycle);
      if (phase.of(request.approach) == Signal::Red) return Directive::Yield;
      if (request.exit > phase.green_end + rule.cycle.all_red) return Directive::Yield;
      for (const auto& w : occupancy.windows()) {
        if (conflicts(request, w) && occupancy.inside(w.id)) return Directive::Yield;
      }
      return Directive::Proceed;
    }
  }
  return Directive::Proceed;
}

OverrideDecision cav_mz_override(const MzWindow& cav, const MzOccupancy& occupancy,
                                 std::span<const MzWindow> approaching, const ConflictRule& rule,
                                 double t, double margin) {
  if (rule.kind == RuleKind::TLC) {
    const Directive d = request_mz_entry(cav, occupancy, approaching, rule, t, margin);
    return {d == Directive::Yield, d};
  }

  MzOccupancy unscheduled;
  bool any = false;
  for (const auto& w : occupancy.windows()) {
    if (w.scheduled) continue;
    unscheduled.grant(w);
    if (occupancy.inside(w.id)) unscheduled.mark_inside(w.id);
    any = any || conflicts(cav, w);
  }
  std::vector<MzWindow> heading;
  for (const auto& w : approaching) {
    if (w.scheduled) continue;
    heading.push_back(w);
    any = any || conflicts(cav, w);
  }
  if (!any) return {false, Directive::Proceed};

  const Directive d = request_mz_entry(cav, unscheduled, heading, rule, t, margin);
  return {d == Directive::Yield, d};
}

double stop_line_profile(double v, double distance, double max_decel, double dt) {
  if (v <= 0.0) return 0.0;
  if (distance <= 0.1) return std::max(-v / dt, max_decel);
  return std::clamp(-v * v / (2.0 * distance), max_decel, 0.0);
}

double travel_time(double distance, double v, double accel, double v_cruise) {
  if (distance <= 0.0) return 0.0;
  v = std::max(v, 0.0);
  if (accel <= 0.0 || v >= v_cruise) {
    return v > 0.0 ? distance / v : distance / v_cruise;
  }
  const double ramp = (v_cruise * v_cruise - v * v) / (2.0 * accel);
  if (ramp >= distance) {
    return (std::sqrt(v * v + 2.0 * accel * distance) - v) / accel;
  }
  return (v_cruise - v) / accel + (distance - ramp) / v_cruise;
}

}  // namespace cavsim
