#include "levcool/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace levcool {

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::off:
      return "off";
    case ControllerKind::double_phase:
      return "double_phase";
    case ControllerKind::cold_damping:
      return "cold_damping";
    case ControllerKind::optimal_quadratic:
      return "optimal_quadratic";
    case ControllerKind::optimal_linear:
      return "optimal_linear";
    case ControllerKind::optimal_combined:
      return "optimal_combined";
  }
  return "unknown";
}

ControllerKind controller_kind_from_string(const std::string& name) {
  for (auto k : {ControllerKind::off, ControllerKind::double_phase, ControllerKind::cold_damping,
                 ControllerKind::optimal_quadratic, ControllerKind::optimal_linear,
                 ControllerKind::optimal_combined}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown controller '" + name + "'");
}

bool is_optimal(ControllerKind kind) {
  return kind == ControllerKind::optimal_quadratic || kind == ControllerKind::optimal_linear ||
         kind == ControllerKind::optimal_combined;
}

bool drives_quadratic(ControllerKind kind) {
  return kind == ControllerKind::double_phase || kind == ControllerKind::optimal_quadratic ||
         kind == ControllerKind::optimal_combined;
}

bool drives_linear(ControllerKind kind) {
  return kind == ControllerKind::cold_damping || kind == ControllerKind::optimal_linear ||
         kind == ControllerKind::optimal_combined;
}

ControlPlan ControlPlan::constant(double horizon, int sub_steps, ControlInput c) {
  ControlPlan plan;
  plan.horizon = horizon;
  plan.sub_steps = sub_steps;
  plan.u_seq.assign(sub_steps, c.u);
  plan.v_seq.assign(sub_steps, c.v);
  return plan;
}

double double_phase(const GaussianMoments& x, double mass, double omega, double energy_floor) {
  const double energy = x.mean_p * x.mean_p / (2.0 * mass) +
                        0.5 * mass * omega * omega * x.mean_z * x.mean_z;
  if (!(energy > energy_floor)) return 0.0;
  const double u = omega * x.mean_z * x.mean_p / energy;
  return std::clamp(u, -1.0, 1.0);  // only rounding can push |u| past 1
}

double cold_damping(const GaussianMoments& x, double mass, double velocity_scale) {
  return std::clamp(-x.mean_p / (mass * velocity_scale), -1.0, 1.0);
}

namespace {

Vec5 prediction_rhs(const GaussianMoments& x, const ControlInput& c, const PhysicalParams& p,
                    TrackingMode mode) {
  // The innovation vanishes when the current equals the predicted mean.
  return tracking_rhs(x, x.mean_z, c, p, mode);
}

Vec5 axpy(const Vec5& x, double a, const Vec5& d) {
  Vec5 r;
  for (int i = 0; i < 5; ++i) r[i] = x[i] + a * d[i];
  return r;
}

}  // namespace

TrackerState predict_tracking(const TrackerState& x, const ControlInput& c,
                              const PhysicalParams& p, double dt) {
  constexpr double kStabilityLimit = 2.0;
  Vec5 s = to_vec(x.moments);
  double remaining = dt;
  while (remaining > 0.0) {
    const double h_max = kStabilityLimit / tracking_stiffness(from_vec(s), c, p, x.mode);
    const double h = h_max < remaining * (1.0 - 1e-12) ? h_max : remaining;
    const Vec5 k1 = prediction_rhs(from_vec(s), c, p, x.mode);
    const Vec5 k2 = prediction_rhs(from_vec(axpy(s, 0.5 * h, k1)), c, p, x.mode);
    const Vec5 k3 = prediction_rhs(from_vec(axpy(s, 0.5 * h, k2)), c, p, x.mode);
    const Vec5 k4 = prediction_rhs(from_vec(axpy(s, h, k3)), c, p, x.mode);
    for (int i = 0; i < 5; ++i) s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    remaining = h == remaining ? 0.0 : remaining - h;
  }
  return {from_vec(s), x.mode, x.time + dt};
}

double lookahead_propagate(const TrackerState& x, const ControlPlan& plan,
                           const PhysicalParams& p) {
  const double dt = plan.horizon / plan.sub_steps;
  TrackerState s = x;
  for (int i = 0; i < plan.sub_steps; ++i) s = predict_tracking(s, plan.at(i), p, dt);
  const double cost = mean_energy(s.moments, p.mass, p.omega);
  return std::isfinite(cost) && s.moments.finite() ? cost
                                                   : std::numeric_limits<double>::infinity();
}

namespace {

double last_value(const std::vector<double>& seq) { return seq.empty() ? 1.0 : seq.back(); }

int count_switches(const std::vector<double>& seq, double start) {
  int n = 0;
  double last = start == 0.0 ? 1.0 : start;
  for (double s : seq) {
    if (s != 0.0 && s != last) ++n;
    if (s != 0.0) last = s;
  }
  return n;
}

// true if a precedes b with +1 ranked before -1.
bool lex_before(const Branch& a, const Branch& b) {
  for (std::size_t i = 0; i < a.u_seq.size(); ++i)
    if (a.u_seq[i] != b.u_seq[i]) return a.u_seq[i] > b.u_seq[i];
  for (std::size_t i = 0; i < a.v_seq.size(); ++i)
    if (a.v_seq[i] != b.v_seq[i]) return a.v_seq[i] > b.v_seq[i];
  return false;
}

}  // namespace

int sign_switches(const Branch& b, const ControlPlan& prev) {
  return count_switches(b.u_seq, last_value(prev.u_seq)) +
         count_switches(b.v_seq, last_value(prev.v_seq));
}

std::size_t select_branch(std::span<const Branch> branches, const ControlPlan& prev) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& b : branches) best = std::min(best, b.cost);
  if (!std::isfinite(best)) return branches.size();

  const double cutoff = best + 1e-12 * std::abs(best);
  std::size_t pick = branches.size();
  int pick_switches = 0;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (!(branches[i].cost <= cutoff)) continue;
    const int sw = sign_switches(branches[i], prev);
    if (pick == branches.size() || sw < pick_switches ||
        (sw == pick_switches && lex_before(branches[i], branches[pick]))) {
      pick = i;
      pick_switches = sw;
    }
  }
  return pick;
}

namespace {

struct Enumeration {
  const PhysicalParams& p;
  double dt;
  int sub_steps;
  bool quadratic;
  bool linear;
  std::vector<Branch>& out;
  std::vector<double> u;
  std::vector<double> v;

  // Depth-first over sub-steps; sibling branches share their common prefix.
  void descend(const TrackerState& s, int depth) {
    if (depth == sub_steps) {
      double cost = mean_energy(s.moments, p.mass, p.omega);
      if (!std::isfinite(cost) || !s.moments.finite())
        cost = std::numeric_limits<double>::infinity();
      out.push_back({u, v, cost});
      return;
    }
    const double u_choices[2] = {1.0, -1.0};
    const int nu = quadratic ? 2 : 1;
    const int nv = linear ? 2 : 1;
    for (int iu = 0; iu < nu; ++iu) {
      for (int iv = 0; iv < nv; ++iv) {
        u[depth] = quadratic ? u_choices[iu] : 0.0;
        v[depth] = linear ? u_choices[iv] : 0.0;
        descend(predict_tracking(s, {u[depth], v[depth]}, p, dt), depth + 1);
      }
    }
  }
};

}  // namespace

std::vector<Branch> evaluate_branches(const TrackerState& x, const PhysicalParams& p,
                                      double horizon, int sub_steps, ControllerKind kind) {
  if (!is_optimal(kind))
    throw std::invalid_argument("enumerate_optimal: controller must be an optimal_* kind");
  if (sub_steps < 1 || sub_steps > kMaxEnumerationSubSteps)
    throw std::invalid_argument("enumerate_optimal: sub_steps must lie in [1, " +
                                std::to_string(kMaxEnumerationSubSteps) + "]");
  std::vector<Branch> branches;
  const bool quad = drives_quadratic(kind);
  const bool lin = drives_linear(kind);
  branches.reserve(std::size_t{1} << ((quad + lin) * sub_steps));
  Enumeration e{p,   horizon / sub_steps,
                sub_steps, quad, lin, branches, std::vector<double>(sub_steps, 0.0),
                std::vector<double>(sub_steps, 0.0)};
  e.descend(x, 0);
  return branches;
}

ControlPlan enumerate_optimal(const TrackerState& x, const PhysicalParams& p, double horizon,
                              int sub_steps, ControllerKind kind, const ControlPlan& prev,
                              std::size_t* evaluations) {
  const auto branches = evaluate_branches(x, p, horizon, sub_steps, kind);
  if (evaluations) *evaluations = branches.size();
  const std::size_t pick = select_branch(branches, prev);
  if (pick == branches.size())
    throw SimulationFailure(SimulationFailure::Kind::control_infeasible, x.time,
                            "every control branch diverged");
  ControlPlan plan;
  plan.horizon = horizon;
  plan.sub_steps = sub_steps;
  plan.u_seq = branches[pick].u_seq;
  plan.v_seq = branches[pick].v_seq;
  plan.cost = branches[pick].cost;
  return plan;
}

Controller::Controller(const ControllerSettings& settings, const PhysicalParams& params,
                       double horizon, int sub_steps)
    : settings_(settings),
      params_(params),
      horizon_(horizon),
      sub_steps_(sub_steps),
      velocity_scale_(settings.velocity_scale > 0.0
                          ? settings.velocity_scale
                          : std::sqrt(kBoltzmann * params.temperature / params.mass)) {
  if (is_optimal(settings.kind) &&
      (sub_steps < 1 || sub_steps > kMaxEnumerationSubSteps))
    throw std::invalid_argument("optimal control needs 1 <= N <= " +
                                std::to_string(kMaxEnumerationSubSteps));
}

ControlPlan Controller::idle() const { return ControlPlan::constant(horizon_, sub_steps_, {}); }

ControlPlan Controller::decide(const TrackerState& tracked, const GaussianMoments& truth) {
  const GaussianMoments& basis =
      settings_.source == FeedbackSource::true_state ? truth : tracked.moments;
  ControlPlan plan;
  switch (settings_.kind) {
    case ControllerKind::off:
      plan = idle();
      break;
    case ControllerKind::double_phase: {
      const double floor = settings_.energy_floor_quanta * kHbar * params_.omega;
      plan = ControlPlan::constant(horizon_, sub_steps_,
                                   {double_phase(basis, params_.mass, params_.omega, floor), 0.0});
      break;
    }
    case ControllerKind::cold_damping:
      plan = ControlPlan::constant(horizon_, sub_steps_,
                                   {0.0, cold_damping(basis, params_.mass, velocity_scale_)});
      break;
    case ControllerKind::optimal_quadratic:
    case ControllerKind::optimal_linear:
    case ControllerKind::optimal_combined:
      plan = enumerate_optimal(tracked, params_, horizon_, sub_steps_, settings_.kind, prev_);
      break;
  }
  prev_ = plan;
  return plan;
}

}  // namespace levcool
