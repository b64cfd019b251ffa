#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "levcool/core.hpp"
#include "levcool/track.hpp"

namespace levcool {

enum class ControllerKind {
  off,
  double_phase,
  cold_damping,
  optimal_quadratic,
  optimal_linear,
  optimal_combined,
};

const char* to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(const std::string& name);

bool is_optimal(ControllerKind kind);
bool drives_quadratic(ControllerKind kind);
bool drives_linear(ControllerKind kind);

/// Control sequence for one measurement interval: sub_steps entries per channel, each held
/// for horizon / sub_steps.
struct ControlPlan {
  double horizon = 0.0;
  int sub_steps = 0;
  std::vector<double> u_seq;
  std::vector<double> v_seq;
  double cost = 0.0;

  ControlInput at(int i) const { return {u_seq[i], v_seq[i]}; }
  static ControlPlan constant(double horizon, int sub_steps, ControlInput c);
};

/// u = omega x1 x2 / E with E the tracked mean energy; zero below energy_floor (J).
double double_phase(const GaussianMoments& x, double mass, double omega, double energy_floor);

/// v = -x2 / (m v_scale), clipped to [-1, 1].
double cold_damping(const GaussianMoments& x, double mass, double velocity_scale);

/// Zero-innovation prediction (the unknown future current replaced by the predicted mean).
TrackerState predict_tracking(const TrackerState& x, const ControlInput& c,
                              const PhysicalParams& p, double dt);

/// Mean energy after propagating x through the plan's sub-steps without innovation.
/// A non-finite prediction costs +infinity.
double lookahead_propagate(const TrackerState& x, const ControlPlan& plan,
                           const PhysicalParams& p);

/// Maximum number of sub-steps enumerate_optimal accepts.
inline constexpr int kMaxEnumerationSubSteps = 12;

struct Branch {
  std::vector<double> u_seq;
  std::vector<double> v_seq;
  double cost = 0.0;
};

/// Deterministic choice among evaluated branches: the lowest cost, ties (1e-12 relative)
/// broken by the fewest sign switches continuing from prev, then lexicographically with +1
/// before -1. Independent of the order of `branches`.
std::size_t select_branch(std::span<const Branch> branches, const ControlPlan& prev);

/// Counts sign changes of the active channels starting from prev's last actuated value.
int sign_switches(const Branch& b, const ControlPlan& prev);

/// Evaluates every {-1, +1} sequence on the active channels (2^N, or 4^N combined) and
/// returns the cheapest. Throws std::invalid_argument for N beyond the guard or a
/// non-optimal kind, SimulationFailure(control_infeasible) if every branch diverges.
ControlPlan enumerate_optimal(const TrackerState& x, const PhysicalParams& p, double horizon,
                              int sub_steps, ControllerKind kind, const ControlPlan& prev,
                              std::size_t* evaluations = nullptr);

/// All branches with their costs, in enumeration order (exposed for testing).
std::vector<Branch> evaluate_branches(const TrackerState& x, const PhysicalParams& p,
                                      double horizon, int sub_steps, ControllerKind kind);

enum class FeedbackSource { tracked, true_state };

struct ControllerSettings {
  ControllerKind kind = ControllerKind::off;
  /// Floor below which double_phase returns 0, in units of hbar omega.
  double energy_floor_quanta = 1e-3;
  /// Velocity normalisation for cold damping (m/s); <= 0 selects sqrt(k_B T / m).
  double velocity_scale = 0.0;
  /// Diagnostics only: drive double_phase / cold_damping from the emulated state.
  FeedbackSource source = FeedbackSource::tracked;
};

/// Produces one plan per measurement interval. Holds only the previous plan.
class Controller {
 public:
  Controller(const ControllerSettings& settings, const PhysicalParams& params, double horizon,
             int sub_steps);

  ControlPlan decide(const TrackerState& tracked, const GaussianMoments& truth);
  /// Zero plan, used while feedback is disengaged.
  ControlPlan idle() const;

  const ControllerSettings& settings() const { return settings_; }

 private:
  ControllerSettings settings_;
  PhysicalParams params_;
  double horizon_;
  int sub_steps_;
  double velocity_scale_;
  ControlPlan prev_;
};

}  // namespace levcool
