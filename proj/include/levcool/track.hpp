#pragma once

#include "levcool/core.hpp"
#include "levcool/emulate.hpp"

namespace levcool {

/// Unmodulated tracking runs the filter with beta = 0 whatever the actuator does.
enum class TrackingMode { modulated, unmodulated };

struct TrackerState {
  GaussianMoments moments;
  TrackingMode mode = TrackingMode::modulated;
  double time = 0.0;
};

/// Right-hand side of the tracking equations for a held current J.
Vec5 tracking_rhs(const GaussianMoments& x, double current, const ControlInput& c,
                  const PhysicalParams& p, TrackingMode mode);

/// Largest explicit-stability rate of the tracking equations (1/s).
double tracking_stiffness(const GaussianMoments& x, const ControlInput& c,
                          const PhysicalParams& p, TrackingMode mode);

/// Advances the tracker by dt with RK4, splitting dt into as many sub-steps as the
/// stiffness requires. Throws SimulationFailure(tracking_lost) on a non-finite state.
TrackerState step_tracking(const TrackerState& x, double current, const ControlInput& c,
                           const PhysicalParams& p, double dt);

struct StationaryVariances {
  double var_z = 0.0;
  double var_p = 0.0;
  double cov = 0.0;
};

/// Stabilising root of the tracker's algebraic Riccati system at constant u. Throws
/// std::runtime_error when no stabilising positive-definite root is found.
StationaryVariances steady_state_variances(const PhysicalParams& p, double u_const,
                                           TrackingMode mode = TrackingMode::modulated);

}  // namespace levcool
