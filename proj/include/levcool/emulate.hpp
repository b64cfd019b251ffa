#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

#include "levcool/core.hpp"

namespace levcool {

using Vec5 = std::array<double, 5>;

Vec5 to_vec(const GaussianMoments& s);
GaussianMoments from_vec(const Vec5& v);

/// Raised when a closed-loop run cannot continue.
class SimulationFailure : public std::runtime_error {
 public:
  enum class Kind { particle_lost, tracking_lost, control_infeasible };

  SimulationFailure(Kind kind, double time, const std::string& what)
      : std::runtime_error(what), kind_(kind), time_(time) {}

  Kind kind() const { return kind_; }
  double time() const { return time_; }

 private:
  Kind kind_;
  double time_;
};

const char* to_string(SimulationFailure::Kind kind);

struct NoiseIncrements {
  double dW = 0.0;  // detected photons
  double dV = 0.0;  // undetected photons
  double dZ = 0.0;  // gas collisions
};

struct EmulationState {
  GaussianMoments moments;
  double time = 0.0;
};

/// Sign of the 2 gamma_c V_z term in the emulated position-variance equation.
enum class GasDampingSign {
  dissipative,  // -2 gamma_c V_z, same as the tracker; the conditional state then drifts
                // below the uncertainty bound
  as_printed,   // +2 gamma_c V_z, consistent with the gamma_c term in the dZ coefficient
};

enum class Integrator { srk4, euler_maruyama };

struct EmulationOptions {
  GasDampingSign gas_damping_sign = GasDampingSign::as_printed;
  /// Adds -2 gamma_c C to the covariance equation, mirroring the tracker.
  bool covariance_damping = false;
};

/// Deterministic part of the emulation SDEs. The monitoring strength is modulated by u.
Vec5 drift(const GaussianMoments& y, const ControlInput& c, const PhysicalParams& p,
           const EmulationOptions& opts = {});

/// Coefficients of the moment equations for fixed (params, control).
struct EmulationCoefficients {
  EmulationCoefficients(const PhysicalParams& p, const ControlInput& c,
                        const EmulationOptions& opts);

  Vec5 drift(const Vec5& y) const;
  void add_noise(Vec5& out, const Vec5& at, const NoiseIncrements& n) const;
  double stiffness_rate(const Vec5& y) const;
  Vec5 step_em(const Vec5& x0, const NoiseIncrements& n, double dt) const;
  Vec5 step_srk4(const Vec5& x0, const NoiseIncrements& n, double dt) const;

  double k, inv_m, gamma_c, stiffness, rate, momentum_diffusion, force, var_z_damping,
      cov_damping;
  double current_scale;  // 1 / sqrt(8 eta k)
  double detected, undetected, gas, gas_offset, omega_mod;
};

/// Rows: components of y; columns: coefficients of (dW, dV, dZ).
using DiffusionMatrix = std::array<std::array<double, 3>, 5>;

DiffusionMatrix diffusion(const GaussianMoments& y, const ControlInput& c,
                          const PhysicalParams& p);

EmulationState step_euler_maruyama(const EmulationState& y, const ControlInput& c,
                                   const NoiseIncrements& noise, double dt,
                                   const PhysicalParams& p, const EmulationOptions& opts = {});

/// Classical RK4 on the drift; the noise enters once with the diffusion evaluated at the
/// midpoint between the initial and the deterministically advanced state.
EmulationState step_srk4(const EmulationState& y, const ControlInput& c,
                         const NoiseIncrements& noise, double dt, const PhysicalParams& p,
                         const EmulationOptions& opts = {});

/// Largest explicit-stability rate of the emulated moment equations (1/s). The Riccati
/// terms make this large right after a thermal initialisation.
double emulation_stiffness(const GaussianMoments& y, const ControlInput& c,
                           const PhysicalParams& p);

/// One instantaneous-current contribution: y1 integrated over dt and the dW that drove it.
struct HomodyneSlice {
  double mean_z = 0.0;
  double dW = 0.0;
  double k = 0.0;
  double dt = 0.0;
};

/// Running window average of J dt = <z> dt + dW / sqrt(8 eta k).
class HomodyneAccumulator {
 public:
  explicit HomodyneAccumulator(double eta);

  void add(const HomodyneSlice& s);
  /// Adds an already-scaled contribution <z> dt + dW / sqrt(8 eta k).
  void add_raw(double increment, double dt) {
    integral_ += increment;
    duration_ += dt;
  }
  double eta() const { return eta_; }
  /// Average current over the accumulated window (m).
  double current() const;
  double duration() const { return duration_; }
  void reset();

 private:
  double eta_;
  double integral_ = 0.0;
  double duration_ = 0.0;
};

/// J = (1/dt_total) sum_i [y1_i dt_i + dW_i / sqrt(8 eta k_i)].
double homodyne_sample(std::span<const HomodyneSlice> window, double eta, double dt_total);

/// Counter-free normal deviates from a 64-bit Mersenne twister. The transform is spelled
/// out here so a seed gives the same sequence with any standard library.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
  double next();

 private:
  double uniform_open();

  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes (seed, a, b) into a new seed; used for sweep points and repeats.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

/// Three independent Wiener streams plus an auxiliary stream for Brownian-bridge refinement.
class RngStreams {
 public:
  /// refinement: each increment over dt is the sum of `refinement` draws at dt/refinement,
  /// so a run at dt with refinement r sees the same Brownian path as a run at dt/r.
  explicit RngStreams(std::uint64_t seed, int refinement = 1);

  NoiseIncrements draw(double dt);
  double bridge_normal() { return bridge_.next(); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  int refinement_;
  NormalStream w_;
  NormalStream v_;
  NormalStream z_;
  NormalStream bridge_;
};

/// Drives the emulated particle one emulation step at a time, splitting a step when the
/// moment equations are too stiff for it and refining the noise through a Brownian bridge.
class Emulator {
 public:
  Emulator(const PhysicalParams& params, const GaussianMoments& initial, std::uint64_t seed,
           Integrator integrator = Integrator::srk4, const EmulationOptions& opts = {},
           int noise_refinement = 1);

  /// Advances by dt with c held; feeds the homodyne accumulator. Throws SimulationFailure
  /// (particle_lost) when the state stops being finite.
  void advance(const ControlInput& c, double dt, HomodyneAccumulator& current);

  const EmulationState& state() const { return state_; }
  const PhysicalParams& params() const { return params_; }
  /// Safety factor: a sub-step h satisfies stiffness * h <= this.
  static constexpr double kStabilityLimit = 2.0;

 private:
  const EmulationCoefficients& coefficients(const ControlInput& c);

  PhysicalParams params_;
  EmulationOptions opts_;
  Integrator integrator_;
  RngStreams rng_;
  EmulationState state_;
  std::optional<EmulationCoefficients> cached_;
  ControlInput cached_for_;
};

}  // namespace levcool
