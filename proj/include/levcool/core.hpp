#pragma once

#include <cmath>
#include <numbers>

namespace levcool {

// CODATA 2018 exact / recommended values.
inline constexpr double kHbar = 1.054571817e-34;      // J s
inline constexpr double kBoltzmann = 1.380649e-23;    // J/K
inline constexpr double kAvogadro = 6.02214076e23;    // 1/mol
inline constexpr double kPascalPerMbar = 100.0;

/// Particle, trap, gas and feedback constants entering the moment equations.
struct PhysicalParams {
  double mass = 9.42e-19;                              // kg
  double omega = 2.0 * std::numbers::pi * 70.0e3;      // rad/s
  double temperature = 300.0;                          // K
  double eta = 0.003;                                  // detection efficiency
  double alpha = 4.04e25;                              // 1/(m^2 s)
  double gamma_c = 0.0;                                // 1/s
  double beta = 0.0;                                   // modulation depth
  double delta = 0.0;                                  // N

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct LaserParams {
  double wavelength = 1550e-9;  // m
  double power = 0.0;           // W
  double cross_section = 0.0;   // m^2
  double waist = 0.0;           // m
  double omega_laser = 0.0;     // rad/s

  void validate() const;
};

/// Mean position/momentum, their variances and the symmetrised covariance.
struct GaussianMoments {
  double mean_z = 0.0;
  double mean_p = 0.0;
  double var_z = 0.0;
  double var_p = 0.0;
  double cov = 0.0;

  bool finite() const {
    return std::isfinite(mean_z) && std::isfinite(mean_p) && std::isfinite(var_z) &&
           std::isfinite(var_p) && std::isfinite(cov);
  }
  /// var_z * var_p - cov^2
  double uncertainty_product() const { return var_z * var_p - cov * cov; }

  bool operator==(const GaussianMoments&) const = default;
};

/// Dimensionless feedback signals; the actuators apply beta*u and delta*v.
struct ControlInput {
  double u = 0.0;
  double v = 0.0;

  bool operator==(const ControlInput&) const = default;
};

/// Gamma = 4 m k_B T gamma_c / hbar^2
double gas_decoherence_rate(const PhysicalParams& params);

/// k = alpha (1 + beta u). Rejects beta outside [0, 1) and |u| > 1.
double monitoring_strength(double alpha, double beta, double u);

/// alpha = (12 pi^2 / 5 lambda^2) * sigma P / (pi w0^2 omega_L)
double coupling_from_laser(const LaserParams& laser);

/// Inverse of coupling_from_laser for the power: P such that the formula yields alpha.
double laser_power_for_coupling(double alpha, const LaserParams& laser);

/// Epstein free-molecular drag for diffuse reflection, (32/3)(1 + pi/8).
inline constexpr double kEpsteinDragCoefficient = 32.0 / 3.0 * (1.0 + std::numbers::pi / 8.0);
/// Molar mass of dry air.
inline constexpr double kAirMolarMass = 0.02897;  // kg/mol

/// Mean thermal speed sqrt(8 k_B T / (pi m_molecule)) of the background gas.
double mean_thermal_speed(double gas_molar_mass, double temperature);

/// gamma_c = c_drag * P * r^2 / (m * v_th). Linear in pressure; rejects negative pressure.
double pressure_to_gamma(double pressure, double particle_radius, double gas_molar_mass,
                         double temperature, double mass,
                         double drag_coefficient = kEpsteinDragCoefficient);

/// Gaussian thermal state of the trap at the gas temperature, zero means.
GaussianMoments thermal_state(const PhysicalParams& params);

/// Ground-state variances hbar/(2 m omega), hbar m omega / 2.
GaussianMoments ground_state(double mass, double omega);

/// <H0> = (<p>^2 + V_p)/2m + m omega^2 (<z>^2 + V_z)/2
double mean_energy(const GaussianMoments& s, double mass, double omega);

/// n = E/(hbar omega) - 1/2, clamped at zero.
double phonon_number(double energy, double omega);

/// k_B T / (hbar omega) - 1/2 evaluated exactly through the thermal state.
double thermal_phonon_number(const PhysicalParams& params);

}  // namespace levcool
