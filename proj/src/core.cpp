#include "levcool/core.hpp"

#include <stdexcept>
#include <string>

namespace levcool {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(field) + ": " + what);
}

}  // namespace

void PhysicalParams::validate() const {
  require(std::isfinite(mass) && mass > 0.0, "mass", "must be > 0");
  require(std::isfinite(omega) && omega > 0.0, "omega", "must be > 0");
  require(std::isfinite(temperature) && temperature > 0.0, "temperature", "must be > 0");
  require(eta > 0.0 && eta <= 1.0, "eta", "must lie in (0, 1]");
  require(std::isfinite(alpha) && alpha >= 0.0, "alpha", "must be >= 0");
  require(std::isfinite(gamma_c) && gamma_c >= 0.0, "gamma_c", "must be >= 0");
  require(beta >= 0.0 && beta < 1.0, "beta", "must lie in [0, 1)");
  require(std::isfinite(delta) && delta >= 0.0, "delta", "must be >= 0");
}

void LaserParams::validate() const {
  require(wavelength > 0.0, "wavelength", "must be > 0");
  require(power > 0.0, "power", "must be > 0");
  require(cross_section > 0.0, "cross_section", "must be > 0");
  require(waist > 0.0, "waist", "must be > 0");
  require(omega_laser > 0.0, "omega_laser", "must be > 0");
}

double gas_decoherence_rate(const PhysicalParams& p) {
  return 4.0 * p.mass * kBoltzmann * p.temperature * p.gamma_c / (kHbar * kHbar);
}

double monitoring_strength(double alpha, double beta, double u) {
  require(beta >= 0.0 && beta < 1.0, "beta", "must lie in [0, 1)");
  require(std::abs(u) <= 1.0, "u", "must lie in [-1, 1]");
  return alpha * (1.0 + beta * u);
}

namespace {
double coupling_per_watt(const LaserParams& l) {
  using std::numbers::pi;
  return 12.0 * pi * pi / (5.0 * l.wavelength * l.wavelength) * l.cross_section /
         (pi * l.waist * l.waist * l.omega_laser);
}
}  // namespace

double coupling_from_laser(const LaserParams& laser) {
  laser.validate();
  return coupling_per_watt(laser) * laser.power;
}

double laser_power_for_coupling(double alpha, const LaserParams& laser) {
  return alpha / coupling_per_watt(laser);
}

double mean_thermal_speed(double gas_molar_mass, double temperature) {
  const double molecule_mass = gas_molar_mass / kAvogadro;
  return std::sqrt(8.0 * kBoltzmann * temperature / (std::numbers::pi * molecule_mass));
}

double pressure_to_gamma(double pressure, double particle_radius, double gas_molar_mass,
                         double temperature, double mass, double drag_coefficient) {
  require(pressure >= 0.0, "pressure", "must be >= 0");
  require(particle_radius > 0.0, "particle_radius", "must be > 0");
  require(gas_molar_mass > 0.0, "gas_molar_mass", "must be > 0");
  require(drag_coefficient >= 0.0, "drag_coefficient", "must be >= 0");
  const double v_th = mean_thermal_speed(gas_molar_mass, temperature);
  return drag_coefficient * pressure * particle_radius * particle_radius / (mass * v_th);
}

GaussianMoments thermal_state(const PhysicalParams& p) {
  const double x = kHbar * p.omega / (2.0 * kBoltzmann * p.temperature);
  const double coth = 1.0 / std::tanh(x);
  GaussianMoments s;
  s.var_z = kHbar / (2.0 * p.mass * p.omega) * coth;
  s.var_p = kHbar * p.mass * p.omega / 2.0 * coth;
  return s;
}

GaussianMoments ground_state(double mass, double omega) {
  GaussianMoments s;
  s.var_z = kHbar / (2.0 * mass * omega);
  s.var_p = kHbar * mass * omega / 2.0;
  return s;
}

double mean_energy(const GaussianMoments& s, double mass, double omega) {
  return (s.mean_p * s.mean_p + s.var_p) / (2.0 * mass) +
         0.5 * mass * omega * omega * (s.mean_z * s.mean_z + s.var_z);
}

double phonon_number(double energy, double omega) {
  const double n = energy / (kHbar * omega) - 0.5;
  return n > 0.0 ? n : 0.0;
}

double thermal_phonon_number(const PhysicalParams& p) {
  return phonon_number(mean_energy(thermal_state(p), p.mass, p.omega), p.omega);
}

}  // namespace levcool
