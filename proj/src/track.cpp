#include "levcool/track.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace levcool {

namespace {

double modulation(const ControlInput& c, const PhysicalParams& p, TrackingMode mode) {
  return mode == TrackingMode::modulated ? 1.0 + p.beta * c.u : 1.0;
}

// gamma_c^2 / Gamma with Gamma substituted, finite at gamma_c = 0.
double position_diffusion(const PhysicalParams& p) {
  return kHbar * kHbar * p.gamma_c / (4.0 * p.mass * kBoltzmann * p.temperature);
}

Vec5 axpy(const Vec5& x, double a, const Vec5& d) {
  Vec5 r;
  for (int i = 0; i < 5; ++i) r[i] = x[i] + a * d[i];
  return r;
}

}  // namespace

Vec5 tracking_rhs(const GaussianMoments& x, double current, const ControlInput& c,
                  const PhysicalParams& p, TrackingMode mode) {
  const double mod = modulation(c, p, mode);
  const double gain = 8.0 * p.eta * p.alpha * mod;
  const double stiffness = p.mass * p.omega * p.omega * mod;
  const double residual = x.mean_z - current;
  const double hbar2 = kHbar * kHbar;

  Vec5 d;
  d[0] = x.mean_p / p.mass - p.gamma_c * x.mean_z - gain * residual * x.var_z;
  d[1] = -stiffness * x.mean_z - p.gamma_c * x.mean_p - gain * residual * x.cov + p.delta * c.v;
  d[2] = 2.0 * x.cov / p.mass - 2.0 * p.gamma_c * x.var_z + position_diffusion(p) -
         gain * x.var_z * x.var_z;
  d[3] = -2.0 * stiffness * x.cov - 2.0 * p.gamma_c * x.var_p + hbar2 * gas_decoherence_rate(p) -
         gain * x.cov * x.cov + 2.0 * hbar2 * p.alpha * mod;
  d[4] = x.var_p / p.mass - stiffness * x.var_z - 2.0 * p.gamma_c * x.cov -
         gain * x.var_z * x.cov;
  return d;
}

double tracking_stiffness(const GaussianMoments& x, const ControlInput& c,
                          const PhysicalParams& p, TrackingMode mode) {
  const double mod = modulation(c, p, mode);
  const double gain = 8.0 * p.eta * p.alpha * mod;
  return 2.0 * gain * std::abs(x.var_z) + std::sqrt(2.0 * gain * std::abs(x.cov) / p.mass) +
         p.omega * std::sqrt(mod) + 2.0 * p.gamma_c;
}

TrackerState step_tracking(const TrackerState& x, double current, const ControlInput& c,
                           const PhysicalParams& p, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_tracking: dt must be > 0");
  constexpr double kStabilityLimit = 2.0;

  Vec5 s = to_vec(x.moments);
  double remaining = dt;
  while (remaining > 0.0) {
    const double h_max = kStabilityLimit / tracking_stiffness(from_vec(s), c, p, x.mode);
    const double h = h_max < remaining * (1.0 - 1e-12) ? h_max : remaining;
    const Vec5 k1 = tracking_rhs(from_vec(s), current, c, p, x.mode);
    const Vec5 k2 = tracking_rhs(from_vec(axpy(s, 0.5 * h, k1)), current, c, p, x.mode);
    const Vec5 k3 = tracking_rhs(from_vec(axpy(s, 0.5 * h, k2)), current, c, p, x.mode);
    const Vec5 k4 = tracking_rhs(from_vec(axpy(s, h, k3)), current, c, p, x.mode);
    for (int i = 0; i < 5; ++i) s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    remaining = h == remaining ? 0.0 : remaining - h;
  }

  TrackerState out{from_vec(s), x.mode, x.time + dt};
  if (!out.moments.finite())
    throw SimulationFailure(SimulationFailure::Kind::tracking_lost, out.time,
                            "tracked state became non-finite");
  return out;
}

namespace {

// Riccati system in zero-point units: V_z in hbar/(m w), V_p in hbar m w, C in hbar, time in
// 1/w. With a = gamma_c/w, G the scaled measurement gain and q1, q2 the scaled diffusions:
//   0 = 2 X5 - 2a X3 + q1 - G X3^2
//   0 = -2 s X5 - 2a X4 + q2 - G X5^2
//   0 = X4 - s X3 - 2a X5 - G X3 X5
struct ScaledRiccati {
  double a, s, gain, q1, q2;

  double cov(double x3) const { return 0.5 * (gain * x3 * x3 + 2.0 * a * x3 - q1); }
  double var_p(double x3, double x5) const { return s * x3 + 2.0 * a * x5 + gain * x3 * x5; }
  double residual(double x3) const {
    const double x5 = cov(x3);
    const double x4 = var_p(x3, x5);
    return -2.0 * s * x5 - 2.0 * a * x4 + q2 - gain * x5 * x5;
  }
  bool stabilising(double x3) const {
    const double x5 = cov(x3);
    const double x4 = var_p(x3, x5);
    if (!(x3 > 0.0 && x4 > 0.0 && x3 * x4 - x5 * x5 > 0.0)) return false;
    // Closed-loop generator [[-a - G X3, 1], [-s - G X5, -a]] must be Hurwitz.
    const double det = (a + gain * x3) * a + (s + gain * x5);
    return det > 0.0;
  }
};

std::optional<double> bisect(const ScaledRiccati& r, double lo, double hi) {
  double f_lo = r.residual(lo);
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f_mid = r.residual(mid);
    if (f_mid == 0.0) return mid;
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  const double root = 0.5 * (lo + hi);
  if (!std::isfinite(root)) return std::nullopt;
  return root;
}

}  // namespace

StationaryVariances steady_state_variances(const PhysicalParams& p, double u_const,
                                           TrackingMode mode) {
  p.validate();
  if (std::abs(u_const) > 1.0) throw std::invalid_argument("u_const must lie in [-1, 1]");
  const double mod = modulation({u_const, 0.0}, p, mode);
  const double len2 = kHbar / (p.mass * p.omega);     // position variance unit
  const double mom2 = kHbar * p.mass * p.omega;       // momentum variance unit
  const double gain = 8.0 * p.eta * p.alpha * mod;

  ScaledRiccati r;
  r.a = p.gamma_c / p.omega;
  r.s = mod;
  r.gain = gain * len2 / p.omega;
  r.q1 = position_diffusion(p) / (len2 * p.omega);
  r.q2 = (kHbar * kHbar * (gas_decoherence_rate(p) + 2.0 * p.alpha * mod)) / (mom2 * p.omega);

  // Scan for sign changes of the scalar residual on a logarithmic grid, then refine.
  std::vector<double> roots;
  double prev_x = 1e-30;
  double prev_f = r.residual(prev_x);
  for (double x = prev_x * 1.1; x < 1e30; x *= 1.1) {
    const double f = r.residual(x);
    if (std::isfinite(f) && std::isfinite(prev_f) && (f > 0.0) != (prev_f > 0.0)) {
      if (auto root = bisect(r, prev_x, x)) roots.push_back(*root);
    }
    prev_x = x;
    prev_f = f;
  }
  for (double x3 : roots) {
    if (!r.stabilising(x3)) continue;
    const double x5 = r.cov(x3);
    const double x4 = r.var_p(x3, x5);
    return {x3 * len2, x4 * mom2, x5 * kHbar};
  }
  throw std::runtime_error("steady_state_variances: no stabilising root found");
}

}  // namespace levcool
