#include "levcool/emulate.hpp"

#include <cmath>
#include <numbers>

namespace levcool {

Vec5 to_vec(const GaussianMoments& s) { return {s.mean_z, s.mean_p, s.var_z, s.var_p, s.cov}; }

GaussianMoments from_vec(const Vec5& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

const char* to_string(SimulationFailure::Kind kind) {
  switch (kind) {
    case SimulationFailure::Kind::particle_lost:
      return "particle_lost";
    case SimulationFailure::Kind::tracking_lost:
      return "tracking_lost";
    case SimulationFailure::Kind::control_infeasible:
      return "control_infeasible";
  }
  return "unknown";
}

EmulationCoefficients::EmulationCoefficients(const PhysicalParams& p, const ControlInput& c,
                                             const EmulationOptions& opts) {
  const double mod = 1.0 + p.beta * c.u;
  k = p.alpha * mod;
  const double gamma = gas_decoherence_rate(p);
  inv_m = 1.0 / p.mass;
  gamma_c = p.gamma_c;
  stiffness = p.mass * p.omega * p.omega * mod;
  rate = 8.0 * k + 4.0 * gamma;
  momentum_diffusion = kHbar * kHbar * (2.0 * k + gamma);
  force = p.delta * c.v;
  var_z_damping = (opts.gas_damping_sign == GasDampingSign::dissipative ? 2.0 : -2.0) * p.gamma_c;
  cov_damping = opts.covariance_damping ? 2.0 * p.gamma_c : 0.0;
  detected = std::sqrt(8.0 * p.eta * k);
  current_scale = 1.0 / detected;
  undetected = std::sqrt(8.0 * (1.0 - p.eta) * k);
  gas = std::sqrt(gamma);
  // gamma_c / sqrt(Gamma), exactly zero without gas
  gas_offset = gamma > 0.0 ? p.gamma_c / gas : 0.0;
  omega_mod = p.omega * std::sqrt(mod);
}

Vec5 EmulationCoefficients::drift(const Vec5& y) const {
  return {y[1] * inv_m - gamma_c * y[0],
          -stiffness * y[0] - gamma_c * y[1] + force,
          2.0 * y[4] * inv_m - var_z_damping * y[2] - rate * y[2] * y[2],
          -2.0 * stiffness * y[4] - 2.0 * gamma_c * y[3] + momentum_diffusion - rate * y[4] * y[4],
          y[3] * inv_m - stiffness * y[2] - rate * y[2] * y[4] - cov_damping * y[4]};
}

namespace {

inline Vec5 axpy(const Vec5& x, double a, const Vec5& d) {
  Vec5 r;
  for (int i = 0; i < 5; ++i) r[i] = x[i] + a * d[i];
  return r;
}

}  // namespace

void EmulationCoefficients::add_noise(Vec5& out, const Vec5& at, const NoiseIncrements& n) const {
  const double common = detected * n.dW + undetected * n.dV + 2.0 * gas * n.dZ;
  out[0] += common * at[2] - gas_offset * n.dZ;
  out[1] += common * at[4];
}

double EmulationCoefficients::stiffness_rate(const Vec5& y) const {
  return 2.0 * rate * std::abs(y[2]) + std::sqrt(2.0 * rate * std::abs(y[4]) * inv_m) +
         omega_mod + 2.0 * gamma_c;
}

Vec5 EmulationCoefficients::step_em(const Vec5& x0, const NoiseIncrements& n, double dt) const {
  Vec5 x1 = axpy(x0, dt, drift(x0));
  add_noise(x1, x0, n);
  return x1;
}

Vec5 EmulationCoefficients::step_srk4(const Vec5& x0, const NoiseIncrements& n, double dt) const {
  const Vec5 k1 = drift(x0);
  const Vec5 k2 = drift(axpy(x0, 0.5 * dt, k1));
  const Vec5 k3 = drift(axpy(x0, 0.5 * dt, k2));
  const Vec5 k4 = drift(axpy(x0, dt, k3));
  Vec5 x1, mid;
  for (int i = 0; i < 5; ++i) {
    x1[i] = x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    mid[i] = 0.5 * (x0[i] + x1[i]);
  }
  add_noise(x1, mid, n);
  return x1;
}

namespace {

void check_gas(const PhysicalParams& p) {
  if (gas_decoherence_rate(p) <= 0.0 && p.gamma_c > 0.0)
    throw std::invalid_argument("diffusion: gas decoherence rate vanishes with gamma_c > 0");
}

}  // namespace

Vec5 drift(const GaussianMoments& y, const ControlInput& c, const PhysicalParams& p,
           const EmulationOptions& opts) {
  return EmulationCoefficients(p, c, opts).drift(to_vec(y));
}

DiffusionMatrix diffusion(const GaussianMoments& y, const ControlInput& c,
                          const PhysicalParams& p) {
  check_gas(p);
  const EmulationCoefficients k(p, c, {});
  DiffusionMatrix b{};
  b[0] = {k.detected * y.var_z, k.undetected * y.var_z, 2.0 * k.gas * y.var_z - k.gas_offset};
  b[1] = {k.detected * y.cov, k.undetected * y.cov, 2.0 * k.gas * y.cov};
  return b;
}

EmulationState step_euler_maruyama(const EmulationState& y, const ControlInput& c,
                                   const NoiseIncrements& noise, double dt,
                                   const PhysicalParams& p, const EmulationOptions& opts) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_euler_maruyama: dt must be > 0");
  check_gas(p);
  return {from_vec(EmulationCoefficients(p, c, opts).step_em(to_vec(y.moments), noise, dt)), y.time + dt};
}

EmulationState step_srk4(const EmulationState& y, const ControlInput& c,
                         const NoiseIncrements& noise, double dt, const PhysicalParams& p,
                         const EmulationOptions& opts) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_srk4: dt must be > 0");
  check_gas(p);
  return {from_vec(EmulationCoefficients(p, c, opts).step_srk4(to_vec(y.moments), noise, dt)),
          y.time + dt};
}

double emulation_stiffness(const GaussianMoments& y, const ControlInput& c,
                           const PhysicalParams& p) {
  return EmulationCoefficients(p, c, {}).stiffness_rate(to_vec(y));
}

HomodyneAccumulator::HomodyneAccumulator(double eta) : eta_(eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("homodyne: eta must be > 0");
}

void HomodyneAccumulator::add(const HomodyneSlice& s) {
  if (!(s.k > 0.0)) throw std::invalid_argument("homodyne: monitoring strength must be > 0");
  integral_ += s.mean_z * s.dt + s.dW / std::sqrt(8.0 * eta_ * s.k);
  duration_ += s.dt;
}

double HomodyneAccumulator::current() const { return integral_ / duration_; }

void HomodyneAccumulator::reset() {
  integral_ = 0.0;
  duration_ = 0.0;
}

double homodyne_sample(std::span<const HomodyneSlice> window, double eta, double dt_total) {
  if (!(dt_total > 0.0)) throw std::invalid_argument("homodyne: window duration must be > 0");
  HomodyneAccumulator acc(eta);
  for (const auto& s : window) acc.add(s);
  return acc.current() * acc.duration() / dt_total;
}

double NormalStream::uniform_open() {
  // 53 random bits mapped to the open interval (0, 1).
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double NormalStream::next() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Marsaglia polar method.
  double a, b, s;
  do {
    a = 2.0 * uniform_open() - 1.0;
    b = 2.0 * uniform_open() - 1.0;
    s = a * a + b * b;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  cached_ = b * f;
  has_cached_ = true;
  return a * f;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = seed;
  std::uint64_t h = splitmix64(s);
  s = h ^ (a * 0xD6E8FEB86659FD93ull);
  h = splitmix64(s);
  s = h ^ (b * 0xA0761D6478BD642Full);
  return splitmix64(s);
}

namespace {
std::uint64_t substream_seed(std::uint64_t seed, int index) {
  std::uint64_t s = seed;
  std::uint64_t out = 0;
  for (int i = 0; i <= index; ++i) out = splitmix64(s);
  return out;
}
}  // namespace

RngStreams::RngStreams(std::uint64_t seed, int refinement)
    : seed_(seed),
      refinement_(refinement),
      w_(substream_seed(seed, 0)),
      v_(substream_seed(seed, 1)),
      z_(substream_seed(seed, 2)),
      bridge_(substream_seed(seed, 3)) {
  if (refinement < 1) throw std::invalid_argument("noise refinement must be >= 1");
}

NoiseIncrements RngStreams::draw(double dt) {
  if (refinement_ == 1) {
    const double s = std::sqrt(dt);
    return {s * w_.next(), s * v_.next(), s * z_.next()};
  }
  NoiseIncrements n;
  for (int i = 0; i < refinement_; ++i) {
    n.dW += w_.next();
    n.dV += v_.next();
    n.dZ += z_.next();
  }
  const double s = std::sqrt(dt / refinement_);
  n.dW *= s;
  n.dV *= s;
  n.dZ *= s;
  return n;
}

Emulator::Emulator(const PhysicalParams& params, const GaussianMoments& initial,
                   std::uint64_t seed, Integrator integrator, const EmulationOptions& opts,
                   int noise_refinement)
    : params_(params),
      opts_(opts),
      integrator_(integrator),
      rng_(seed, noise_refinement),
      state_{initial, 0.0} {
  params_.validate();
}

const EmulationCoefficients& Emulator::coefficients(const ControlInput& c) {
  if (!cached_ || !(cached_for_ == c)) {
    if (gas_decoherence_rate(params_) <= 0.0 && params_.gamma_c > 0.0)
      throw std::invalid_argument("diffusion: gas decoherence rate vanishes with gamma_c > 0");
    cached_.emplace(params_, c, opts_);
    cached_for_ = c;
  }
  return *cached_;
}

void Emulator::advance(const ControlInput& c, double dt, HomodyneAccumulator& current) {
  const EmulationCoefficients& co = coefficients(c);
  const double t_end = state_.time + dt;
  NoiseIncrements rest = rng_.draw(dt);
  double remaining = dt;
  Vec5 y = to_vec(state_.moments);

  while (remaining > 0.0) {
    const double h_max = kStabilityLimit / co.stiffness_rate(y);
    double h = remaining;
    NoiseIncrements inc = rest;
    if (h_max < remaining * (1.0 - 1e-12)) {
      // Brownian bridge: increment over [0, h] given the increment over [0, remaining].
      h = h_max;
      const double frac = h / remaining;
      const double spread = std::sqrt(h * (remaining - h) / remaining);
      inc.dW = rest.dW * frac + spread * rng_.bridge_normal();
      inc.dV = rest.dV * frac + spread * rng_.bridge_normal();
      inc.dZ = rest.dZ * frac + spread * rng_.bridge_normal();
    }
    current.add_raw(y[0] * h + inc.dW * co.current_scale, h);
    y = integrator_ == Integrator::srk4 ? co.step_srk4(y, inc, h) : co.step_em(y, inc, h);
    state_.time += h;
    bool finite = true;
    for (double v : y) finite = finite && std::isfinite(v);
    if (!finite) {
      state_.moments = from_vec(y);
      throw SimulationFailure(SimulationFailure::Kind::particle_lost, state_.time,
                              "emulated state became non-finite");
    }
    rest.dW -= inc.dW;
    rest.dV -= inc.dV;
    rest.dZ -= inc.dZ;
    remaining = h == remaining ? 0.0 : remaining - h;
  }
  state_.moments = from_vec(y);
  state_.time = t_end;
}

}  // namespace levcool
