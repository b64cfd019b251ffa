// Acceptance checks: one PASS/FAIL line per criterion, details indented beneath.
//   acceptance [--parallelism N] [--only 1,3,7]

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "levcool/config.hpp"
#include "levcool/output.hpp"

using namespace levcool;

namespace {

int g_parallelism = 1;
constexpr double kMbar = kPascalPerMbar;

void detail(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void detail(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  std::printf("    ");
  std::vprintf(fmt, args);
  std::printf("\n");
  va_end(args);
  std::fflush(stdout);
}

struct Setup {
  double pressure_mbar = 1e-3;
  ControllerKind controller = ControllerKind::double_phase;
  double beta = 0.01;
  double delta = 0.0;
  TrackingMode mode = TrackingMode::modulated;
  double dt_e = 5e-9;  // coarse mode unless stated
  int m = 200;
  int n = 5;
  double t_total = 50e-3;
  int stride = 10;
  std::uint64_t seed = 20240611;
  int refinement = 1;
};

RunConfig make(const Setup& s) {
  RunConfig c;
  c.gas.pressure = s.pressure_mbar * kMbar;
  c.control.kind = s.controller;
  c.params.beta = s.beta;
  c.params.delta = s.delta;
  c.tracking_mode = s.mode;
  c.timing = {s.dt_e, s.m, s.n, 5e-3, s.t_total};
  c.record_stride = s.stride;
  c.seed = s.seed;
  c.noise_refinement = s.refinement;
  return c;
}

SweepResult grid(const Setup& s, SweepAxis axis, std::vector<double> values, int repeats) {
  SweepSpec spec;
  spec.base = make(s);
  spec.axis = axis;
  if (axis == SweepAxis::pressure)
    for (double& v : values) v *= kMbar;
  spec.values = values;
  spec.repeats = repeats;
  return sweep(spec, g_parallelism);
}

SweepPoint single(const Setup& s, int repeats) {
  return grid(s, SweepAxis::beta, {s.beta}, repeats).points.front();
}

void show(const char* label, const SweepPoint& p) {
  std::ostringstream runs;
  for (const auto& r : p.runs) runs << ' ' << format_double(std::round(r.summary.steady.mean * 1e3) / 1e3);
  detail("%-28s n = %-11.4g +- %-9.3g r_c = %-9.4g +- %-8.3g conv %d/%zu lost %d heated %d |%s",
         label, p.phonons_mean, p.phonons_std_error, p.rate_mean, p.rate_std_error, p.converged,
         p.runs.size(), p.lost, p.heated, runs.str().c_str());
  if (p.rate_count < static_cast<int>(p.runs.size()))
    for (const auto& r : p.runs)
      if (!r.summary.fit) detail("  seed %llu: %s", static_cast<unsigned long long>(r.seed),
                                 r.summary.fit_error.c_str());
}

// a below b by more than `z` combined standard errors
bool significantly_below(const SweepPoint& a, const SweepPoint& b, double z = 2.0) {
  const double se = std::hypot(a.phonons_std_error, b.phonons_std_error);
  return b.phonons_mean - a.phonons_mean > z * se;
}

struct Slope {
  double slope = 0.0, r2 = 0.0;
};

Slope loglog(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx, dy = std::log(y[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  Slope s;
  s.slope = sxy / sxx;
  s.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return s;
}

// ---- 1

bool criterion_1() {
  // Reference pressure 1e-3 mbar. At 1e-2 mbar the cooled level sits only ~20x below the
  // thermal start, so the e^-3 window closes on fluctuations and the fit is noise-dominated.
  Setup fine;
  fine.pressure_mbar = 1e-3;
  fine.dt_e = 0.5e-9;
  fine.m = 2000;
  const SweepPoint f = single(fine, 5);
  show("fine 0.5 ns, 1e-3 mbar", f);

  // coarse mode on the same Brownian paths
  Setup coarse = fine;
  coarse.dt_e = 5e-9;
  coarse.m = 200;
  coarse.refinement = 10;
  const SweepPoint c = single(coarse, 5);
  show("coarse 5 ns, same paths", c);
  const double shift = std::abs(c.phonons_mean / f.phonons_mean - 1.0);
  detail("coarse-mode steady-state shift %.2f%% (limit 5%%): %s", 100 * shift,
         shift < 0.05 ? "coarse mode validated" : "coarse mode NOT validated");

  Setup sens = coarse;
  sens.refinement = 1;
  sens.pressure_mbar = 1e-2;
  show("sensitivity, 1e-2 mbar", single(sens, 5));
  sens.pressure_mbar = 1e-4;
  show("sensitivity, 1e-4 mbar", single(sens, 5));

  // A thermal start can land below its own later maximum, leaving no decay to fit; one
  // such seed out of five is tolerated and shown above.
  const bool ok = f.rate_count >= 4 && f.rate_mean >= 700 && f.rate_mean <= 6000 && shift < 0.05;
  std::printf("[%s] 1 cooling rate: r_c = %.4g +- %.3g 1/s at 1e-3 mbar (%d/5 fits), band [700, 6000]\n",
              ok ? "PASS" : "FAIL", f.rate_mean, f.rate_std_error, f.rate_count);
  return ok;
}

// ---- 2

bool criterion_2() {
  Setup s;
  s.t_total = 30e-3;
  s.controller = ControllerKind::double_phase;
  const SweepPoint dp = single(s, 5);
  s.controller = ControllerKind::optimal_quadratic;
  const SweepPoint opt = single(s, 5);
  show("double_phase", dp);
  show("optimal_quadratic", opt);
  const double ratio = std::max(dp.phonons_mean, opt.phonons_mean) /
                       std::min(dp.phonons_mean, opt.phonons_mean);
  const bool ok = dp.converged == 5 && opt.converged == 5 && ratio < 2.0;
  std::printf("[%s] 2 optimal vs double phase: n ratio %.3f (limit 2) at beta 0.01, 1e-3 mbar\n",
              ok ? "PASS" : "FAIL", ratio);
  return ok;
}

// ---- 3

bool criterion_3() {
  // 3e-7 mbar: low enough that the modulation depth, not gas heating, sets the floor
  Setup s;
  s.pressure_mbar = 3e-7;
  s.t_total = 20e-3;
  s.mode = TrackingMode::modulated;
  const SweepResult mod = grid(s, SweepAxis::beta, {0.01, 0.05}, 5);
  s.mode = TrackingMode::unmodulated;
  const SweepResult unmod = grid(s, SweepAxis::beta, {0.01, 0.05}, 5);
  show("modulated, beta 0.01", mod.points[0]);
  show("modulated, beta 0.05", mod.points[1]);
  show("unmodulated, beta 0.01", unmod.points[0]);
  show("unmodulated, beta 0.05", unmod.points[1]);
  const bool mod_ok = mod.points[1].phonons_mean < mod.points[0].phonons_mean;
  const bool unmod_ok = unmod.points[1].phonons_mean > unmod.points[0].phonons_mean;
  detail("modulated improves with beta: %s; unmodulated degrades with beta: %s",
         mod_ok ? "yes" : "no", unmod_ok ? "yes" : "no");
  const bool ok = mod_ok && unmod_ok;
  std::printf("[%s] 3 tracking modes: modulated %.4g -> %.4g, unmodulated %.4g -> %.4g (beta 0.01 -> 0.05)\n",
              ok ? "PASS" : "FAIL", mod.points[0].phonons_mean, mod.points[1].phonons_mean,
              unmod.points[0].phonons_mean, unmod.points[1].phonons_mean);
  return ok;
}

// ---- 4

bool criterion_4() {
  Setup s;
  s.controller = ControllerKind::optimal_linear;
  s.beta = 0.0;
  s.t_total = 20e-3;
  const std::vector<double> deltas{1e-17, 1e-16, 1e-15, 1e-14, 1e-13, 1e-12};
  const SweepResult r = grid(s, SweepAxis::delta, deltas, 5);
  std::size_t best = 0;
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    char label[64];
    std::snprintf(label, sizeof label, "optimal_linear delta %.0e", deltas[i]);
    show(label, r.points[i]);
    if (r.points[i].phonons_mean < r.points[best].phonons_mean) best = i;
  }
  const bool interior = best > 0 && best + 1 < r.points.size();
  bool minimum = false;
  if (interior)
    minimum = significantly_below(r.points[best], r.points[best - 1]) &&
              significantly_below(r.points[best], r.points[best + 1]);
  detail("delta* = %.0e N, interior: %s, below both neighbours by > 2 se: %s", deltas[best],
         interior ? "yes" : "no", minimum ? "yes" : "no");

  // cold damping: heating or loss beyond a critical delta
  Setup cd = s;
  cd.controller = ControllerKind::cold_damping;
  const std::vector<double> cd_deltas{1e-14, 1e-13, 1e-12};
  const SweepResult c = grid(cd, SweepAxis::delta, cd_deltas, 5);
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    char label[64];
    std::snprintf(label, sizeof label, "cold_damping delta %.0e", cd_deltas[i]);
    show(label, c.points[i]);
  }
  const double n_thermal = thermal_phonon_number(make(cd).resolved_params());
  const SweepPoint& last = c.points.back();
  const bool cooled_first = c.points.front().heated == 0 && c.points.front().lost == 0;
  const bool diverged = last.heated + last.lost == 5 || last.phonons_mean > n_thermal;
  detail("cold damping cools at small delta: %s; diverges at 1e-12 N: %s (thermal n %.3g)",
         cooled_first ? "yes" : "no", diverged ? "yes" : "no", n_thermal);

  const bool ok = minimum && cooled_first && diverged;
  std::printf("[%s] 4 linear feedback optimum: n(delta*) = %.4g at delta* = %.0e N; cold damping diverges: %s\n",
              ok ? "PASS" : "FAIL", r.points[best].phonons_mean, deltas[best],
              diverged ? "yes" : "no");
  return ok;
}

// ---- 5

bool criterion_5() {
  // beta scaling; 1e-6 mbar so gas damping does not dilute the rate
  Setup s;
  s.pressure_mbar = 1e-6;
  s.t_total = 8e-3;
  s.stride = 1;
  const std::vector<double> betas{0.01, 0.03, 0.1};
  bool beta_ok = true;
  std::string beta_summary;
  for (auto kind : {ControllerKind::double_phase, ControllerKind::optimal_quadratic}) {
    s.controller = kind;
    const SweepResult r = grid(s, SweepAxis::beta, betas, 5);
    std::vector<double> rates;
    for (std::size_t i = 0; i < r.points.size(); ++i) {
      char label[64];
      std::snprintf(label, sizeof label, "%s beta %.2f", to_string(kind), betas[i]);
      show(label, r.points[i]);
      rates.push_back(r.points[i].rate_mean);
    }
    const Slope sl = loglog(betas, rates);
    const bool ok = sl.slope >= 0.8 && sl.slope <= 1.2 && sl.r2 > 0.9;
    detail("%s: log-log slope %.3f, R^2 %.4f", to_string(kind), sl.slope, sl.r2);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s%s slope %.2f", beta_summary.empty() ? "" : ", ",
                  to_string(kind), sl.slope);
    beta_summary += buf;
    beta_ok = beta_ok && ok;
  }

  // delta saturation, cold damping at 1e-3 mbar
  Setup cd;
  cd.controller = ControllerKind::cold_damping;
  cd.beta = 0.0;
  cd.stride = 1;
  cd.t_total = 8e-3;
  const std::vector<double> deltas{1e-15, 1e-14, 1e-13};
  const SweepResult slow = grid(cd, SweepAxis::delta, deltas, 5);
  Setup fast = cd;
  fast.dt_e = 0.5e-9;
  fast.m = 20;
  fast.t_total = 6e-3;
  const SweepResult quick = grid(fast, SweepAxis::delta, deltas, 5);
  std::vector<double> r_slow, r_fast;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    char label[64];
    std::snprintf(label, sizeof label, "dt 1 us, delta %.0e", deltas[i]);
    show(label, slow.points[i]);
    std::snprintf(label, sizeof label, "dt 10 ns, delta %.0e", deltas[i]);
    show(label, quick.points[i]);
    r_slow.push_back(slow.points[i].rate_mean);
    r_fast.push_back(quick.points[i].rate_mean);
  }
  const Slope last_slow = loglog({deltas[1], deltas[2]}, {r_slow[1], r_slow[2]});
  const Slope last_fast = loglog({deltas[1], deltas[2]}, {r_fast[1], r_fast[2]});
  const bool sat_ok = last_slow.slope < 0.3;
  const bool lin_ok = last_fast.slope > 0.7;
  detail("last-decade slope: dt 1 us %.3f (need < 0.3), dt 10 ns %.3f (need > 0.7)",
         last_slow.slope, last_fast.slope);

  const bool ok = beta_ok && sat_ok && lin_ok;
  std::printf("[%s] 5 rate scaling: %s; delta last-decade slope %.2f at 1 us, %.2f at 10 ns\n",
              ok ? "PASS" : "FAIL", beta_summary.c_str(), last_slow.slope, last_fast.slope);
  return ok;
}

// ---- 6

bool criterion_6() {
  Setup s;
  s.t_total = 80e-3;
  const std::vector<double> pressures{1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7,
                                      1e-8, 1e-9, 1e-10, 1e-11};
  // 16 repeats: near the recoil floor single runs scatter by ~40%, and with fewer repeats
  // the standard error of a point is as large as the 20% plateau tolerance
  const SweepResult r = grid(s, SweepAxis::pressure, pressures, 16);
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    char label[64];
    std::snprintf(label, sizeof label, "pressure %.0e mbar", pressures[i]);
    show(label, r.points[i]);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < r.points.size(); ++i) {
    const auto& hi = r.points[i - 1];
    const auto& lo = r.points[i];
    if (lo.phonons_mean > hi.phonons_mean + 2.0 * std::hypot(lo.phonons_std_error, hi.phonons_std_error)) {
      monotone = false;
      detail("increase from %.0e to %.0e mbar beyond error bars", pressures[i - 1], pressures[i]);
    }
  }
  const auto& a = r.points[r.points.size() - 2];
  const auto& b = r.points.back();
  const double change = std::abs(b.phonons_mean / a.phonons_mean - 1.0);
  detail("monotone within 2 se: %s; change between the two lowest pressures %.1f%% (limit 20%%)",
         monotone ? "yes" : "no", 100 * change);
  const bool ok = monotone && change < 0.2;
  std::printf("[%s] 6 pressure: n %.4g at 1e-2 mbar -> %.4g at 1e-11 mbar, plateau change %.1f%%\n",
              ok ? "PASS" : "FAIL", r.points.front().phonons_mean, b.phonons_mean, 100 * change);
  return ok;
}

// ---- 7

bool criterion_7() {
  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + unit(g) * (std::log(hi) - std::log(lo)));
  };
  bool all = true;
  auto check = [&](bool ok, const std::string& what) {
    detail("%s %s", ok ? "ok  " : "FAIL", what.c_str());
    all = all && ok;
  };

  {  // double phase bound
    const PhysicalParams p;
    double worst = 0.0;
    for (int i = 0; i < 1000000; ++i) {
      GaussianMoments x;
      x.mean_z = (unit(g) - 0.5) * log_uniform(1e-15, 1e-6);
      x.mean_p = (unit(g) - 0.5) * log_uniform(1e-30, 1e-18);
      worst = std::max(worst, std::abs(double_phase(x, p.mass, p.omega, 0.0)));
    }
    check(worst <= 1.0, "|double_phase| <= 1 over 1e6 random states (max " + format_double(worst) + ")");
  }

  {  // uncertainty product at the tracker fixed point
    double worst = INFINITY;
    for (int i = 0; i < 100; ++i) {
      PhysicalParams p;
      p.eta = log_uniform(1e-4, 1.0);
      p.alpha = log_uniform(1e23, 1e27);
      p.gamma_c = pressure_to_gamma(log_uniform(1e-10, 1e-1) * kMbar, 50e-9, kAirMolarMass,
                                    p.temperature, p.mass);
      p.beta = unit(g) * 0.5;
      const StationaryVariances v = steady_state_variances(p, 2.0 * unit(g) - 1.0);
      worst = std::min(worst, (v.var_z * v.var_p - v.cov * v.cov) / (kHbar * kHbar / 4.0));
    }
    check(worst >= 1.0 - 1e-6, "fixed-point uncertainty product / (hbar^2/4) >= 1 - 1e-6 over 100 draws (min " +
                                   format_double(worst) + ")");
    PhysicalParams pure;
    pure.eta = 1.0;
    const StationaryVariances v = steady_state_variances(pure, 0.0);
    const double ratio = (v.var_z * v.var_p - v.cov * v.cov) / (kHbar * kHbar / 4.0);
    check(std::abs(ratio - 1.0) < 1e-9, "eta = 1, no gas: product equals hbar^2/4 to 1e-9 (" +
                                            format_double(ratio - 1.0) + ")");
  }

  {  // Riccati consistency
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      PhysicalParams p;
      p.gamma_c = pressure_to_gamma(log_uniform(1e-9, 1e-2) * kMbar, 50e-9, kAirMolarMass,
                                    p.temperature, p.mass);
      p.beta = 0.1 * unit(g);
      const double u = unit(g) < 0.5 ? -1.0 : 1.0;
      const StationaryVariances v = steady_state_variances(p, u);
      TrackerState x{thermal_state(p), TrackingMode::modulated, 0.0};
      for (int k = 0; k < 3000; ++k) x = step_tracking(x, x.moments.mean_z, {u, 0.0}, p, 1e-6);
      worst = std::max({worst, std::abs(x.moments.var_z / v.var_z - 1.0),
                        std::abs(x.moments.var_p / v.var_p - 1.0),
                        std::abs(x.moments.cov / v.cov - 1.0)});
    }
    check(worst < 1e-6, "propagated tracker variances match the stationary root to 1e-6 (worst " +
                            format_double(worst) + ")");
  }

  {  // energy conservation of the decoupled oscillator
    PhysicalParams p;
    p.alpha = 0.0;
    const double period = 2.0 * std::numbers::pi / p.omega;
    const double dt = 0.5e-9;
    EmulationState s{{2e-9, 0.0, 0.0, 0.0, 0.0}, 0.0};
    const double e0 = mean_energy(s.moments, p.mass, p.omega);
    const long steps = std::lround(100 * period / dt);
    for (long i = 0; i < steps; ++i) s = step_srk4(s, {}, {}, dt, p);
    const double drift = std::abs(mean_energy(s.moments, p.mass, p.omega) / e0 - 1.0);
    check(drift < 1e-6, "energy drift over 100 periods < 1e-6 (" + format_double(drift) + ")");
  }

  {  // determinism
    Setup s;
    s.t_total = 8e-3;
    s.stride = 1;
    std::ostringstream a, b;
    write_trace_csv(a, run(make(s)).trace);
    write_trace_csv(b, run(make(s)).trace);
    check(a.str() == b.str() && !a.str().empty(), "identical seed gives a byte-identical trace CSV");
  }

  {  // homodyne statistics
    const PhysicalParams p;
    const int m = 2000, windows = 10000;
    const double dt_e = 0.5e-9;
    RngStreams rng(99);
    double s2 = 0.0;
    std::vector<HomodyneSlice> w(m);
    for (int i = 0; i < windows; ++i) {
      for (auto& sl : w) sl = {0.0, rng.draw(dt_e).dW, p.alpha, dt_e};
      const double j = homodyne_sample(w, p.eta, m * dt_e);
      s2 += j * j;
    }
    const double expected = 1.0 / (8.0 * p.eta * p.alpha * m * dt_e);
    const double rel = s2 / windows / expected - 1.0;
    check(std::abs(rel) < 0.05, "homodyne variance over 1e4 windows within 5% (" +
                                    format_double(std::round(rel * 1e4) / 1e2) + "%)");
  }

  {  // N = 1 brute force
    int agree = 0;
    const int states = 10000;
    for (int i = 0; i < states; ++i) {
      PhysicalParams p;
      p.gamma_c = pressure_to_gamma(log_uniform(1e-9, 1e-2) * kMbar, 50e-9, kAirMolarMass,
                                    p.temperature, p.mass);
      p.beta = 0.5 * unit(g);
      p.delta = log_uniform(1e-17, 1e-12);
      const auto kind = unit(g) < 0.5 ? ControllerKind::optimal_quadratic : ControllerKind::optimal_linear;
      TrackerState x;
      const double amp = log_uniform(1e-11, 1e-7), phase = 2 * std::numbers::pi * unit(g);
      x.moments = {amp * std::cos(phase), -p.mass * p.omega * amp * std::sin(phase),
                   log_uniform(1e-22, 1e-18), log_uniform(1e-46, 1e-42), 0.0};
      x.moments.cov = (unit(g) - 0.5) * std::sqrt(x.moments.var_z * x.moments.var_p);
      const bool quad = kind == ControllerKind::optimal_quadratic;
      const ControlPlan plus = ControlPlan::constant(1e-6, 1, {quad ? 1.0 : 0.0, quad ? 0.0 : 1.0});
      const ControlPlan minus = ControlPlan::constant(1e-6, 1, {quad ? -1.0 : 0.0, quad ? 0.0 : -1.0});
      const double c_plus = lookahead_propagate(x, plus, p);
      const double c_minus = lookahead_propagate(x, minus, p);
      const double want = c_minus < c_plus ? -1.0 : 1.0;
      const ControlPlan chosen = enumerate_optimal(x, p, 1e-6, 1, kind, {});
      const double got = quad ? chosen.u_seq[0] : chosen.v_seq[0];
      agree += got == want;
    }
    check(agree == states, "N = 1 enumeration picks the cheaper branch in " +
                               std::to_string(agree) + "/" + std::to_string(states) + " states");
  }

  std::printf("[%s] 7 property suite\n", all ? "PASS" : "FAIL");
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--parallelism" && i + 1 < argc) {
      g_parallelism = std::max(1, std::atoi(argv[++i]));
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::atoi(tok.c_str()));
    } else {
      std::fprintf(stderr, "usage: acceptance [--parallelism N] [--only 1,2,...]\n");
      return 2;
    }
  }
  const std::vector<std::function<bool()>> criteria{criterion_1, criterion_2, criterion_3,
                                                    criterion_4, criterion_5, criterion_6,
                                                    criterion_7};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    try {
      ok = criteria[i]();
    } catch (const std::exception& e) {
      std::printf("[FAIL] %d aborted: %s\n", id, e.what());
    }
    failed += !ok;
    detail("(%.0f s)", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
