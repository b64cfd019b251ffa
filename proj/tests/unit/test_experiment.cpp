#include <atomic>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "levcool/experiment.hpp"

using namespace levcool;

namespace {

RunConfig short_run(ControllerKind kind = ControllerKind::double_phase) {
  RunConfig c;
  c.gas.pressure = 0.1;  // Pa
  c.params.beta = 0.05;
  c.timing = {5e-9, 200, 5, 0.1e-3, 0.3e-3};
  c.control.kind = kind;
  c.record_stride = 4;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("fit recovers an exact exponential") {
  std::vector<double> t, n;
  for (int i = 0; i < 400; ++i) {
    t.push_back(1e-3 + i * 1e-5);
    n.push_back(5e7 * std::exp(-1234.5 * t.back()));
  }
  const FitResult f = fit_cooling_rate(t, n, {1e-3, std::exp(-3.0), 10});
  CHECK(f.rate == doctest::Approx(1234.5).epsilon(1e-9));
  CHECK(f.amplitude == doctest::Approx(5e7).epsilon(1e-9));
  CHECK(f.t_start == 1e-3);
  // the window closes at the first sample below max * e^-3
  const double t_cross = 1e-3 + 3.0 / 1234.5;
  CHECK(f.t_end >= t_cross);
  CHECK(f.t_end < t_cross + 1e-5);
  CHECK(f.rms_residual < 1e-9);
}

TEST_CASE("fit with multiplicative noise") {
  std::mt19937_64 g(4);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<double> t, n;
  for (int i = 0; i < 2000; ++i) {
    t.push_back(i * 1e-6);
    n.push_back(1e6 * std::exp(-2000.0 * t.back() + noise(g)));
  }
  const FitResult f = fit_cooling_rate(t, n, {0.0, std::exp(-3.0), 10});
  CHECK(f.rate == doctest::Approx(2000.0).epsilon(0.02));
  CHECK(f.rms_residual == doctest::Approx(0.05).epsilon(0.2));
}

TEST_CASE("fit ignores samples before the onset") {
  std::vector<double> t, n;
  for (int i = 0; i < 500; ++i) {
    t.push_back(i * 1e-5);
    n.push_back(t.back() < 1e-3 ? 1e8 : 1e8 * std::exp(-1500.0 * (t.back() - 1e-3)));
  }
  const FitResult f = fit_cooling_rate(t, n, {1e-3, std::exp(-3.0), 10});
  CHECK(f.rate == doctest::Approx(1500.0).epsilon(1e-9));
  CHECK(f.amplitude == doctest::Approx(1e8 * std::exp(1.5)).epsilon(1e-9));
}

TEST_CASE("fit failures") {
  std::vector<double> t{0, 1, 2, 3}, flat{5, 5, 5, 5};
  CHECK_THROWS_WITH_AS(fit_cooling_rate(t, flat, {}), doctest::Contains("no decay window"),
                       AnalysisError);
  std::vector<double> fast{100, 1, 0.5, 0.1};
  CHECK_THROWS_AS(fit_cooling_rate(t, fast, {}), AnalysisError);  // too few samples
}

TEST_CASE("steady state of a stationary series") {
  std::vector<double> t, n;
  std::mt19937_64 g(8);
  std::exponential_distribution<double> occupation(1.0 / 250.0);
  for (int i = 0; i < 20000; ++i) {
    t.push_back(i * 1e-6);
    n.push_back(t.back() < 2e-3 ? 1e6 * std::exp(-3000.0 * t.back()) : 250.0);
  }
  SteadyState s = steady_state_phonon(t, n, {});
  CHECK(s.converged);
  CHECK(s.mean == doctest::Approx(250.0));
  CHECK(s.t_converged >= 2e-3);

  // thermal-like fluctuations around a constant level
  for (std::size_t i = 0; i < n.size(); ++i)
    if (t[i] >= 2e-3) n[i] = occupation(g);
  s = steady_state_phonon(t, n, {});
  CHECK(s.converged);
  CHECK(s.mean == doctest::Approx(250.0).epsilon(0.05));
  CHECK(s.std_error > 0.0);
}

TEST_CASE("steady state tolerates slow stationary excursions") {
  // window log-means follow an AR(1) walk like a cooled trajectory near n = 20
  std::mt19937_64 g(12);
  std::normal_distribution<double> kick(0.0, 0.8 * std::sqrt(1.0 - 0.25));
  int converged = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> t, n;
    double level = 0.0;
    for (int w = 0; w < 75; ++w) {
      level = 0.5 * level + kick(g);
      for (int i = 0; i < 100; ++i) {
        t.push_back((w * 100 + i) * 1e-5);
        n.push_back(20.0 * std::exp(level));
      }
    }
    converged += steady_state_phonon(t, n, {}).converged;
  }
  CHECK(converged >= 38);
}

TEST_CASE("steady state rejects a steady drift") {
  std::vector<double> t, n;
  for (int i = 0; i < 20000; ++i) {
    t.push_back(i * 1e-6);
    n.push_back(100.0 * std::pow(1.1, t.back() / 1e-3));  // +10% per window
  }
  const SteadyState s = steady_state_phonon(t, n, {});
  CHECK_FALSE(s.converged);
  CHECK(s.windows_used == 3);
}

TEST_CASE("loop timing validation") {
  LoopTiming t;
  CHECK_NOTHROW(t.validate());
  CHECK(t.dt() == doctest::Approx(1e-6));
  CHECK(t.dt_c() == doctest::Approx(2e-7));
  t.m = 2001;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = {};
  t.t_total = t.t_prep;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("gas settings need exactly one knob") {
  RunConfig c = short_run();
  c.gas.gamma_c = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.gas.pressure.reset();
  CHECK(c.resolved_params().gamma_c == 1.0);
}

TEST_CASE("run is deterministic and records on the stride") {
  const RunConfig c = short_run();
  const RunResult a = run(c);
  const RunResult b = run(c);
  REQUIRE(a.status == RunStatus::completed);
  REQUIRE(a.trace.size() == 75);
  CHECK(a.trace.front().t == doctest::Approx(4e-6));
  CHECK(a.trace.back().t == doctest::Approx(3e-4));
  CHECK(a.feedback_onset == doctest::Approx(1e-4));
  bool identical = a.trace.size() == b.trace.size();
  for (std::size_t i = 0; identical && i < a.trace.size(); ++i)
    identical = a.trace[i].y == b.trace[i].y && a.trace[i].x == b.trace[i].x &&
                a.trace[i].current == b.trace[i].current && a.trace[i].u == b.trace[i].u;
  CHECK(identical);

  RunConfig other = c;
  other.seed = 18;
  CHECK(run(other).trace.back().y != a.trace.back().y);

  // no feedback before the onset, feedback afterwards
  for (const auto& r : a.trace) {
    if (r.t <= a.feedback_onset) CHECK(r.u == 0.0);
  }
  bool active = false;
  for (const auto& r : a.trace) active = active || r.u != 0.0;
  CHECK(active);
}

TEST_CASE("trace energies are consistent with the recorded moments") {
  const RunConfig c = short_run(ControllerKind::optimal_quadratic);
  const RunResult r = run(c);
  const PhysicalParams p = c.resolved_params();
  for (const auto& rec : r.trace) {
    CHECK(rec.energy_true == doctest::Approx(mean_energy(rec.y, p.mass, p.omega)));
    CHECK(rec.phonons_true == doctest::Approx(phonon_number(rec.energy_true, p.omega)));
  }
}

TEST_CASE("sweep aggregation does not depend on the worker count") {
  SweepSpec spec;
  spec.base = short_run();
  spec.axis = SweepAxis::beta;
  spec.values = {0.01, 0.05};
  spec.repeats = 2;
  const SweepResult one = sweep(spec, 1);
  const SweepResult three = sweep(spec, 3);
  REQUIRE(one.points.size() == 2);
  CHECK_FALSE(one.interrupted);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(one.points[i].completed == 2);
    CHECK(one.points[i].phonons_mean == three.points[i].phonons_mean);
    CHECK(one.points[i].phonons_std_error == three.points[i].phonons_std_error);
    for (int r = 0; r < 2; ++r) CHECK(one.points[i].runs[r].seed == three.points[i].runs[r].seed);
  }
  CHECK(one.points[0].runs[0].seed == derive_seed(spec.base.seed, 0, 0));
  CHECK(one.points[1].runs[1].seed == derive_seed(spec.base.seed, 1, 1));
}

TEST_CASE("a stopped sweep reports what finished") {
  SweepSpec spec;
  spec.base = short_run();
  spec.axis = SweepAxis::pressure;
  spec.values = {0.1, 0.01, 0.001};
  spec.repeats = 1;
  std::atomic<bool> stop{false};
  int seen = 0;
  const SweepResult r = sweep(
      spec, 1, [&](std::size_t, int, const SweepRun&) { stop = ++seen == 1; }, &stop);
  CHECK(r.interrupted);
  CHECK(r.points[0].completed == 1);
  CHECK(r.points[1].completed == 0);
  CHECK(std::isinf(r.points[1].phonons_mean));
}

TEST_CASE("sweep validation") {
  SweepSpec spec;
  spec.base = short_run();
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);  // empty grid
  spec.values = {1.5};
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("beta"), std::invalid_argument);
  CHECK(sweep_axis_from_string("delta") == SweepAxis::delta);
  CHECK_THROWS_AS(sweep_axis_from_string("mass"), std::invalid_argument);
}
