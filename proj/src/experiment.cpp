#include "levcool/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace levcool {

void LoopTiming::validate() const {
  if (!(dt_e > 0.0)) throw std::invalid_argument("timing.dt_e: must be > 0");
  if (m < 1) throw std::invalid_argument("timing.m: must be >= 1");
  if (n < 1) throw std::invalid_argument("timing.n: must be >= 1");
  if (m % n != 0) throw std::invalid_argument("timing.m: must be a multiple of timing.n");
  if (!(t_prep >= 0.0)) throw std::invalid_argument("timing.t_prep: must be >= 0");
  if (!(t_total > t_prep)) throw std::invalid_argument("timing.t_total: must exceed t_prep");
}

double GasSettings::resolve(const PhysicalParams& p) const {
  if (gamma_c.has_value() == pressure.has_value())
    throw std::invalid_argument("gas: exactly one of gamma_c and pressure must be given");
  if (gamma_c) {
    if (!(*gamma_c >= 0.0)) throw std::invalid_argument("gas.gamma_c: must be >= 0");
    return *gamma_c;
  }
  return pressure_to_gamma(*pressure, particle_radius, molar_mass, p.temperature, p.mass,
                           drag_coefficient);
}

PhysicalParams RunConfig::resolved_params() const {
  PhysicalParams p = params;
  p.gamma_c = gas.resolve(p);
  if (laser) p.alpha = coupling_from_laser(*laser);
  p.validate();
  return p;
}

void RunConfig::validate() const {
  resolved_params();
  timing.validate();
  if (record_stride < 1) throw std::invalid_argument("run.record_stride: must be >= 1");
  if (noise_refinement < 1) throw std::invalid_argument("emulation.noise_refinement: must be >= 1");
  if (is_optimal(control.kind) && timing.n > kMaxEnumerationSubSteps)
    throw std::invalid_argument("timing.n: optimal control enumerates at most " +
                                std::to_string(kMaxEnumerationSubSteps) + " sub-steps");
}

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::completed:
      return "completed";
    case RunStatus::particle_lost:
      return "particle_lost";
    case RunStatus::tracking_lost:
      return "tracking_lost";
    case RunStatus::control_infeasible:
      return "control_infeasible";
  }
  return "unknown";
}

namespace {

RunStatus status_of(SimulationFailure::Kind kind) {
  switch (kind) {
    case SimulationFailure::Kind::particle_lost:
      return RunStatus::particle_lost;
    case SimulationFailure::Kind::tracking_lost:
      return RunStatus::tracking_lost;
    case SimulationFailure::Kind::control_infeasible:
      return RunStatus::control_infeasible;
  }
  return RunStatus::particle_lost;
}

}  // namespace

RunResult run(const RunConfig& config) {
  config.validate();
  const PhysicalParams p = config.resolved_params();
  const LoopTiming& tm = config.timing;

  const GaussianMoments y0 = thermal_state(p);
  Emulator emulator(p, y0, config.seed, config.integrator, config.emulation,
                    config.noise_refinement);
  TrackerState tracker{config.tracker_initial.value_or(y0), config.tracking_mode, 0.0};
  Controller controller(config.control, p, tm.dt(), tm.n);
  HomodyneAccumulator current(p.eta);

  const long long intervals = std::llround(tm.t_total / tm.dt());
  const long long prep_intervals = std::llround(tm.t_prep / tm.dt());
  const int per_substep = tm.m / tm.n;
  const double dt_c = tm.dt_c();

  RunResult result;
  result.feedback_onset = prep_intervals * tm.dt();
  result.thermal_phonons = thermal_phonon_number(p);
  result.trace.reserve(static_cast<std::size_t>(intervals / config.record_stride + 1));

  try {
    for (long long i = 0; i < intervals; ++i) {
      const ControlPlan plan = i >= prep_intervals
                                   ? controller.decide(tracker, emulator.state().moments)
                                   : controller.idle();
      current.reset();
      for (int j = 0; j < tm.m; ++j) emulator.advance(plan.at(j / per_substep), tm.dt_e, current);
      const double j_sample = current.current();
      for (int s = 0; s < tm.n; ++s) tracker = step_tracking(tracker, j_sample, plan.at(s), p, dt_c);

      if ((i + 1) % config.record_stride == 0) {
        TraceRecord r;
        r.t = static_cast<double>(i + 1) * tm.dt();
        r.y = emulator.state().moments;
        r.x = tracker.moments;
        r.u = plan.u_seq.front();
        r.v = plan.v_seq.front();
        r.current = j_sample;
        r.energy_true = mean_energy(r.y, p.mass, p.omega);
        r.energy_est = mean_energy(r.x, p.mass, p.omega);
        r.phonons_true = phonon_number(r.energy_true, p.omega);
        result.trace.push_back(r);
      }
    }
  } catch (const SimulationFailure& failure) {
    result.status = status_of(failure.kind());
    result.failure_time = failure.time();
    result.failure_message = failure.what();
  }
  return result;
}

// ---------------------------------------------------------------------------------------
// Analysis

namespace {

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double rms = 0.0;
};

LineFit fit_line(const double* t, const double* y, std::size_t n) {
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tm += t[i];
    ym += y[i];
  }
  tm /= n;
  ym /= n;
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    stt += (t[i] - tm) * (t[i] - tm);
    sty += (t[i] - tm) * (y[i] - ym);
  }
  LineFit f;
  f.slope = stt > 0.0 ? sty / stt : 0.0;
  f.intercept = ym - f.slope * tm;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * t[i]);
    ss += r * r;
  }
  f.rms = std::sqrt(ss / n);
  return f;
}

std::vector<double> column_t(const std::vector<TraceRecord>& trace) {
  std::vector<double> t(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) t[i] = trace[i].t;
  return t;
}

std::vector<double> column_n(const std::vector<TraceRecord>& trace) {
  std::vector<double> n(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) n[i] = trace[i].phonons_true;
  return n;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

double std_error_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1) / v.size());
}

}  // namespace

FitResult fit_cooling_rate(const std::vector<double>& t, const std::vector<double>& n,
                           const FitOptions& options) {
  if (t.size() != n.size()) throw AnalysisError("fit: time and phonon columns differ in length");
  std::vector<double> ts, ls;
  double n_max = 0.0;
  std::size_t first = t.size();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < options.onset) continue;
    if (first == t.size()) first = i;
    n_max = std::max(n_max, n[i]);
  }
  if (first == t.size() || !(n_max > 0.0))
    throw AnalysisError("no decay window: no positive phonon numbers after feedback onset");

  const double threshold = n_max * options.fraction;
  bool crossed = false;
  for (std::size_t i = first; i < t.size(); ++i) {
    if (n[i] > 0.0) {
      ts.push_back(t[i]);
      ls.push_back(std::log(n[i]));
    }
    if (n[i] < threshold) {
      crossed = true;
      break;
    }
  }
  if (!crossed)
    throw AnalysisError("no decay window: phonon number never fell below the fit threshold");
  if (static_cast<int>(ts.size()) < options.min_samples)
    throw AnalysisError("decay window holds " + std::to_string(ts.size()) + " samples, need " +
                        std::to_string(options.min_samples));

  const LineFit f = fit_line(ts.data(), ls.data(), ts.size());
  FitResult r;
  r.amplitude = std::exp(f.intercept);
  r.rate = -f.slope;
  r.t_start = ts.front();
  r.t_end = ts.back();
  r.rms_residual = f.rms;
  r.samples = static_cast<int>(ts.size());
  if (!std::isfinite(r.rate)) throw AnalysisError("fit produced a non-finite rate");
  return r;
}

FitResult fit_cooling_rate(const std::vector<TraceRecord>& trace, const FitOptions& options) {
  return fit_cooling_rate(column_t(trace), column_n(trace), options);
}

namespace {

double window_mean(const double* n, std::size_t count) {
  return std::accumulate(n, n + count, 0.0) / count;
}

}  // namespace

SteadyState steady_state_phonon(const std::vector<double>& t, const std::vector<double>& n,
                                const SteadyOptions& options) {
  if (t.size() != n.size()) throw AnalysisError("steady state: column length mismatch");
  if (!(options.window > 0.0)) throw AnalysisError("steady state: window must be > 0");

  // Complete windows after onset.
  std::vector<double> windows;
  std::size_t begin = 0;
  while (begin < t.size() && t[begin] < options.onset) ++begin;
  if (begin == t.size()) throw AnalysisError("steady state: no samples after feedback onset");
  const double t_last = t.back();
  for (long w = 0;; ++w) {
    const double lo = options.onset + w * options.window;
    const double hi = lo + options.window;
    if (hi > t_last + 1e-12 * options.window) break;
    std::size_t end = begin;
    while (end < t.size() && t[end] < hi) ++end;
    if (end > begin) windows.push_back(window_mean(&n[begin], end - begin));
    begin = end;
  }
  if (windows.empty()) throw AnalysisError("steady state: trace shorter than one window");

  constexpr double kTiny = 1e-300;
  std::vector<double> logs(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) logs[i] = std::log(std::max(windows[i], kTiny));

  // Reference: the later half of the windows (at least `consecutive`). It must show no
  // resolved trend; its scatter then sets how close earlier windows have to be.
  const std::size_t need = static_cast<std::size_t>(std::max(options.consecutive, 1));
  const double log_tol = std::log1p(options.rel_tol);
  SteadyState s;
  std::size_t start = windows.size();
  if (windows.size() >= need) {
    const std::size_t ref = std::max(need, windows.size() / 2);
    const std::size_t r0 = windows.size() - ref;
    std::vector<double> idx(ref);
    std::iota(idx.begin(), idx.end(), 0.0);
    const LineFit f = fit_line(idx.data(), &logs[r0], ref);
    double spread = 0.0, sxx = 0.0;
    const double ref_mean = std::accumulate(logs.begin() + r0, logs.end(), 0.0) / ref;
    for (std::size_t i = 0; i < ref; ++i) {
      spread += (logs[r0 + i] - ref_mean) * (logs[r0 + i] - ref_mean);
      sxx += (idx[i] - 0.5 * (ref - 1)) * (idx[i] - 0.5 * (ref - 1));
    }
    spread = ref > 1 ? std::sqrt(spread / (ref - 1)) : 0.0;
    // Low occupations wander over several windows; lag-1 correlation of the residuals
    // widens the slope error accordingly.
    double c0 = 0.0, c1 = 0.0;
    for (std::size_t i = 0; i < ref; ++i) {
      const double e = logs[r0 + i] - (f.intercept + f.slope * idx[i]);
      c0 += e * e;
      if (i > 0) c1 += e * (logs[r0 + i - 1] - (f.intercept + f.slope * idx[i - 1]));
    }
    // with the usual small-sample bias correction of the lag-1 estimate
    const double rho_raw = c0 > 0.0 ? c1 / c0 : 0.0;
    const double rho = std::clamp(rho_raw + (1.0 + 3.0 * rho_raw) / ref, 0.0, 0.9);
    const double drift = std::abs(f.slope) * (ref - 1);
    const double drift_se = ref > 2 ? f.rms * std::sqrt(ref / (ref - 2.0)) / std::sqrt(sxx) *
                                          (ref - 1) * std::sqrt((1.0 + rho) / (1.0 - rho))
                                    : 0.0;
    const bool stationary = drift < std::max(log_tol, options.z_score * drift_se);
    if (stationary) {
      const double band = std::max(log_tol, options.z_score * spread);
      start = r0;
      while (start > 0 && std::abs(logs[start - 1] - ref_mean) < band) --start;
    }
  }
  if (start < windows.size()) {
    s.converged = true;
    s.t_converged = options.onset + start * options.window;
  } else {
    start = windows.size() > need ? windows.size() - need : 0;
  }
  std::vector<double> means(windows.begin() + start, windows.end());
  s.mean = mean_of(means);
  s.std_error = std_error_of(means);
  s.windows_used = static_cast<int>(means.size());
  return s;
}

SteadyState steady_state_phonon(const std::vector<TraceRecord>& trace,
                                const SteadyOptions& options) {
  return steady_state_phonon(column_t(trace), column_n(trace), options);
}

RunSummary summarize(const RunResult& result, const AnalysisOptions& analysis) {
  RunSummary s;
  s.status = result.status;
  s.failure_time = result.failure_time;
  if (result.status != RunStatus::completed) {
    s.heated = true;
    s.steady.mean = std::numeric_limits<double>::infinity();
    return s;
  }
  try {
    s.steady = steady_state_phonon(result.trace, analysis.steady(result.feedback_onset));
  } catch (const AnalysisError&) {
    s.steady.mean = std::numeric_limits<double>::quiet_NaN();
  }
  try {
    s.fit = fit_cooling_rate(result.trace, analysis.fit(result.feedback_onset));
  } catch (const AnalysisError& e) {
    s.fit_error = e.what();
  }
  s.heated = s.steady.mean > result.thermal_phonons;
  return s;
}

// ---------------------------------------------------------------------------------------
// Sweeps

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::beta:
      return "beta";
    case SweepAxis::delta:
      return "delta";
    case SweepAxis::pressure:
      return "pressure";
  }
  return "unknown";
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  for (auto a : {SweepAxis::beta, SweepAxis::delta, SweepAxis::pressure})
    if (name == to_string(a)) return a;
  throw std::invalid_argument("unknown sweep axis '" + name + "'");
}

void SweepSpec::validate() const {
  if (values.empty()) throw std::invalid_argument("sweep.values: grid must not be empty");
  if (repeats < 1) throw std::invalid_argument("sweep.repeats: must be >= 1");
  for (std::size_t i = 0; i < values.size(); ++i) point_config(i, 0).validate();
}

RunConfig SweepSpec::point_config(std::size_t point, int repeat) const {
  RunConfig c = base;
  const double value = values.at(point);
  switch (axis) {
    case SweepAxis::beta:
      c.params.beta = value;
      break;
    case SweepAxis::delta:
      c.params.delta = value;
      break;
    case SweepAxis::pressure:
      c.gas.gamma_c.reset();
      c.gas.pressure = value;
      break;
  }
  c.seed = derive_seed(base.seed, point, static_cast<std::uint64_t>(repeat));
  return c;
}

void aggregate(SweepPoint& point) {
  std::vector<double> n, r;
  point.completed = point.converged = point.lost = point.heated = 0;
  for (const auto& run : point.runs) {
    if (!run.done) continue;
    ++point.completed;
    const auto& s = run.summary;
    if (s.status != RunStatus::completed) {
      ++point.lost;
    } else if (std::isfinite(s.steady.mean)) {
      n.push_back(s.steady.mean);
    }
    if (s.steady.converged) ++point.converged;
    if (s.heated) ++point.heated;
    if (s.fit) r.push_back(s.fit->rate);
  }
  point.phonons_mean = n.empty() ? std::numeric_limits<double>::infinity() : mean_of(n);
  point.phonons_std_error = std_error_of(n);
  point.rate_mean = r.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(r);
  point.rate_std_error = std_error_of(r);
  point.rate_count = static_cast<int>(r.size());
}

SweepResult sweep(const SweepSpec& spec, int parallelism, const SweepCallback& on_run,
                  const std::atomic<bool>* stop) {
  spec.validate();
  SweepResult result;
  result.points.resize(spec.values.size());
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    result.points[i].value = spec.values[i];
    result.points[i].runs.resize(spec.repeats);
  }

  const std::size_t jobs = spec.values.size() * spec.repeats;
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      if (stop && stop->load()) break;
      const std::size_t point = job / spec.repeats;
      const int repeat = static_cast<int>(job % spec.repeats);
      const RunConfig cfg = spec.point_config(point, repeat);
      SweepRun& slot = result.points[point].runs[repeat];
      slot.seed = cfg.seed;
      slot.summary = summarize(run(cfg), spec.analysis);
      slot.done = true;
      if (on_run) {
        std::lock_guard lock(callback_mutex);
        on_run(point, repeat, slot);
      }
    }
  };

  const int threads = std::max(1, parallelism);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& p : result.points) {
    aggregate(p);
    for (const auto& r : p.runs) result.interrupted = result.interrupted || !r.done;
  }
  return result;
}

}  // namespace levcool
