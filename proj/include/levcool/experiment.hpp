#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "levcool/control.hpp"
#include "levcool/core.hpp"
#include "levcool/emulate.hpp"
#include "levcool/track.hpp"

namespace levcool {

/// dt = M dt_E between measurements, dt_C = dt / N between control sub-steps.
struct LoopTiming {
  double dt_e = 0.5e-9;
  int m = 2000;
  int n = 5;
  double t_prep = 5e-3;
  double t_total = 50e-3;

  double dt() const { return m * dt_e; }
  double dt_c() const { return dt() / n; }
  /// Requires M >= 1, N >= 1, M divisible by N and t_total > t_prep.
  void validate() const;
};

/// The gas knob: either a damping rate or a pressure converted through Epstein drag.
struct GasSettings {
  std::optional<double> gamma_c;   // 1/s
  std::optional<double> pressure;  // Pa
  double particle_radius = 50e-9;
  double molar_mass = kAirMolarMass;
  double drag_coefficient = kEpsteinDragCoefficient;

  double resolve(const PhysicalParams& p) const;
};

struct RunConfig {
  PhysicalParams params;  // gamma_c and alpha are overwritten by gas / laser when given
  std::optional<LaserParams> laser;
  GasSettings gas;
  LoopTiming timing;
  ControllerSettings control;
  TrackingMode tracking_mode = TrackingMode::modulated;
  std::uint64_t seed = 1;
  int record_stride = 10;
  Integrator integrator = Integrator::srk4;
  EmulationOptions emulation;
  /// Wiener increments per emulation step; see RngStreams.
  int noise_refinement = 1;
  /// Robustness experiments: start the tracker from this state instead of y(0).
  std::optional<GaussianMoments> tracker_initial;

  /// Parameters with gamma_c and alpha resolved; validated.
  PhysicalParams resolved_params() const;
  void validate() const;
};

struct TraceRecord {
  double t = 0.0;
  GaussianMoments y;
  GaussianMoments x;
  double u = 0.0;
  double v = 0.0;
  double current = 0.0;
  double energy_true = 0.0;
  double energy_est = 0.0;
  double phonons_true = 0.0;
};

enum class RunStatus { completed, particle_lost, tracking_lost, control_infeasible };
const char* to_string(RunStatus s);

struct RunResult {
  std::vector<TraceRecord> trace;
  RunStatus status = RunStatus::completed;
  double failure_time = 0.0;
  std::string failure_message;
  double feedback_onset = 0.0;
  double thermal_phonons = 0.0;
};

/// Preparation with controls off for t_prep, then closed-loop feedback until t_total. Per
/// measurement interval: M emulation steps, one homodyne sample, N tracker sub-steps and one
/// controller decision for the next interval.
RunResult run(const RunConfig& config);

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitOptions {
  double onset = 0.0;
  /// The window ends where n first drops below this fraction of its maximum.
  double fraction = 0.049787068367863944;  // e^-3
  int min_samples = 10;
};

struct FitResult {
  double amplitude = 0.0;
  double rate = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
  double rms_residual = 0.0;
  int samples = 0;
};

/// Least-squares fit of ln n = ln A - r_c t over the decay window. Throws AnalysisError.
FitResult fit_cooling_rate(const std::vector<double>& t, const std::vector<double>& n,
                           const FitOptions& options);
FitResult fit_cooling_rate(const std::vector<TraceRecord>& trace, const FitOptions& options);

struct SteadyOptions {
  double onset = 0.0;
  double window = 1e-3;
  int consecutive = 3;
  /// Consecutive window means agree when their log ratio is below ln(1 + rel_tol) or below
  /// z_score combined standard errors of the window log-means.
  double rel_tol = 0.05;
  double z_score = 3.0;
};

struct SteadyState {
  double mean = 0.0;
  double std_error = 0.0;
  bool converged = false;
  double t_converged = 0.0;
  int windows_used = 0;
};

SteadyState steady_state_phonon(const std::vector<double>& t, const std::vector<double>& n,
                                const SteadyOptions& options);
SteadyState steady_state_phonon(const std::vector<TraceRecord>& trace,
                                const SteadyOptions& options);

struct AnalysisOptions {
  double fit_fraction = 0.049787068367863944;
  double steady_window = 1e-3;
  int steady_consecutive = 3;
  double steady_rel_tol = 0.05;
  double steady_z_score = 3.0;

  FitOptions fit(double onset) const { return {onset, fit_fraction, 10}; }
  SteadyOptions steady(double onset) const {
    return {onset, steady_window, steady_consecutive, steady_rel_tol, steady_z_score};
  }
};

struct RunSummary {
  RunStatus status = RunStatus::completed;
  double failure_time = 0.0;
  SteadyState steady;
  std::optional<FitResult> fit;
  std::string fit_error;
  /// Steady-state phonon number above the free thermal value, or the particle was lost.
  bool heated = false;
};

RunSummary summarize(const RunResult& result, const AnalysisOptions& analysis);

enum class SweepAxis { beta, delta, pressure };
const char* to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::beta;
  std::vector<double> values;  // SI: beta, delta in N, pressure in Pa
  int repeats = 5;
  RunConfig base;
  AnalysisOptions analysis;

  void validate() const;
  /// Base config with the axis value applied and the seed derived from (point, repeat).
  RunConfig point_config(std::size_t point, int repeat) const;
};

struct SweepRun {
  bool done = false;
  std::uint64_t seed = 0;
  RunSummary summary;
};

struct SweepPoint {
  double value = 0.0;
  std::vector<SweepRun> runs;
  int completed = 0;
  double phonons_mean = 0.0;
  double phonons_std_error = 0.0;
  int converged = 0;
  double rate_mean = 0.0;
  double rate_std_error = 0.0;
  int rate_count = 0;
  int lost = 0;
  int heated = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  bool interrupted = false;
};

/// Aggregates the finished repeats of a point; runs that lost the particle are excluded
/// from the means.
void aggregate(SweepPoint& point);

using SweepCallback = std::function<void(std::size_t point, int repeat, const SweepRun&)>;

/// Runs every (point, repeat) on `parallelism` worker threads. Results do not depend on
/// the number of workers. `on_run` is called (serialised) after each finished run. Setting
/// *stop makes workers skip the remaining runs; what finished is still aggregated.
SweepResult sweep(const SweepSpec& spec, int parallelism = 1, const SweepCallback& on_run = {},
                  const std::atomic<bool>* stop = nullptr);

}  // namespace levcool
