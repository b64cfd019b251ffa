// levcool: run, sweep and fit from the command line.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "levcool/config.hpp"
#include "levcool/output.hpp"

namespace fs = std::filesystem;
using namespace levcool;
using nlohmann::json;

namespace {

enum Exit { ok = 0, failed = 1, config_error = 2, run_failed = 3, io_error = 4, interrupted = 130 };

enum class Level { error, warn, info, debug };
Level g_level = Level::info;

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_level) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

std::atomic<bool> g_stop{false};
extern "C" void on_sigint(int) { g_stop.store(true); }

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& text) {
  // write then rename, so a reader never sees half a file
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

int report(const std::string& kind, const std::string& key, const std::string& message,
           int code, const std::optional<fs::path>& out_dir = std::nullopt) {
  const std::string doc = error_json(kind, key, message).dump(2) + "\n";
  std::cout << doc;
  log(Level::error, message);
  if (out_dir) {
    try {
      write_file(*out_dir / "error.json", doc);
    } catch (const std::exception&) {
    }
  }
  return code;
}

Config load(const std::string& path, std::optional<std::uint64_t> seed) {
  Config c = load_config(path);
  return seed ? with_seed(c, *seed) : c;
}

int cmd_run(const std::string& config_path, const fs::path& out_dir,
            std::optional<std::uint64_t> seed) {
  Config config;
  try {
    config = load(config_path, seed);
  } catch (const ConfigError& e) {
    return report("config", e.key(), e.what(), config_error);
  }
  try {
    prepare_out(out_dir);
    log(Level::info, "run: controller " + std::string(to_string(config.run.control.kind)) +
                         ", seed " + std::to_string(config.run.seed));
    const RunResult result = run(config.run);
    const RunSummary summary = summarize(result, config.analysis);

    std::ostringstream csv;
    write_trace_csv(csv, result.trace);
    write_file(out_dir / "trace.csv", csv.str());
    write_file(out_dir / "summary.json", summary_json(config, result, summary).dump(2) + "\n");
    write_file(out_dir / "phonons.svg", render_svg(phonon_chart(result)));
    log(Level::info, "steady n = " + format_double(summary.steady.mean) +
                         (summary.fit ? ", r_c = " + format_double(summary.fit->rate) + " 1/s"
                                      : ", no fit: " + summary.fit_error));
    if (result.status != RunStatus::completed)
      return report(to_string(result.status), "", result.failure_message, run_failed, out_dir);
    return ok;
  } catch (const IoError& e) {
    return report("io", "", e.what(), io_error);
  } catch (const std::invalid_argument& e) {
    return report("validation", "", e.what(), config_error);
  } catch (const std::exception& e) {
    return report("run", "", e.what(), failed, out_dir);
  }
}

int cmd_sweep(const std::string& config_path, const fs::path& out_dir,
              std::optional<std::uint64_t> seed, int parallelism) {
  Config config;
  try {
    config = load(config_path, seed);
    if (!config.sweep) throw ConfigError("sweep", "section required for the sweep command");
  } catch (const ConfigError& e) {
    return report("config", e.key(), e.what(), config_error);
  }
  try {
    prepare_out(out_dir);
    const SweepSpec& spec = *config.sweep;
    const std::size_t total = spec.values.size() * spec.repeats;

    // Partial results go to disk after every finished run so an interrupt loses nothing.
    SweepResult partial;
    partial.points.resize(spec.values.size());
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
      partial.points[i].value = spec.values[i];
      partial.points[i].runs.resize(spec.repeats);
    }
    std::size_t finished = 0;
    auto on_run = [&](std::size_t point, int repeat, const SweepRun& r) {
      partial.points[point].runs[repeat] = r;
      aggregate(partial.points[point]);
      partial.interrupted = ++finished < total;
      write_file(out_dir / "sweep.json", sweep_json(config, partial).dump(2) + "\n");
      log(Level::debug, "point " + std::to_string(point) + " repeat " + std::to_string(repeat) +
                            ": " + to_string(r.summary.status));
      log(Level::info, std::to_string(finished) + "/" + std::to_string(total) + " runs");
    };

    std::signal(SIGINT, on_sigint);
    const SweepResult result = sweep(spec, parallelism, on_run, &g_stop);
    std::signal(SIGINT, SIG_DFL);

    write_file(out_dir / "sweep.json", sweep_json(config, result).dump(2) + "\n");
    write_file(out_dir / "phonons.svg", render_svg(sweep_phonon_chart(spec, result)));
    write_file(out_dir / "rate.svg", render_svg(sweep_rate_chart(spec, result)));
    if (result.interrupted) {
      log(Level::warn, "interrupted; partial results written");
      return interrupted;
    }
    return ok;
  } catch (const IoError& e) {
    return report("io", "", e.what(), io_error);
  } catch (const std::invalid_argument& e) {
    return report("validation", "", e.what(), config_error);
  } catch (const std::exception& e) {
    return report("sweep", "", e.what(), failed, out_dir);
  }
}

int cmd_fit(const std::string& trace_path, std::optional<double> onset, double fraction,
            int min_samples) {
  try {
    std::ifstream in(trace_path);
    if (!in) throw IoError("cannot open " + trace_path);
    const TraceColumns cols = read_trace_csv(in);
    if (!onset) {
      // feedback starts after the last row with both signals still zero
      onset = 0.0;
      for (std::size_t i = 0; i < cols.t.size(); ++i) {
        if (cols.u[i] != 0.0 || cols.v[i] != 0.0) {
          onset = i > 0 ? cols.t[i - 1] : 0.0;
          break;
        }
      }
      log(Level::debug, "feedback onset " + format_double(*onset) + " s");
    }
    const FitResult fit = fit_cooling_rate(cols.t, cols.n, FitOptions{*onset, fraction, min_samples});
    std::cout << fit_json(fit).dump(2) << '\n';
    return ok;
  } catch (const IoError& e) {
    return report("io", "", e.what(), io_error);
  } catch (const AnalysisError& e) {
    return report("analysis", "", e.what(), failed);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback cooling of a levitated nanoparticle: simulate, sweep, fit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string level = "info";
  app.add_option("--log-level", level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  std::string config_path, out_dir = "out", trace_path;
  std::optional<std::uint64_t> seed;
  int parallelism = 1;

  auto* run_cmd = app.add_subcommand("run", "one closed-loop run");
  run_cmd->add_option("--config", config_path, "config file (JSON)")->required();
  run_cmd->add_option("--out", out_dir, "output directory");
  run_cmd->add_option("--seed", seed, "override run.seed");

  auto* sweep_cmd = app.add_subcommand("sweep", "parameter sweep with repeats");
  sweep_cmd->add_option("--config", config_path, "config file with a sweep section")->required();
  sweep_cmd->add_option("--out", out_dir, "output directory");
  sweep_cmd->add_option("--seed", seed, "override run.seed (the base of derived seeds)");
  sweep_cmd->add_option("--parallelism", parallelism, "worker threads")
      ->check(CLI::Range(1, 1024));

  std::optional<double> onset;
  double fraction = FitOptions{}.fraction;
  int min_samples = FitOptions{}.min_samples;
  auto* fit_cmd = app.add_subcommand("fit", "fit the initial cooling rate of a trace CSV");
  fit_cmd->add_option("trace", trace_path, "trace CSV")->required();
  fit_cmd->add_option("--onset", onset, "feedback onset in s (default: inferred from u, v)");
  fit_cmd->add_option("--fraction", fraction, "window ends below this fraction of max n")
      ->check(CLI::Range(0.0, 1.0));
  fit_cmd->add_option("--min-samples", min_samples, "fewest samples accepted")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  g_level = level == "error"  ? Level::error
            : level == "warn" ? Level::warn
            : level == "debug" ? Level::debug
                               : Level::info;

  if (*run_cmd) return cmd_run(config_path, out_dir, seed);
  if (*sweep_cmd) return cmd_sweep(config_path, out_dir, seed, parallelism);
  return cmd_fit(trace_path, onset, fraction, min_samples);
}
