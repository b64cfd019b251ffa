#include "levcool/output.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace levcool {

using nlohmann::json;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace) {
  out << kTraceHeader << '\n';
  std::string line;
  for (const auto& r : trace) {
    const double cols[] = {r.t,        r.y.mean_z,      r.y.mean_p,     r.y.var_z, r.y.var_p,
                           r.y.cov,    r.x.mean_z,      r.x.mean_p,     r.x.var_z, r.x.var_p,
                           r.x.cov,    r.u,             r.v,            r.current, r.energy_true,
                           r.energy_est, r.phonons_true};
    line.clear();
    for (double c : cols) {
      if (!line.empty()) line += ',';
      line += format_double(c);
    }
    out << line << '\n';
  }
}

namespace {

double parse_cell(const std::string& cell, std::size_t row) {
  if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (cell == "inf") return std::numeric_limits<double>::infinity();
  if (cell == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw AnalysisError("trace row " + std::to_string(row) + ": bad number '" + cell + "'");
  return v;
}

}  // namespace

TraceColumns read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw AnalysisError("trace: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader)
    throw AnalysisError(std::string("trace: header must be '") + kTraceHeader + "'");
  TraceColumns cols;
  std::size_t row = 1;
  std::vector<std::string> cells;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    cells.clear();
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 17)
      throw AnalysisError("trace row " + std::to_string(row) + ": expected 17 columns, got " +
                          std::to_string(cells.size()));
    cols.t.push_back(parse_cell(cells[0], row));
    cols.u.push_back(parse_cell(cells[11], row));
    cols.v.push_back(parse_cell(cells[12], row));
    cols.n.push_back(parse_cell(cells[16], row));
  }
  return cols;
}

json fit_json(const FitResult& fit) {
  return {{"amplitude", fit.amplitude},
          {"rate_per_s", fit.rate},
          {"fit_window_s", {fit.t_start, fit.t_end}},
          {"rms_residual", fit.rms_residual},
          {"samples", fit.samples}};
}

namespace {

json steady_json(const SteadyState& s) {
  return {{"phonons", s.mean},
          {"std_error", s.std_error},
          {"converged", s.converged},
          {"t_converged_s", s.t_converged},
          {"windows_used", s.windows_used}};
}

json summary_body(const RunSummary& s) {
  json j = {{"status", to_string(s.status)}, {"heated", s.heated}, {"steady_state", steady_json(s.steady)}};
  if (s.status != RunStatus::completed) j["failure_time_s"] = s.failure_time;
  if (s.fit)
    j["cooling_fit"] = fit_json(*s.fit);
  else
    j["cooling_fit_error"] = s.fit_error;
  return j;
}

}  // namespace

json summary_json(const Config& config, const RunResult& result, const RunSummary& summary) {
  json j = summary_body(summary);
  if (!result.failure_message.empty()) j["failure_message"] = result.failure_message;
  j["feedback_onset_s"] = result.feedback_onset;
  j["thermal_phonons"] = result.thermal_phonons;
  j["seed"] = config.run.seed;
  j["config"] = config.resolved;
  return j;
}

json sweep_json(const Config& config, const SweepResult& result) {
  const SweepSpec& spec = *config.sweep;
  const double unit = spec.axis == SweepAxis::pressure ? 1.0 / kPascalPerMbar : 1.0;
  json points = json::array();
  for (const auto& p : result.points) {
    json runs = json::array();
    for (const auto& r : p.runs) {
      json rj = {{"seed", r.seed}, {"done", r.done}};
      if (r.done) rj.update(summary_body(r.summary));
      runs.push_back(std::move(rj));
    }
    points.push_back({{"value", p.value * unit},
                      {"completed", p.completed},
                      {"phonons_mean", p.phonons_mean},
                      {"phonons_std_error", p.phonons_std_error},
                      {"converged", p.converged},
                      {"rate_mean_per_s", p.rate_mean},
                      {"rate_std_error_per_s", p.rate_std_error},
                      {"rate_count", p.rate_count},
                      {"lost", p.lost},
                      {"heated", p.heated},
                      {"runs", std::move(runs)}});
  }
  const char* unit_name = spec.axis == SweepAxis::pressure ? "mbar"
                          : spec.axis == SweepAxis::delta  ? "N"
                                                           : "";
  return {{"axis", to_string(spec.axis)},
          {"axis_unit", unit_name},
          {"repeats", spec.repeats},
          {"interrupted", result.interrupted},
          {"points", std::move(points)},
          {"config", config.resolved}};
}

json error_json(const std::string& kind, const std::string& key, const std::string& message) {
  json e = {{"kind", kind}, {"message", message}};
  if (!key.empty()) e["key"] = key;
  return {{"error", std::move(e)}};
}

// ---- SVG

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, 2);
  return std::string(buf, res.ptr);
}

std::string tick_label(double x) {
  char buf[32];
  const double a = std::abs(x);
  std::to_chars_result res;
  if (a != 0.0 && (a < 1e-3 || a >= 1e4))
    res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::scientific, 0);
  else
    res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 4);
  return std::string(buf, res.ptr);
}

struct Axis {
  bool log = false;
  double lo = 0.0, hi = 1.0;  // in transformed units
  double px0 = 0.0, px1 = 1.0;

  double tf(double v) const { return log ? std::log10(v) : v; }
  double map(double v) const { return px0 + (tf(v) - lo) / (hi - lo) * (px1 - px0); }
  bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }

  void fit(double mn, double mx) {
    lo = tf(mn);
    hi = tf(mx);
    if (log) {
      lo = std::floor(lo);
      hi = std::ceil(hi);
    }
    if (hi - lo < 1e-12) {
      const double pad = log ? 1.0 : std::max(std::abs(lo) * 0.1, 1.0);
      lo -= pad;
      hi += pad;
    } else if (!log) {
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      const int step = std::max(1, static_cast<int>(std::ceil((hi - lo) / 8.0)));
      for (int e = static_cast<int>(std::ceil(lo)); e <= hi + 1e-9; e += step)
        t.push_back(std::pow(10.0, e));
      return t;
    }
    const double raw = (hi - lo) / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step)
      t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    return t;
  }
};

const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string render_svg(const Chart& chart) {
  const double left = 80, right = 20, top = 40, bottom = 60;
  Axis ax{chart.log_x}, ay{chart.log_y};
  ax.px0 = left;
  ax.px1 = chart.width - right;
  ay.px0 = chart.height - bottom;
  ay.px1 = top;

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : chart.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!std::isfinite(xmin)) xmin = xmax = chart.log_x ? 1.0 : 0.0;
  if (!std::isfinite(ymin)) ymin = ymax = chart.log_y ? 1.0 : 0.0;
  ax.fit(xmin, xmax);
  ay.fit(ymin, ymax);

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(chart.width) << "\" height=\""
    << num(chart.height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(chart.width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(chart.title) << "</text>\n";
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\""
    << num(ax.px1 - ax.px0) << "\" height=\"" << num(ay.px0 - ay.px1)
    << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double t : ax.ticks()) {
    const double x = ax.map(t);
    o << "<line x1=\"" << num(x) << "\" y1=\"" << num(ay.px0) << "\" x2=\"" << num(x)
      << "\" y2=\"" << num(ay.px1) << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << num(x) << "\" y=\"" << num(ay.px0 + 16)
      << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double y = ay.map(t);
    o << "<line x1=\"" << num(ax.px0) << "\" y1=\"" << num(y) << "\" x2=\"" << num(ax.px1)
      << "\" y2=\"" << num(y) << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << num(ax.px0 - 6) << "\" y=\"" << num(y + 4)
      << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  }
  o << "<text x=\"" << num((ax.px0 + ax.px1) / 2) << "\" y=\"" << num(chart.height - 18)
    << "\" text-anchor=\"middle\">" << escape(chart.x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << num((ay.px0 + ay.px1) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << escape(chart.y_label) << "</text>\n";

  for (std::size_t si = 0; si < chart.series.size(); ++si) {
    const auto& s = chart.series[si];
    const char* colour = kColours[si % std::size(kColours)];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
      pts += num(ax.map(s.x[i])) + "," + num(ay.map(s.y[i])) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\""
      << pts << "\"/>\n";
    const bool markers = s.x.size() <= 60;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
      const double x = ax.map(s.x[i]);
      if (i < s.y_error.size() && std::isfinite(s.y_error[i]) && s.y_error[i] > 0.0) {
        const double lo_v = s.y[i] - s.y_error[i], hi_v = s.y[i] + s.y_error[i];
        const double y_lo = ay.usable(lo_v) ? ay.map(lo_v) : ay.px0;
        o << "<line x1=\"" << num(x) << "\" y1=\"" << num(std::min(y_lo, ay.px0)) << "\" x2=\""
          << num(x) << "\" y2=\"" << num(std::max(ay.map(hi_v), ay.px1)) << "\" stroke=\""
          << colour << "\"/>\n";
      }
      if (markers)
        o << "<circle cx=\"" << num(x) << "\" cy=\"" << num(ay.map(s.y[i]))
          << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    }
    if (!s.label.empty()) {
      const double ly = top + 16 + 16 * static_cast<double>(si);
      o << "<line x1=\"" << num(ax.px1 - 150) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
        << num(ax.px1 - 130) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << colour
        << "\" stroke-width=\"2\"/>\n";
      o << "<text x=\"" << num(ax.px1 - 125) << "\" y=\"" << num(ly) << "\">" << escape(s.label)
        << "</text>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

Chart phonon_chart(const RunResult& result) {
  Chart c;
  c.title = "Phonon number";
  c.x_label = "t (ms)";
  c.y_label = "n";
  c.log_y = true;
  ChartSeries s;
  for (const auto& r : result.trace) {
    s.x.push_back(r.t * 1e3);
    s.y.push_back(r.phonons_true);
  }
  c.series.push_back(std::move(s));
  ChartSeries onset{"feedback on", {result.feedback_onset * 1e3, result.feedback_onset * 1e3}, {}, {}};
  double lo = INFINITY, hi = 0.0;
  for (const auto& r : result.trace)
    if (r.phonons_true > 0.0 && std::isfinite(r.phonons_true)) {
      lo = std::min(lo, r.phonons_true);
      hi = std::max(hi, r.phonons_true);
    }
  if (hi > 0.0) {
    onset.y = {lo, hi};
    c.series.push_back(std::move(onset));
  }
  return c;
}

namespace {

const char* axis_label(SweepAxis a) {
  switch (a) {
    case SweepAxis::beta: return "beta";
    case SweepAxis::delta: return "delta (N)";
    case SweepAxis::pressure: return "pressure (mbar)";
  }
  return "";
}

double axis_value(SweepAxis a, double v) { return a == SweepAxis::pressure ? v / kPascalPerMbar : v; }

}  // namespace

Chart sweep_phonon_chart(const SweepSpec& spec, const SweepResult& result) {
  Chart c;
  c.title = "Steady-state phonon number";
  c.x_label = axis_label(spec.axis);
  c.y_label = "mean n";
  c.log_x = spec.axis != SweepAxis::beta;
  c.log_y = true;
  ChartSeries s;
  for (const auto& p : result.points) {
    s.x.push_back(axis_value(spec.axis, p.value));
    s.y.push_back(p.phonons_mean);
    s.y_error.push_back(p.phonons_std_error);
  }
  c.series.push_back(std::move(s));
  return c;
}

Chart sweep_rate_chart(const SweepSpec& spec, const SweepResult& result) {
  Chart c;
  c.title = "Initial cooling rate";
  c.x_label = axis_label(spec.axis);
  c.y_label = "r_c (1/s)";
  c.log_x = true;  // rate scaling is read as a log-log slope, beta included
  c.log_y = true;
  ChartSeries s;
  for (const auto& p : result.points) {
    s.x.push_back(axis_value(spec.axis, p.value));
    s.y.push_back(p.rate_mean);
    s.y_error.push_back(p.rate_std_error);
  }
  c.series.push_back(std::move(s));
  return c;
}

}  // namespace levcool
