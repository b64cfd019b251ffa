#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "levcool/config.hpp"
#include "levcool/experiment.hpp"

namespace levcool {

inline constexpr const char* kTraceHeader =
    "t,y1,y2,y3,y4,y5,x1,x2,x3,x4,x5,u,v,J,E_true,E_est,n_true";

/// Shortest text that parses back to the same double.
std::string format_double(double x);

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace);

struct TraceColumns {
  std::vector<double> t;
  std::vector<double> u;
  std::vector<double> v;
  std::vector<double> n;
};

/// Reads the columns the fit needs. Throws AnalysisError on a wrong header or a bad row.
TraceColumns read_trace_csv(std::istream& in);

nlohmann::json fit_json(const FitResult& fit);
nlohmann::json summary_json(const Config& config, const RunResult& result,
                            const RunSummary& summary);
nlohmann::json sweep_json(const Config& config, const SweepResult& result);

/// {"error": {"kind", "key", "message"}}; key is omitted when empty.
nlohmann::json error_json(const std::string& kind, const std::string& key,
                          const std::string& message);

struct ChartSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> y_error;  // empty or one per point
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<ChartSeries> series;
  double width = 640;
  double height = 420;
};

/// Static SVG line chart. Points that are non-finite, or non-positive on a log axis, are
/// dropped.
std::string render_svg(const Chart& chart);

Chart phonon_chart(const RunResult& result);
Chart sweep_phonon_chart(const SweepSpec& spec, const SweepResult& result);
Chart sweep_rate_chart(const SweepSpec& spec, const SweepResult& result);

}  // namespace levcool
