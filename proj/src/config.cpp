#include "levcool/config.hpp"

#include <fstream>
#include <initializer_list>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace levcool {

using nlohmann::json;

namespace {

constexpr double kSpeedOfLight = 299792458.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Reads one section of the document, writing every value it uses (defaults included) into
// the resolved copy, and complains about keys nobody asked for.
class Section {
 public:
  Section(const json& root, json& out, std::string name) : name_(std::move(name)), out_(out) {
    if (root.contains(name_)) {
      in_ = &root.at(name_);
      if (!in_->is_object()) throw ConfigError(name_, "expected an object");
      present_ = true;
    }
  }

  bool present() const { return present_; }
  bool has(const char* key) const { return in_ && in_->contains(key); }
  std::string path(const char* key) const { return name_ + "." + key; }

  double number(const char* key, double fallback) {
    const double v = has(key) ? read_number(key) : fallback;
    out_[name_][key] = v;
    return v;
  }

  std::optional<double> maybe_number(const char* key) {
    if (!has(key)) return std::nullopt;
    const double v = read_number(key);
    out_[name_][key] = v;
    return v;
  }

  std::int64_t integer(const char* key, std::int64_t fallback) {
    std::int64_t v = fallback;
    if (has(key)) {
      const json& j = value(key);
      if (!j.is_number_integer()) throw ConfigError(path(key), "expected an integer");
      v = j.get<std::int64_t>();
    }
    out_[name_][key] = v;
    return v;
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) {
    std::uint64_t v = fallback;
    if (has(key)) {
      const json& j = value(key);
      if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
        throw ConfigError(path(key), "expected a non-negative integer");
      v = j.get<std::uint64_t>();
    }
    out_[name_][key] = v;
    return v;
  }

  bool flag(const char* key, bool fallback) {
    bool v = fallback;
    if (has(key)) {
      const json& j = value(key);
      if (!j.is_boolean()) throw ConfigError(path(key), "expected true or false");
      v = j.get<bool>();
    }
    out_[name_][key] = v;
    return v;
  }

  std::string choice(const char* key, const char* fallback,
                     std::initializer_list<const char*> allowed) {
    std::string v = fallback;
    if (has(key)) {
      const json& j = value(key);
      if (!j.is_string()) throw ConfigError(path(key), "expected a string");
      v = j.get<std::string>();
    }
    bool ok = false;
    std::string list;
    for (const char* a : allowed) {
      ok = ok || v == a;
      list += list.empty() ? a : std::string(", ") + a;
    }
    if (!ok) throw ConfigError(path(key), "'" + v + "' is not one of " + list);
    out_[name_][key] = v;
    return v;
  }

  std::vector<double> numbers(const char* key) {
    const json& j = value(key);
    if (!j.is_array() || j.empty()) throw ConfigError(path(key), "expected a non-empty array");
    std::vector<double> v;
    for (const auto& e : j) {
      if (!e.is_number()) throw ConfigError(path(key), "expected numbers only");
      v.push_back(e.get<double>());
    }
    out_[name_][key] = v;
    return v;
  }

  const json& value(const char* key) {
    used_.insert(key);
    return in_->at(key);
  }

  void finish() {
    if (!in_) return;
    for (auto it = in_->begin(); it != in_->end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(name_ + "." + it.key(), "unknown key");
  }

 private:
  double read_number(const char* key) {
    const json& j = value(key);
    if (!j.is_number()) throw ConfigError(path(key), "expected a number");
    return j.get<double>();
  }

  std::string name_;
  json& out_;
  const json* in_ = nullptr;
  bool present_ = false;
  std::set<std::string> used_;
};

void check(bool ok, const std::string& key, const char* what) {
  if (!ok) throw ConfigError(key, what);
}

// Library validation messages start with the SI field name; translate to the config key.
std::string config_key_for(const std::string& message) {
  static const std::map<std::string, std::string> keys = {
      {"mass", "physics.mass_kg"},
      {"omega", "physics.trap_frequency_hz"},
      {"temperature", "physics.temperature_k"},
      {"eta", "physics.eta"},
      {"alpha", "physics.alpha_per_m2_s"},
      {"gamma_c", "gas.gamma_c_per_s"},
      {"beta", "physics.beta"},
      {"delta", "physics.delta_n"},
      {"wavelength", "laser.wavelength_nm"},
      {"power", "laser.power_w"},
      {"cross_section", "laser.cross_section_m2"},
      {"waist", "laser.waist_um"},
      {"omega_laser", "laser.optical_frequency_hz"},
      {"timing.dt_e", "timing.dt_e_ns"},
      {"timing.m", "timing.m"},
      {"timing.n", "timing.n"},
      {"timing.t_prep", "timing.t_prep_ms"},
      {"timing.t_total", "timing.t_total_ms"},
      {"run.record_stride", "run.record_stride"},
      {"emulation.noise_refinement", "emulation.noise_refinement"},
      {"sweep.values", "sweep"},
      {"sweep.repeats", "sweep.repeats"},
  };
  const auto colon = message.find(':');
  if (colon == std::string::npos) return "";
  const auto it = keys.find(message.substr(0, colon));
  return it == keys.end() ? "" : it->second;
}

ControllerKind parse_controller(const std::string& s) { return controller_kind_from_string(s); }

}  // namespace

Config parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
  static const std::set<std::string> sections = {"physics",   "laser", "gas",      "timing",
                                                 "control",   "tracking", "emulation", "run",
                                                 "analysis", "sweep"};
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!sections.count(it.key())) throw ConfigError(it.key(), "unknown section");

  Config c;
  c.resolved = json::object();
  RunConfig& r = c.run;
  json& out = c.resolved;

  {
    Section s(doc, out, "physics");
    PhysicalParams& p = r.params;
    p.mass = s.number("mass_kg", 9.42e-19);
    check(p.mass > 0.0, s.path("mass_kg"), "must be > 0");
    p.omega = kTwoPi * s.number("trap_frequency_hz", 70e3);
    check(p.omega > 0.0, s.path("trap_frequency_hz"), "must be > 0");
    p.temperature = s.number("temperature_k", 300.0);
    check(p.temperature > 0.0, s.path("temperature_k"), "must be > 0");
    p.eta = s.number("eta", 0.003);
    check(p.eta > 0.0 && p.eta <= 1.0, s.path("eta"), "must lie in (0, 1]");
    p.beta = s.number("beta", 0.01);
    check(p.beta >= 0.0 && p.beta < 1.0, s.path("beta"), "must lie in [0, 1)");
    p.delta = s.number("delta_n", 0.0);
    check(p.delta >= 0.0, s.path("delta_n"), "must be >= 0");

    Section laser(doc, out, "laser");
    if (laser.present()) {
      if (s.has("alpha_per_m2_s"))
        throw ConfigError(s.path("alpha_per_m2_s"), "give either alpha or a laser section");
      LaserParams l;
      l.wavelength = laser.number("wavelength_nm", 1550.0) * 1e-9;
      check(l.wavelength > 0.0, laser.path("wavelength_nm"), "must be > 0");
      l.power = laser.number("power_w", 0.0);
      check(l.power > 0.0, laser.path("power_w"), "must be > 0");
      l.cross_section = laser.number("cross_section_m2", 0.0);
      check(l.cross_section > 0.0, laser.path("cross_section_m2"), "must be > 0");
      l.waist = laser.number("waist_um", 0.0) * 1e-6;
      check(l.waist > 0.0, laser.path("waist_um"), "must be > 0");
      l.omega_laser =
          kTwoPi * laser.number("optical_frequency_hz", kSpeedOfLight / l.wavelength);
      check(l.omega_laser > 0.0, laser.path("optical_frequency_hz"), "must be > 0");
      r.laser = l;
      laser.finish();
    } else {
      p.alpha = s.number("alpha_per_m2_s", 4.04e25);
      check(p.alpha >= 0.0, s.path("alpha_per_m2_s"), "must be >= 0");
    }
    s.finish();
  }
  {
    Section s(doc, out, "gas");
    const auto pressure = s.maybe_number("pressure_mbar");
    const auto gamma = s.maybe_number("gamma_c_per_s");
    if (pressure.has_value() == gamma.has_value())
      throw ConfigError("gas", "give exactly one of pressure_mbar and gamma_c_per_s");
    if (pressure) {
      check(*pressure >= 0.0, s.path("pressure_mbar"), "must be >= 0");
      r.gas.pressure = *pressure * kPascalPerMbar;
    } else {
      check(*gamma >= 0.0, s.path("gamma_c_per_s"), "must be >= 0");
      r.gas.gamma_c = *gamma;
    }
    r.gas.particle_radius = s.number("particle_radius_nm", 50.0) * 1e-9;
    check(r.gas.particle_radius > 0.0, s.path("particle_radius_nm"), "must be > 0");
    r.gas.molar_mass = s.number("molar_mass_kg_per_mol", kAirMolarMass);
    check(r.gas.molar_mass > 0.0, s.path("molar_mass_kg_per_mol"), "must be > 0");
    r.gas.drag_coefficient = s.number("drag_coefficient", kEpsteinDragCoefficient);
    check(r.gas.drag_coefficient > 0.0, s.path("drag_coefficient"), "must be > 0");
    s.finish();
  }
  {
    Section s(doc, out, "timing");
    r.timing.dt_e = s.number("dt_e_ns", 0.5) * 1e-9;
    r.timing.m = static_cast<int>(s.integer("m", 2000));
    r.timing.n = static_cast<int>(s.integer("n", 5));
    r.timing.t_prep = s.number("t_prep_ms", 5.0) * 1e-3;
    r.timing.t_total = s.number("t_total_ms", 50.0) * 1e-3;
    s.finish();
  }
  {
    Section s(doc, out, "control");
    r.control.kind = parse_controller(s.choice(
        "controller", "double_phase",
        {"off", "double_phase", "cold_damping", "optimal_quadratic", "optimal_linear",
         "optimal_combined"}));
    r.control.energy_floor_quanta = s.number("energy_floor_quanta", 1e-3);
    check(r.control.energy_floor_quanta >= 0.0, s.path("energy_floor_quanta"), "must be >= 0");
    r.control.velocity_scale = s.number("velocity_scale_m_s", 0.0);
    r.control.source = s.choice("feedback_source", "tracked", {"tracked", "true_state"}) ==
                               "true_state"
                           ? FeedbackSource::true_state
                           : FeedbackSource::tracked;
    s.finish();
  }
  {
    Section s(doc, out, "tracking");
    r.tracking_mode = s.choice("mode", "modulated", {"modulated", "unmodulated"}) == "unmodulated"
                          ? TrackingMode::unmodulated
                          : TrackingMode::modulated;
    if (s.has("initial")) {
      const json& init = s.value("initial");
      json sub = {{"initial", init}};
      json sub_out = json::object();
      Section i(sub, sub_out, "initial");
      GaussianMoments x;
      x.mean_z = i.number("mean_z_m", 0.0);
      x.mean_p = i.number("mean_p_kg_m_s", 0.0);
      x.var_z = i.number("var_z_m2", 0.0);
      x.var_p = i.number("var_p_kg2_m2_s2", 0.0);
      x.cov = i.number("cov_kg_m2_s", 0.0);
      try {
        i.finish();
      } catch (const ConfigError& e) {
        throw ConfigError("tracking." + e.key(), "unknown key");
      }
      check(x.var_z > 0.0, "tracking.initial.var_z_m2", "must be > 0");
      check(x.var_p > 0.0, "tracking.initial.var_p_kg2_m2_s2", "must be > 0");
      r.tracker_initial = x;
      out["tracking"]["initial"] = sub_out["initial"];
    }
    s.finish();
  }
  {
    Section s(doc, out, "emulation");
    r.integrator = s.choice("integrator", "srk4", {"srk4", "euler_maruyama"}) == "srk4"
                       ? Integrator::srk4
                       : Integrator::euler_maruyama;
    r.emulation.gas_damping_sign =
        s.choice("gas_damping_sign", "as_printed", {"as_printed", "dissipative"}) ==
                "dissipative"
            ? GasDampingSign::dissipative
            : GasDampingSign::as_printed;
    r.emulation.covariance_damping = s.flag("covariance_damping", false);
    r.noise_refinement = static_cast<int>(s.integer("noise_refinement", 1));
    s.finish();
  }
  {
    Section s(doc, out, "run");
    r.seed = s.unsigned_integer("seed", 1);
    r.record_stride = static_cast<int>(s.integer("record_stride", 10));
    s.finish();
  }
  {
    Section s(doc, out, "analysis");
    AnalysisOptions& a = c.analysis;
    a.fit_fraction = s.number("fit_fraction", a.fit_fraction);
    check(a.fit_fraction > 0.0 && a.fit_fraction < 1.0, s.path("fit_fraction"),
          "must lie in (0, 1)");
    a.steady_window = s.number("steady_window_ms", a.steady_window * 1e3) * 1e-3;
    check(a.steady_window > 0.0, s.path("steady_window_ms"), "must be > 0");
    a.steady_consecutive = static_cast<int>(s.integer("steady_consecutive", a.steady_consecutive));
    check(a.steady_consecutive >= 1, s.path("steady_consecutive"), "must be >= 1");
    a.steady_rel_tol = s.number("steady_rel_tol", a.steady_rel_tol);
    check(a.steady_rel_tol >= 0.0, s.path("steady_rel_tol"), "must be >= 0");
    a.steady_z_score = s.number("steady_z_score", a.steady_z_score);
    check(a.steady_z_score >= 0.0, s.path("steady_z_score"), "must be >= 0");
    s.finish();
  }

  try {
    r.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(config_key_for(e.what()), e.what());
  }

  {
    Section s(doc, out, "sweep");
    if (s.present()) {
      SweepSpec spec;
      spec.base = r;
      spec.analysis = c.analysis;
      int given = 0;
      if (s.has("beta_values")) {
        spec.axis = SweepAxis::beta;
        spec.values = s.numbers("beta_values");
        ++given;
      }
      if (s.has("delta_values_n")) {
        spec.axis = SweepAxis::delta;
        spec.values = s.numbers("delta_values_n");
        ++given;
      }
      if (s.has("pressure_values_mbar")) {
        spec.axis = SweepAxis::pressure;
        spec.values = s.numbers("pressure_values_mbar");
        for (double& v : spec.values) v *= kPascalPerMbar;
        ++given;
      }
      if (given != 1)
        throw ConfigError("sweep",
                          "give exactly one of beta_values, delta_values_n, pressure_values_mbar");
      spec.repeats = static_cast<int>(s.integer("repeats", 5));
      check(spec.repeats >= 1, s.path("repeats"), "must be >= 1");
      s.finish();
      const char* key = spec.axis == SweepAxis::beta    ? "sweep.beta_values"
                        : spec.axis == SweepAxis::delta ? "sweep.delta_values_n"
                                                        : "sweep.pressure_values_mbar";
      try {
        spec.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(key, e.what());
      }
      c.sweep = std::move(spec);
    }
  }
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

Config with_seed(const Config& config, std::uint64_t seed) {
  json doc = config.resolved;
  doc["run"]["seed"] = seed;
  return parse_config(doc);
}

}  // namespace levcool
