#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "levcool/experiment.hpp"

namespace levcool {

/// A config problem tied to one key path, e.g. "physics.beta".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// A parsed config. `resolved` is the input document with every default written out, still
/// in the units of the key names; parsing it again gives the identical RunConfig.
struct Config {
  nlohmann::json resolved;
  RunConfig run;
  AnalysisOptions analysis;
  std::optional<SweepSpec> sweep;
};

/// Sections: physics, laser, gas, timing, control, tracking, emulation, run, analysis,
/// sweep. Keys carry their unit (trap_frequency_hz, pressure_mbar, dt_e_ns, ...); units are
/// converted to SI here and nowhere else. Unknown keys throw ConfigError.
Config parse_config(const nlohmann::json& doc);
Config load_config(const std::string& path);

/// Same config with run.seed replaced.
Config with_seed(const Config& config, std::uint64_t seed);

}  // namespace levcool
