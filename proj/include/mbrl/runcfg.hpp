#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "mbrl/game.hpp"

namespace mbrl {

/// Bad config file or override: message names the offending line or key.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Flat INI: `[section]` headers, `key = value` lines, `#`/`;` comments.
/// Keys are returned as "section.key"; keys before any header have no prefix.
std::map<std::string, std::string> parse_ini(const std::string& text);

/// One `section.key=value` override, as passed on the command line.
std::pair<std::string, std::string> parse_override(const std::string& spec);

/// Precedence: CLI override > config file > solver preset > desk defaults.
/// The "run.profile" key selects network widths ("desk" or "paper") before
/// presets and overrides apply. Pure: same inputs give the same result.
struct ResolvedConfig {
  GameConfig game;
  std::string profile = "desk";
  std::map<std::string, std::string> snapshot;  // every knob, canonical form
  std::string config_hash;                      // FNV-1a over the snapshot, hex
};

ResolvedConfig resolve_config(const std::map<std::string, std::string>& file_keys,
                              const std::map<std::string, std::string>& cli_keys);

/// Applies one snapshot key to a config. Unknown key or unparsable value
/// throws ConfigError naming it.
void apply_key(GameConfig& cfg, const std::string& key, const std::string& value);

std::map<std::string, std::string> snapshot_config(const GameConfig& cfg,
                                                   const std::string& profile);

std::uint64_t fnv1a64(const std::string& data);

/// Resolved config, seed, hash, output paths, and creation time; rerunning
/// the embedded snapshot reproduces the run's CSV byte for byte.
nlohmann::json run_manifest(const ResolvedConfig& resolved, std::uint64_t seed,
                            const std::string& out_dir);

/// The snapshot as an INI file, suitable for feeding back to --config.
std::string snapshot_to_ini(const std::map<std::string, std::string>& snapshot);

}  // namespace mbrl
