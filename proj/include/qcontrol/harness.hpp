#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcontrol {

// Flat key/value configuration. Text form: one `key.path = value` per line,
// '#' starts a comment. Lists are comma separated or `start:stop:step`
// (inclusive). Missing keys take the schema default.
struct ExperimentConfig {
  std::map<std::string, std::string> values;

  std::string get(const std::string& key) const;  // value or schema default
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  // Every schema key with its effective value.
  std::map<std::string, std::string> resolved() const;
};

struct SchemaEntry {
  std::string key;
  // 'd' real, 'i' integer, 'u' unsigned 64-bit, 'b' bool, 's' word, 'l' list of reals
  char type;
  std::string fallback;
  std::string doc;
};

const std::vector<SchemaEntry>& config_schema();
const std::vector<std::string>& known_methods();

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string kind, std::vector<std::string> messages);
  const std::string& kind() const noexcept { return kind_; }
  const std::vector<std::string>& messages() const noexcept { return messages_; }

 private:
  std::string kind_;
  std::vector<std::string> messages_;
};

// Parses the text form; throws ConfigError on malformed lines or repeated keys.
ExperimentConfig parse_config_text(const std::string& text);
// Text form, or a manifest written by run() (its "config" object is used).
ExperimentConfig load_config(const std::filesystem::path& path);
// "key=value" override.
void apply_override(ExperimentConfig& config, const std::string& assignment);

// Every violation found without running anything. Messages about the
// exhaustive-enumeration caps start with "resource cap".
std::vector<std::string> validate(const ExperimentConfig& config);

struct RunReport {
  std::string method;
  std::filesystem::path output_dir;
  std::vector<std::string> artifacts;  // file names inside output_dir
  double wall_time_seconds = 0.0;
};

// Validates, runs the configured experiment and writes its CSV/JSON artifacts
// plus manifest.json into `output_dir` (created if missing). Throws
// ConfigError("invalid_config" | "resource_cap", ...) before any compute.
RunReport run(const ExperimentConfig& config, const std::filesystem::path& output_dir);

// {"error": {"kind": ..., "messages": [...]}}
std::string error_json(const std::string& kind, const std::vector<std::string>& messages);

}  // namespace qcontrol
