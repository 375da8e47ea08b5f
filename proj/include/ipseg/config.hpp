#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ipseg/inference.hpp"
#include "ipseg/model.hpp"
#include "ipseg/scenario.hpp"
#include "ipseg/shapes_world.hpp"
#include "ipseg/training.hpp"

namespace ipseg {

/// Bad configuration text or values. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run depends on. Defaults describe the reference scenario:
/// 8 categories in a 4-2 overlapped schedule (3 steps), 300 training and
/// 60 validation images of 64x64.
struct RunConfig {
  RunConfig();

  std::string run = "reference";
  GeneratorConfig data;
  std::size_t validation_count = 60;
  ScenarioConfig scenario;
  ModelConfig model;
  TrainingConfig training;
  InferenceOptions inference;
  bool include_background = true;

  GeneratorConfig train_data() const;
  GeneratorConfig validation_data() const;
  /// Throws ConfigError naming the offending key.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string description;
};

/// Every accepted key with its default, in file order.
std::vector<ConfigKey> config_keys();

/// Flat `key = value` lines; `#` starts a comment; blank lines are skipped.
/// Unknown keys, duplicate keys and malformed values throw ConfigError with
/// the line number. Keys not mentioned keep their defaults.
RunConfig parse_config(std::string_view text, std::string_view origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `key=value` override on top of `config`.
void apply_override(RunConfig& config, std::string_view assignment);

/// Writes every key; parse_config(format_config(c)) reproduces c exactly.
std::string format_config(const RunConfig& config);

}  // namespace ipseg
