#pragma once

#include "lcwire/metrics.hpp"
#include "lcwire/reconstruct.hpp"
#include "lcwire/synth.hpp"
#include "lcwire/train.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lcwire {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct LabelConfig {
  double tau_2d = 3.0;   // pixels
  double tau_3d = 0.05;  // relative to the cloud's bounding-box diagonal
};

/// Every tunable of the pipeline. Keys are "section.name"; the patch settings
/// and the seed are shared by training and inference.
struct RunConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  PatchConfig patch;
  SceneSpec scene;
  LabelConfig label;
  TrainConfig train;
  int checkpoint_every = 500;
  ReconstructConfig infer;
  EvalConfig eval;

  TrainConfig train_config() const;
  ReconstructConfig reconstruct_config() const;

  /// Throws ConfigError for unknown keys and malformed values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  /// Throws ConfigError naming the offending key.
  void validate() const;
  /// One "key = value" line per key; parses back to the same config.
  std::string to_text() const;
};

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// "key = value" lines; '#' starts a comment, blank lines are skipped.
ConfigEntries parse_config_text(const std::string& text, const std::string& source = "<config>");

/// LCWIRE_ followed by the key in upper case with '.' replaced by '_'.
std::string env_name(const std::string& key);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Defaults, then the file, then environment overrides, then flags; validated.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const ConfigEntries& flags,
                         const EnvLookup& env = process_env());

}  // namespace lcwire
