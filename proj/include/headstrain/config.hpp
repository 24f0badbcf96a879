#pragma once

// Experiment configuration: JSON parsing with strict key checking, default
// filling, seed resolution and the resolved-config echo.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "headstrain/adversarial.hpp"
#include "headstrain/drca.hpp"
#include "headstrain/eval.hpp"
#include "headstrain/impact_data.hpp"
#include "headstrain/mlhm.hpp"

namespace headstrain {

/// A dataset either synthesized (`synth`, `n`) or loaded from `path`.
struct DataSpec {
  std::string name;
  std::optional<DriftConfig> synth;
  std::size_t n = 0;
  std::optional<std::filesystem::path> path;

  bool operator==(const DataSpec&) const = default;
};

inline constexpr const char* kMethodNames[] = {"baseline", "drca", "cyclegan", "shiftgan", "gan+drca"};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::size_t elements = 128;
  std::uint64_t label_seed = 0;
  DataSpec source;
  std::vector<DataSpec> targets;
  std::vector<DataSpec> holdout;  // evaluated with the same frozen settings
  bool augment = false;           // axis-switching augmentation of the source
  std::string schema = "default";  // "default" or a schema JSON path
  DrcaConfig drca;
  GanConfig gan;
  KmmConfig kmm;
  TrainConfig train;
  std::vector<LayerSpec> hidden;  // MLHM hidden layers
  std::vector<std::string> methods;  // always starts with "baseline"
  ThresholdConfig thresholds;
  std::filesystem::path output = "headstrain-out";

  bool has_method(const std::string& m) const;
  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

/// Parses and validates; absent fields take defaults and absent seeds are
/// derived from the global seed. `seed_override` replaces the global seed
/// before derivation. Unknown keys raise ConfigError naming the key path and
/// the closest known key.
PipelineConfig parse_config(const nlohmann::json& j, std::optional<std::uint64_t> seed_override = std::nullopt);
PipelineConfig parse_config_file(const std::filesystem::path& path,
                                 std::optional<std::uint64_t> seed_override = std::nullopt);

/// Fully explicit form; parse_config(to_json(c)) == c.
nlohmann::json to_json(const PipelineConfig& c);

/// Comma-separated method list ("baseline,drca"); validates the names.
std::vector<std::string> parse_method_list(const std::string& list);

/// Levenshtein edit distance.
std::size_t edit_distance(const std::string& a, const std::string& b);

}  // namespace headstrain
