#pragma once

// Attack configuration and its JSON/YAML representation. Parsing starts from
// the defaults, so a config file only needs the keys it changes; unknown keys
// are rejected.

#include <cstdint>
#include <filesystem>
#include <string>

#include "depthpatch/detector.hpp"
#include "depthpatch/losses.hpp"
#include "depthpatch/optim.hpp"
#include "depthpatch/pipeline.hpp"
#include "json.hpp"

namespace depthpatch {

struct AttackConfig {
  int epochs = 500;
  double learning_rate = 0.01;
  double patch_scale_factor = 0.2;
  int patch_side = 16;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int target_class = 0;
  int checkpoint_every = 50;  // epochs; 0 disables periodic checkpoints
  LossWeights loss_weights{};
  TargetMode target_mode = TargetMode::kConstantFar;
  TransformRanges transforms{};
  DetectorConfig detector{};  // target_class above overrides detector.target_class
  AdamParams adam{};

  // Throws ConfigError.
  void validate() const;
  [[nodiscard]] DetectorConfig detector_config() const;
  // sha256 of the canonical JSON form.
  [[nodiscard]] std::string fingerprint() const;

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

nlohmann::json to_json(const AttackConfig& cfg);
// Overlays `j` on `base`. Throws ConfigError on unknown keys or bad types.
AttackConfig attack_config_from_json(const nlohmann::json& j, const AttackConfig& base = {});

// YAML (.yaml/.yml) or JSON by extension. Throws ConfigError.
nlohmann::json read_config_document(const std::filesystem::path& path);
AttackConfig load_attack_config(const std::filesystem::path& path);

nlohmann::json yaml_to_json(const std::string& yaml_text);
std::string json_to_yaml(const nlohmann::json& j);

}  // namespace depthpatch
