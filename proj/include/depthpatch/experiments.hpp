#pragma once

// Multi-run experiments: one patch per named config variant, trained under
// identical seeds and data, summarized as a markdown/JSON table.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthpatch/attack.hpp"
#include "json.hpp"

namespace depthpatch {

struct Variant {
  std::string name;
  nlohmann::json overrides;  // partial AttackConfig document
};

struct ExperimentSpec {
  AttackConfig base;
  std::vector<Variant> variants;

  // Throws ConfigError on duplicate names or an override that yields an
  // invalid config.
  void validate() const;
  [[nodiscard]] std::vector<std::pair<std::string, AttackConfig>> resolve() const;
};

// {"base": {...}, "variants": [{"name": ..., "overrides": {...}}, ...]}
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& spec);

// Rows L_d2+L_tv, L_d1+L_tv, L_d1²+L_d2+L_tv.
ExperimentSpec ablation_spec(const AttackConfig& base);
ExperimentSpec scale_sweep_spec(const AttackConfig& base, std::span<const double> scales);

struct ExperimentRow {
  std::string name;
  std::string config_hash;
  double patch_scale_factor = 0.0;
  EvalAggregate metrics;
  LossReport final_losses;
};

struct ExperimentTable {
  std::string kind;  // "ablation", "scale_sweep" or "experiment"
  std::string dataset_hash;
  std::uint64_t seed = 0;
  std::string model_checksum;
  std::vector<ExperimentRow> rows;
  bool complete = false;
  std::optional<bool> e_d_monotonic;  // scale sweeps only
};

struct ExperimentInputs {
  DepthModelHandle model;
  std::span<const Sample> train;
  std::span<const Sample> eval;
  std::string dataset_hash;
};

struct ExperimentOptions {
  std::optional<std::filesystem::path> out_dir;  // one run directory per variant
  int parallel = 1;                              // concurrent variants
};

// Trains and evaluates every variant. When a variant fails, the rows finished
// so far are written (complete = false) and the error is rethrown.
ExperimentTable run_experiment(const ExperimentSpec& spec, const ExperimentInputs& inputs,
                               const ExperimentOptions& options, const std::string& kind = "experiment");
ExperimentTable ablate(const ExperimentSpec& spec, const ExperimentInputs& inputs,
                       const ExperimentOptions& options = {});
// Requires every variant to set patch_scale_factor, ascending. Fills
// e_d_monotonic.
ExperimentTable sweep_scale(const ExperimentSpec& spec, const ExperimentInputs& inputs,
                            const ExperimentOptions& options = {});

std::string to_markdown(const ExperimentTable& table);
nlohmann::json to_json(const ExperimentTable& table);
ExperimentTable experiment_table_from_json(const nlohmann::json& j);

}  // namespace depthpatch
