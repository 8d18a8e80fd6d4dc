#pragma once

// Patch optimization: Adam on the patch pixels under randomly sampled
// transforms, minimizing alpha·L_depth + gamma·L_tv against the frozen victim,
// with atomic checkpoints that make interrupted runs resumable bit for bit.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "depthpatch/config.hpp"
#include "depthpatch/dataset.hpp"
#include "depthpatch/losses.hpp"
#include "depthpatch/metrics.hpp"
#include "depthpatch/model.hpp"
#include "depthpatch/optim.hpp"
#include "json.hpp"

namespace depthpatch {

struct PatchState {
  Patch patch;
  Adam optimizer;
  int epoch = 0;  // completed epochs
  std::string config_hash;

  friend bool operator==(const PatchState&, const PatchState&) = default;
};

// Uniform random pixels in [0,1] and fresh optimizer moments.
PatchState init_patch(int side, std::mt19937_64& rng);

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  int images = 0;  // images that contributed to the step
  LossReport losses;
  std::string ts;  // wall clock, not part of equality

  friend bool operator==(const StepRecord& a, const StepRecord& b) {
    return a.epoch == b.epoch && a.step == b.step && a.images == b.images && a.losses == b.losses;
  }
};

struct RunState {
  PatchState patch;
  std::int64_t step = 0;
  double best_metric = 0.0;  // lowest epoch-mean l_total so far
  std::mt19937_64 rng;
  std::vector<StepRecord> history;
};

RunState init_run_state(const AttackConfig& cfg);

// One image of a batch with its transforms fixed.
struct BatchItem {
  const Sample* sample = nullptr;
  const DisparityMap* clean = nullptr;  // clean prediction of sample->image
  std::vector<TransformSample> transforms;  // one per detection
};

struct BatchEvaluation {
  LossReport losses;         // per-image terms averaged over contributing images
  std::vector<double> grad;  // dL_total/dpatch
  int images = 0;
};

// L_total and its patch gradient for fixed transforms. Images whose
// detections all degenerate do not contribute.
BatchEvaluation evaluate_batch(const Patch& patch, std::span<const BatchItem> items,
                               const DepthModelHandle& model, const AttackConfig& cfg);

class AttackTrainer {
 public:
  // Predicts the clean disparity of every sample once.
  AttackTrainer(const DepthModelHandle& model, std::span<const Sample> samples, AttackConfig cfg);

  // Samples transforms, evaluates, takes one Adam step, clamps and appends to
  // the history. Returns nullopt (and logs a warning) when no image in the
  // batch has a placeable detection.
  std::optional<StepRecord> attack_step(RunState& state, std::span<const std::size_t> batch) const;
  // One shuffled pass over the samples. Returns the mean l_total of its steps.
  double run_epoch(RunState& state) const;

  [[nodiscard]] const AttackConfig& config() const { return cfg_; }
  [[nodiscard]] const DisparityMap& clean(std::size_t i) const { return clean_[i]; }

 private:
  DepthModelHandle model_;
  std::span<const Sample> samples_;
  AttackConfig cfg_;
  std::vector<DisparityMap> clean_;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> resume_from;  // checkpoint directory
  std::optional<int> stop_after_epoch;               // simulate an interruption
  std::span<const Sample> validation;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

struct AttackResult {
  RunState state;
  std::string checksum_before;
  std::string checksum_after;
  std::optional<EvalResult> validation;
  nlohmann::json report;
};

// Throws DataError when no sample has a detection, ConfigError for an invalid
// config or an unfrozen model, TrainingError on non-finite losses or when the
// victim parameters change.
AttackResult run_attack(std::span<const Sample> samples, const DepthModelHandle& model,
                        const AttackConfig& cfg, const RunOptions& options = {});

// Checkpoint directory: patch.png + patch.json + state.json.
void save_checkpoint(const std::filesystem::path& dir, const RunState& state,
                     const AttackConfig& cfg);
// Throws ConfigError when the checkpoint was written under another config,
// DataError when it is damaged.
RunState load_checkpoint(const std::filesystem::path& dir, const AttackConfig& cfg);
// Highest-epoch checkpoint under <run>/checkpoints, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);

nlohmann::json to_json(const StepRecord& r);
nlohmann::json to_json(const EvalResult& r);

}  // namespace depthpatch
