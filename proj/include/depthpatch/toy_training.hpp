#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "depthpatch/model.hpp"
#include "depthpatch/scenes.hpp"
#include "depthpatch/toy_unet.hpp"

namespace depthpatch {

struct ToyTrainConfig {
  int epochs = 40;
  double learning_rate = 2e-3;
  int batch_size = 8;
  std::uint64_t seed = 7;
  Shape input{64, 128};

  void validate() const;
};

struct ToyTrainResult {
  std::shared_ptr<const ToyUNet> model;
  DepthModelHandle handle;      // frozen
  std::vector<double> curve;    // mean L1 loss per epoch
};

using EpochCallback = std::function<void(int epoch, double loss)>;

// Pixelwise L1 regression of the raw output onto each scene's physical
// disparity, optimized with Adam. Throws TrainingError (with seed and config in
// the message) if the loss becomes non-finite.
ToyTrainResult train_toy_model(std::span<const SyntheticScene> corpus, const ToyTrainConfig& cfg,
                               const EpochCallback& on_epoch = {});

// Mean |normalized prediction − true disparity| over a scene set.
double heldout_mean_abs_error(const DepthModelHandle& model, std::span<const SyntheticScene> scenes);

}  // namespace depthpatch
