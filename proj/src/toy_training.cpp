#include "depthpatch/toy_training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "depthpatch/optim.hpp"

namespace depthpatch {

void ToyTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("toy training: epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("toy training: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("toy training: batch_size must be >= 1");
}

ToyTrainResult train_toy_model(std::span<const SyntheticScene> corpus, const ToyTrainConfig& cfg,
                               const EpochCallback& on_epoch) {
  cfg.validate();
  if (corpus.empty()) throw ConfigError("toy training: corpus is empty");
  for (const auto& s : corpus) require_same_shape(s.image.shape(), cfg.input, "toy training corpus");

  auto net = std::make_shared<ToyUNet>(cfg.seed, cfg.input);
  Adam adam(net->parameter_count());
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const double pixels = static_cast<double>(cfg.input.area());
  std::vector<double> grad(net->parameter_count());
  std::vector<double> grad_raw(cfg.input.area());
  ToyTrainResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double batch = static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const SyntheticScene& scene = corpus[order[k]];
        const ToyUNet::Tape tape = net->run(scene.image);
        const double* pred = tape.out.data.data();
        const auto truth = scene.physical_disparity.data();
        double loss = 0.0;
        for (std::size_t i = 0; i < grad_raw.size(); ++i) {
          const double diff = pred[i] - truth[i];
          loss += std::abs(diff);
          grad_raw[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / (pixels * batch);
        }
        epoch_loss += loss / pixels;
        net->backward(tape, grad_raw, nullptr, grad);
      }
      adam.step(net->mutable_parameters(), grad, cfg.learning_rate);
    }
    epoch_loss /= static_cast<double>(corpus.size());
    if (!std::isfinite(epoch_loss)) {
      std::ostringstream msg;
      msg << "toy model training diverged at epoch " << epoch << " (seed " << cfg.seed
          << ", lr " << cfg.learning_rate << ", batch " << cfg.batch_size << ", epochs "
          << cfg.epochs << ")";
      throw TrainingError(msg.str());
    }
    result.curve.push_back(epoch_loss);
    spdlog::debug("toy model epoch {} loss {:.5f}", epoch, epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }

  result.model = net;
  result.handle = make_handle(net);
  return result;
}

double heldout_mean_abs_error(const DepthModelHandle& model, std::span<const SyntheticScene> scenes) {
  if (scenes.empty()) throw ConfigError("heldout_mean_abs_error: no scenes");
  double total = 0.0;
  for (const auto& s : scenes) {
    const DisparityMap pred = forward(model, s.image);
    const auto p = pred.data();
    const auto t = s.true_disparity.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - t[i]);
    total += sum / static_cast<double>(p.size());
  }
  return total / static_cast<double>(scenes.size());
}

}  // namespace depthpatch
