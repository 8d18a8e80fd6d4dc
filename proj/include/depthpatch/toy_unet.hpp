#pragma once

// Built-in victim: a four-level encoder-decoder with additive skip
// connections, ELU activations and a sigmoid disparity head (~98k parameters
// at the default 64x128 input).

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "depthpatch/model.hpp"
#include "depthpatch/nn.hpp"

namespace depthpatch {

class ToyUNet final : public DepthModel {
 public:
  static constexpr const char* kName = "toy-unet";

  // He-uniform initialization from `seed`. Height and width must be
  // multiples of 8.
  explicit ToyUNet(std::uint64_t seed, Shape input = {64, 128});
  ToyUNet(Shape input, std::vector<double> params);

  [[nodiscard]] std::string name() const override { return kName; }
  [[nodiscard]] Shape input_shape() const override { return input_; }
  [[nodiscard]] ChannelNormalization normalization() const override { return norm_; }
  [[nodiscard]] std::vector<double> predict_raw(const ImageTensor& image) const override;
  [[nodiscard]] std::unique_ptr<ForwardPass> forward_pass(const ImageTensor& image) const override;
  [[nodiscard]] std::string parameter_checksum() const override;
  [[nodiscard]] bool thread_safe() const override { return true; }

  [[nodiscard]] std::size_t parameter_count() const { return params_.size(); }
  [[nodiscard]] std::span<const double> parameters() const { return params_; }
  [[nodiscard]] std::span<double> mutable_parameters() { return params_; }

  // Intermediate activations of one forward evaluation.
  struct Tape {
    nn::Tensor input, e1, e2, e3, e4, b, u3, s3, d3, u2, s2, d2, u1, s1, d1, out;
  };
  [[nodiscard]] Tape run(const ImageTensor& image) const;
  // Backpropagates dL/draw. Fills `grad_input` (H*W*3) when non-null and
  // accumulates parameter gradients into `grad_params` when non-empty.
  void backward(const Tape& tape, std::span<const double> grad_raw,
                std::vector<double>* grad_input, std::span<double> grad_params) const;

 private:
  struct Layer {
    nn::ConvSpec spec;
    std::size_t offset = 0;
  };
  void build_layers();
  [[nodiscard]] std::span<const double> layer_params(const Layer& l) const;
  static std::span<double> layer_grads(const Layer& l, std::span<double> grads);

  Shape input_{};
  ChannelNormalization norm_{};
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

struct ToyModelManifest {
  std::string name;
  Shape input_shape{};
  ChannelNormalization normalization{};
  std::string parameter_checksum;
  std::size_t parameter_count = 0;
};

// Checkpoint directory: manifest.json + params.bin (little-endian doubles).
// Writes are atomic per file.
void save_toy_model(const std::filesystem::path& dir, const ToyUNet& model);
// Throws DataError when the parameters do not match the manifest checksum.
std::shared_ptr<const ToyUNet> load_toy_model(const std::filesystem::path& dir);
ToyModelManifest read_model_manifest(const std::filesystem::path& dir);

}  // namespace depthpatch
