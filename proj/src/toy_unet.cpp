#include "depthpatch/toy_unet.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "depthpatch/util.hpp"
#include "json.hpp"

namespace depthpatch {

namespace {

enum LayerIndex { kE1, kE2, kE3, kE4, kB, kU3, kD3, kU2, kD2, kU1, kD1, kHead, kLayerCount };

class ToyForwardPass final : public ForwardPass {
 public:
  ToyForwardPass(const ToyUNet& net, const ImageTensor& image)
      : net_(net), tape_(net.run(image)) {
    raw_.assign(tape_.out.data.data(), tape_.out.data.data() + tape_.out.data.size());
  }
  [[nodiscard]] const std::vector<double>& raw() const override { return raw_; }
  [[nodiscard]] std::vector<double> input_gradient(std::span<const double> grad_raw) const override {
    std::vector<double> grad;
    net_.backward(tape_, grad_raw, &grad, {});
    return grad;
  }

 private:
  const ToyUNet& net_;
  ToyUNet::Tape tape_;
  std::vector<double> raw_;
};

nn::Tensor add(const nn::Tensor& a, const nn::Tensor& b) {
  nn::Tensor out = a;
  out.data += b.data;
  return out;
}

}  // namespace

ToyUNet::ToyUNet(std::uint64_t seed, Shape input) : input_(input) {
  build_layers();
  std::mt19937_64 rng(seed);
  for (const Layer& l : layers_) {
    const double bound = std::sqrt(6.0 / (l.spec.in_channels * 9));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int i = 0; i < l.spec.weight_count(); ++i) params_[l.offset + i] = dist(rng);
  }
}

ToyUNet::ToyUNet(Shape input, std::vector<double> params) : input_(input) {
  build_layers();
  if (params.size() != params_.size()) {
    throw DataError("ToyUNet: expected " + std::to_string(params_.size()) + " parameters, got " +
                    std::to_string(params.size()));
  }
  params_ = std::move(params);
}

void ToyUNet::build_layers() {
  if (input_.height < 8 || input_.width < 8 || input_.height % 8 != 0 || input_.width % 8 != 0) {
    throw ConfigError("ToyUNet: input height and width must be positive multiples of 8, got " +
                      to_string(input_));
  }
  const nn::ConvSpec specs[kLayerCount] = {
      {3, 8, 1},   {8, 16, 2},  {16, 32, 2}, {32, 64, 2}, {64, 64, 1}, {64, 32, 1},
      {32, 32, 1}, {32, 16, 1}, {16, 16, 1}, {16, 8, 1},  {8, 8, 1},   {8, 1, 1},
  };
  std::size_t offset = 0;
  layers_.clear();
  for (const auto& spec : specs) {
    layers_.push_back(Layer{spec, offset});
    offset += static_cast<std::size_t>(spec.param_count());
  }
  params_.assign(offset, 0.0);
}

std::span<const double> ToyUNet::layer_params(const Layer& l) const {
  return std::span<const double>(params_).subspan(l.offset, l.spec.param_count());
}

std::span<double> ToyUNet::layer_grads(const Layer& l, std::span<double> grads) {
  if (grads.empty()) return {};
  return grads.subspan(l.offset, l.spec.param_count());
}

ToyUNet::Tape ToyUNet::run(const ImageTensor& image) const {
  require_same_shape(image.shape(), input_, "ToyUNet");
  Tape t;
  t.input = nn::Tensor(3, input_.height, input_.width);
  const auto px = image.data();
  double* dst = t.input.data.data();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    dst[i] = (px[i] - norm_.mean[c]) / norm_.std[c];
  }

  auto conv_elu = [&](const nn::Tensor& in, int layer) {
    nn::Tensor out = nn::conv3x3_forward(in, layers_[layer].spec, layer_params(layers_[layer]));
    nn::elu_inplace(out);
    return out;
  };

  t.e1 = conv_elu(t.input, kE1);
  t.e2 = conv_elu(t.e1, kE2);
  t.e3 = conv_elu(t.e2, kE3);
  t.e4 = conv_elu(t.e3, kE4);
  t.b = conv_elu(t.e4, kB);
  t.u3 = conv_elu(t.b, kU3);
  t.s3 = add(nn::upsample2x(t.u3), t.e3);
  t.d3 = conv_elu(t.s3, kD3);
  t.u2 = conv_elu(t.d3, kU2);
  t.s2 = add(nn::upsample2x(t.u2), t.e2);
  t.d2 = conv_elu(t.s2, kD2);
  t.u1 = conv_elu(t.d2, kU1);
  t.s1 = add(nn::upsample2x(t.u1), t.e1);
  t.d1 = conv_elu(t.s1, kD1);
  t.out = nn::conv3x3_forward(t.d1, layers_[kHead].spec, layer_params(layers_[kHead]));
  nn::sigmoid_inplace(t.out);
  return t;
}

void ToyUNet::backward(const Tape& t, std::span<const double> grad_raw,
                       std::vector<double>* grad_input, std::span<double> grad_params) const {
  if (grad_raw.size() != input_.area()) throw ShapeError("ToyUNet::backward: gradient size");
  if (!grad_params.empty() && grad_params.size() != params_.size()) {
    throw ShapeError("ToyUNet::backward: parameter gradient size");
  }

  // Backprop through conv(+ELU) `layer` whose input was `in` and output
  // `out`; `grad` is dL/dout (consumed).
  auto back = [&](nn::Tensor& grad, const nn::Tensor& out, const nn::Tensor& in, int layer,
                  bool need_input) {
    nn::elu_backward_inplace(out, grad);
    nn::Tensor grad_in;
    nn::conv3x3_backward(in, layers_[layer].spec, layer_params(layers_[layer]), grad,
                         need_input ? &grad_in : nullptr,
                         layer_grads(layers_[layer], grad_params));
    return grad_in;
  };

  nn::Tensor g_out(1, input_.height, input_.width);
  std::copy(grad_raw.begin(), grad_raw.end(), g_out.data.data());
  nn::sigmoid_backward_inplace(t.out, g_out);
  nn::Tensor g_d1;
  nn::conv3x3_backward(t.d1, layers_[kHead].spec, layer_params(layers_[kHead]), g_out, &g_d1,
                       layer_grads(layers_[kHead], grad_params));

  nn::Tensor g_s1 = back(g_d1, t.d1, t.s1, kD1, true);
  nn::Tensor g_e1 = g_s1;
  nn::Tensor g_u1 = nn::upsample2x_backward(g_s1);
  nn::Tensor g_d2 = back(g_u1, t.u1, t.d2, kU1, true);
  nn::Tensor g_s2 = back(g_d2, t.d2, t.s2, kD2, true);
  nn::Tensor g_e2 = g_s2;
  nn::Tensor g_u2 = nn::upsample2x_backward(g_s2);
  nn::Tensor g_d3 = back(g_u2, t.u2, t.d3, kU2, true);
  nn::Tensor g_s3 = back(g_d3, t.d3, t.s3, kD3, true);
  nn::Tensor g_e3 = g_s3;
  nn::Tensor g_u3 = nn::upsample2x_backward(g_s3);
  nn::Tensor g_b = back(g_u3, t.u3, t.b, kU3, true);
  nn::Tensor g_e4 = back(g_b, t.b, t.e4, kB, true);
  g_e3.data += back(g_e4, t.e4, t.e3, kE4, true).data;
  g_e2.data += back(g_e3, t.e3, t.e2, kE3, true).data;
  g_e1.data += back(g_e2, t.e2, t.e1, kE2, true).data;
  const bool need_input = grad_input != nullptr;
  nn::Tensor g_in = back(g_e1, t.e1, t.input, kE1, need_input);

  if (need_input) {
    grad_input->resize(input_.area() * 3);
    const double* src = g_in.data.data();
    for (std::size_t i = 0; i < grad_input->size(); ++i) {
      (*grad_input)[i] = src[i] / norm_.std[i % 3];
    }
  }
}

std::vector<double> ToyUNet::predict_raw(const ImageTensor& image) const {
  const Tape t = run(image);
  return {t.out.data.data(), t.out.data.data() + t.out.data.size()};
}

std::unique_ptr<ForwardPass> ToyUNet::forward_pass(const ImageTensor& image) const {
  return std::make_unique<ToyForwardPass>(*this, image);
}

std::string ToyUNet::parameter_checksum() const { return sha256_hex(params_); }

void save_toy_model(const std::filesystem::path& dir, const ToyUNet& model) {
  std::filesystem::create_directories(dir);
  const auto params = model.parameters();
  atomic_write(dir / "params.bin",
               std::string_view(reinterpret_cast<const char*>(params.data()), params.size_bytes()));
  const auto norm = model.normalization();
  nlohmann::json manifest = {
      {"name", model.name()},
      {"input_shape", {model.input_shape().height, model.input_shape().width}},
      {"normalization", {{"mean", norm.mean}, {"std", norm.std}}},
      {"parameter_checksum", model.parameter_checksum()},
      {"parameter_count", model.parameter_count()},
  };
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

ToyModelManifest read_model_manifest(const std::filesystem::path& dir) {
  try {
    const auto j = nlohmann::json::parse(read_file(dir / "manifest.json"));
    ToyModelManifest m;
    m.name = j.at("name").get<std::string>();
    m.input_shape = {j.at("input_shape").at(0).get<int>(), j.at("input_shape").at(1).get<int>()};
    m.normalization.mean = j.at("normalization").at("mean").get<std::array<double, 3>>();
    m.normalization.std = j.at("normalization").at("std").get<std::array<double, 3>>();
    m.parameter_checksum = j.at("parameter_checksum").get<std::string>();
    m.parameter_count = j.at("parameter_count").get<std::size_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model manifest in " + dir.string() + ": " + e.what());
  }
}

std::shared_ptr<const ToyUNet> load_toy_model(const std::filesystem::path& dir) {
  const ToyModelManifest manifest = read_model_manifest(dir);
  if (manifest.name != ToyUNet::kName) {
    throw DataError("model checkpoint " + dir.string() + " is not a " + ToyUNet::kName);
  }
  const std::string bytes = read_file(dir / "params.bin");
  if (bytes.size() != manifest.parameter_count * sizeof(double)) {
    throw DataError("params.bin size does not match manifest in " + dir.string());
  }
  std::vector<double> params(manifest.parameter_count);
  std::memcpy(params.data(), bytes.data(), bytes.size());
  auto model = std::make_shared<ToyUNet>(manifest.input_shape, std::move(params));
  if (model->parameter_checksum() != manifest.parameter_checksum) {
    throw DataError("parameter checksum mismatch for model in " + dir.string());
  }
  return model;
}

}  // namespace depthpatch
