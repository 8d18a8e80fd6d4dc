#pragma once

// Minimal CNN building blocks for the toy depth network: 3x3 convolutions
// (shifted GEMMs over a zero-padded layout; im2col for stride 2), ELU, sigmoid and nearest 2x upsampling, each with an
// explicit backward pass.

#include <Eigen/Core>

#include <span>
#include <vector>

namespace depthpatch::nn {

// Feature map stored as a (channels x height*width) column-major matrix, so
// the channels of one pixel are contiguous.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  Eigen::MatrixXd data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(c, h * w) {
    data.setZero();
  }
  [[nodiscard]] int pixels() const { return height * width; }
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;

  [[nodiscard]] int weight_count() const { return out_channels * in_channels * 9; }
  [[nodiscard]] int param_count() const { return weight_count() + out_channels; }
};

// Parameter layout per layer: weights (out x in*9, column-major, k = tap*in +
// channel) followed by biases.
Tensor conv3x3_forward(const Tensor& in, const ConvSpec& spec, std::span<const double> params);

// Returns dL/din when `grad_in` is requested; accumulates dL/dparams into
// `grad_params` when non-empty.
void conv3x3_backward(const Tensor& in, const ConvSpec& spec, std::span<const double> params,
                      const Tensor& grad_out, Tensor* grad_in, std::span<double> grad_params);

void elu_inplace(Tensor& t);
// grad *= dELU/dx expressed through the ELU output.
void elu_backward_inplace(const Tensor& out, Tensor& grad);

void sigmoid_inplace(Tensor& t);
void sigmoid_backward_inplace(const Tensor& out, Tensor& grad);

Tensor upsample2x(const Tensor& in);
Tensor upsample2x_backward(const Tensor& grad_out);

}  // namespace depthpatch::nn
