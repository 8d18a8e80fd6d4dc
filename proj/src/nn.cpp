#include "depthpatch/nn.hpp"

#include <cmath>

#include "depthpatch/errors.hpp"

namespace depthpatch::nn {

namespace {

int out_extent(int extent, int stride) { return (extent - 1) / stride + 1; }

// Column n of the result holds the 3x3 neighbourhood (zero padded) of output
// pixel n, tap-major.
Eigen::MatrixXd im2col(const Tensor& in, int stride) {
  const int C = in.channels;
  const int Ho = out_extent(in.height, stride);
  const int Wo = out_extent(in.width, stride);
  Eigen::MatrixXd col(9 * C, Ho * Wo);
  const double* src = in.data.data();
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      double* dst = col.col(oy * Wo + ox).data();
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          double* tap = dst + (ky * 3 + kx) * C;
          if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) {
            std::fill(tap, tap + C, 0.0);
          } else {
            const double* px = src + static_cast<std::ptrdiff_t>(iy * in.width + ix) * C;
            std::copy(px, px + C, tap);
          }
        }
      }
    }
  }
  return col;
}

void col2im_add(const Eigen::MatrixXd& col, int stride, Tensor& out) {
  const int C = out.channels;
  const int Ho = out_extent(out.height, stride);
  const int Wo = out_extent(out.width, stride);
  double* dst = out.data.data();
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      const double* src = col.col(oy * Wo + ox).data();
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= out.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= out.width) continue;
          const double* tap = src + (ky * 3 + kx) * C;
          double* px = dst + static_cast<std::ptrdiff_t>(iy * out.width + ix) * C;
          for (int c = 0; c < C; ++c) px[c] += tap[c];
        }
      }
    }
  }
}

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using MatMap = Eigen::Map<Eigen::MatrixXd>;

// Stride-1 layers run as nine shifted GEMMs over a zero-bordered copy of the
// map, (H+2)*(W+2) columns. Output columns on the border read wrapped values
// and are discarded.
Eigen::MatrixXd pad(const Tensor& t) {
  const int Wp = t.width + 2;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t.channels, static_cast<Eigen::Index>(t.height + 2) * Wp);
  for (int y = 0; y < t.height; ++y) {
    out.middleCols(static_cast<Eigen::Index>(y + 1) * Wp + 1, t.width) =
        t.data.middleCols(static_cast<Eigen::Index>(y) * t.width, t.width);
  }
  return out;
}

void unpad(const Eigen::MatrixXd& padded, Tensor& t) {
  const int Wp = t.width + 2;
  for (int y = 0; y < t.height; ++y) {
    t.data.middleCols(static_cast<Eigen::Index>(y) * t.width, t.width) =
        padded.middleCols(static_cast<Eigen::Index>(y + 1) * Wp + 1, t.width);
  }
}

// Columns [first, first + count) of the padded grid cover every interior pixel
// and keep all tap offsets in range.
struct PaddedRange {
  Eigen::Index first;
  Eigen::Index count;
  Eigen::Index offset[9];
};

PaddedRange padded_range(int height, int width) {
  const Eigen::Index Wp = width + 2;
  PaddedRange r{Wp + 1, static_cast<Eigen::Index>(height) * Wp - 2, {}};
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) r.offset[ky * 3 + kx] = (ky - 1) * Wp + (kx - 1);
  }
  return r;
}

}  // namespace

Tensor conv3x3_forward(const Tensor& in, const ConvSpec& spec, std::span<const double> params) {
  if (in.channels != spec.in_channels) throw ShapeError("conv3x3: channel mismatch");
  if (params.size() != static_cast<std::size_t>(spec.param_count())) {
    throw ShapeError("conv3x3: parameter count mismatch");
  }
  const ConstMatMap weights(params.data(), spec.out_channels, spec.in_channels * 9);
  const Eigen::Map<const Eigen::VectorXd> bias(params.data() + spec.weight_count(),
                                               spec.out_channels);
  Tensor out(spec.out_channels, out_extent(in.height, spec.stride),
             out_extent(in.width, spec.stride));
  if (spec.stride == 1) {
    const Eigen::MatrixXd src = pad(in);
    const PaddedRange r = padded_range(in.height, in.width);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(spec.out_channels, src.cols());
    for (int tap = 0; tap < 9; ++tap) {
      acc.middleCols(r.first, r.count).noalias() +=
          weights.middleCols(tap * spec.in_channels, spec.in_channels) *
          src.middleCols(r.first + r.offset[tap], r.count);
    }
    unpad(acc, out);
    out.data.colwise() += bias;
    return out;
  }
  const Eigen::MatrixXd col = im2col(in, spec.stride);
  out.data.noalias() = weights * col;
  out.data.colwise() += bias;
  return out;
}

void conv3x3_backward(const Tensor& in, const ConvSpec& spec, std::span<const double> params,
                      const Tensor& grad_out, Tensor* grad_in, std::span<double> grad_params) {
  const ConstMatMap weights(params.data(), spec.out_channels, spec.in_channels * 9);
  if (spec.stride == 1) {
    const PaddedRange r = padded_range(in.height, in.width);
    const Eigen::MatrixXd gout = pad(grad_out);
    if (!grad_params.empty()) {
      const Eigen::MatrixXd src = pad(in);
      MatMap gw(grad_params.data(), spec.out_channels, spec.in_channels * 9);
      for (int tap = 0; tap < 9; ++tap) {
        gw.middleCols(tap * spec.in_channels, spec.in_channels).noalias() +=
            gout.middleCols(r.first, r.count) *
            src.middleCols(r.first + r.offset[tap], r.count).transpose();
      }
      Eigen::Map<Eigen::VectorXd> gb(grad_params.data() + spec.weight_count(), spec.out_channels);
      gb += grad_out.data.rowwise().sum();
    }
    if (grad_in != nullptr) {
      *grad_in = Tensor(in.channels, in.height, in.width);
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(in.channels, gout.cols());
      for (int tap = 0; tap < 9; ++tap) {
        acc.middleCols(r.first + r.offset[tap], r.count).noalias() +=
            weights.middleCols(tap * spec.in_channels, spec.in_channels).transpose() *
            gout.middleCols(r.first, r.count);
      }
      unpad(acc, *grad_in);
    }
    return;
  }
  if (!grad_params.empty()) {
    const Eigen::MatrixXd col = im2col(in, spec.stride);
    MatMap gw(grad_params.data(), spec.out_channels, spec.in_channels * 9);
    gw.noalias() += grad_out.data * col.transpose();
    Eigen::Map<Eigen::VectorXd> gb(grad_params.data() + spec.weight_count(), spec.out_channels);
    gb += grad_out.data.rowwise().sum();
  }
  if (grad_in != nullptr) {
    *grad_in = Tensor(in.channels, in.height, in.width);
    const Eigen::MatrixXd grad_col = weights.transpose() * grad_out.data;
    col2im_add(grad_col, spec.stride, *grad_in);
  }
}

void elu_inplace(Tensor& t) {
  auto a = t.data.array();
  a = (a > 0.0).select(a, a.exp() - 1.0);
}

void elu_backward_inplace(const Tensor& out, Tensor& grad) {
  grad.data = grad.data.binaryExpr(out.data, [](double g, double y) {
    return y > 0.0 ? g : g * (y + 1.0);
  });
}

void sigmoid_inplace(Tensor& t) {
  t.data = (1.0 + (-t.data.array()).exp()).inverse().matrix();
}

void sigmoid_backward_inplace(const Tensor& out, Tensor& grad) {
  grad.data = grad.data.binaryExpr(out.data, [](double g, double s) { return g * s * (1.0 - s); });
}

Tensor upsample2x(const Tensor& in) {
  Tensor out(in.channels, in.height * 2, in.width * 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.data.col(y * out.width + x) = in.data.col((y / 2) * in.width + x / 2);
    }
  }
  return out;
}

Tensor upsample2x_backward(const Tensor& grad_out) {
  Tensor in(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
  for (int y = 0; y < grad_out.height; ++y) {
    for (int x = 0; x < grad_out.width; ++x) {
      in.data.col((y / 2) * in.width + x / 2) += grad_out.data.col(y * grad_out.width + x);
    }
  }
  return in;
}

}  // namespace depthpatch::nn
