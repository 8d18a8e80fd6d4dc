#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "depthpatch/nn.hpp"
#include "fixtures.hpp"

using namespace depthpatch;
using namespace depthpatch::nn;
using depthpatch::testing::uniform_values;

namespace {

Tensor random_tensor(std::mt19937_64& rng, int c, int h, int w) {
  Tensor t(c, h, w);
  const auto v = uniform_values(rng, static_cast<std::size_t>(c) * h * w, -1, 1);
  std::copy(v.begin(), v.end(), t.data.data());
  return t;
}

// Direct 3x3 convolution with zero padding.
Tensor naive_conv(const Tensor& in, const ConvSpec& s, std::span<const double> p) {
  const int Ho = (in.height + s.stride - 1) / s.stride, Wo = (in.width + s.stride - 1) / s.stride;
  Tensor out(s.out_channels, Ho, Wo);
  for (int o = 0; o < s.out_channels; ++o) {
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Wo; ++x) {
        double acc = p[s.weight_count() + o];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = y * s.stride + ky - 1, ix = x * s.stride + kx - 1;
            if (iy < 0 || ix < 0 || iy >= in.height || ix >= in.width) continue;
            for (int c = 0; c < s.in_channels; ++c) {
              const int k = (ky * 3 + kx) * s.in_channels + c;
              acc += p[static_cast<std::size_t>(k) * s.out_channels + o] * in.data(c, iy * in.width + ix);
            }
          }
        }
        out.data(o, y * Wo + x) = acc;
      }
    }
  }
  return out;
}

double weighted_sum(const Tensor& t, const Tensor& w) { return (t.data.array() * w.data.array()).sum(); }

}  // namespace

TEST(Conv3x3, ForwardMatchesDirectLoop) {
  std::mt19937_64 rng(1);
  for (const int stride : {1, 2}) {
    for (const auto& [h, w] : std::vector<std::pair<int, int>>{{6, 10}, {8, 8}, {5, 7}}) {
      const ConvSpec s{3, 4, stride};
      const Tensor in = random_tensor(rng, 3, h, w);
      const auto p = uniform_values(rng, s.param_count(), -1, 1);
      const Tensor got = conv3x3_forward(in, s, p);
      const Tensor want = naive_conv(in, s, p);
      ASSERT_EQ(got.height, want.height);
      ASSERT_EQ(got.width, want.width);
      EXPECT_LT((got.data - want.data).cwiseAbs().maxCoeff(), 1e-12) << stride << " " << h << "x" << w;
    }
  }
}

TEST(Conv3x3, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (const int stride : {1, 2}) {
    const ConvSpec s{2, 3, stride};
    Tensor in = random_tensor(rng, 2, 6, 8);
    auto p = uniform_values(rng, s.param_count(), -1, 1);
    const Tensor probe = random_tensor(rng, 3, conv3x3_forward(in, s, p).height, conv3x3_forward(in, s, p).width);
    Tensor grad_in;
    std::vector<double> grad_p(p.size(), 0.0);
    conv3x3_backward(in, s, p, probe, &grad_in, grad_p);
    const double h = 1e-6;
    for (int i = 0; i < in.data.size(); ++i) {
      Tensor plus = in, minus = in;
      plus.data(i) += h;
      minus.data(i) -= h;
      const double fd = (weighted_sum(conv3x3_forward(plus, s, p), probe) -
                         weighted_sum(conv3x3_forward(minus, s, p), probe)) / (2 * h);
      EXPECT_NEAR(grad_in.data(i), fd, 1e-7);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto plus = p, minus = p;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (weighted_sum(conv3x3_forward(in, s, plus), probe) -
                         weighted_sum(conv3x3_forward(in, s, minus), probe)) / (2 * h);
      EXPECT_NEAR(grad_p[i], fd, 1e-7);
    }
  }
}

TEST(Conv3x3, RejectsMismatchedInputs) {
  const ConvSpec s{2, 2, 1};
  EXPECT_THROW(conv3x3_forward(Tensor(3, 4, 4), s, std::vector<double>(s.param_count())), ShapeError);
  EXPECT_THROW(conv3x3_forward(Tensor(2, 4, 4), s, std::vector<double>(3)), ShapeError);
}

TEST(Activations, EluAndSigmoidBackward) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, 2, 3, 3);
  const Tensor probe = random_tensor(rng, 2, 3, 3);
  const double h = 1e-6;
  auto check = [&](auto fwd, auto bwd) {
    Tensor out = x;
    fwd(out);
    Tensor grad = probe;
    bwd(out, grad);
    for (int i = 0; i < x.data.size(); ++i) {
      Tensor plus = x, minus = x;
      plus.data(i) += h;
      minus.data(i) -= h;
      fwd(plus);
      fwd(minus);
      EXPECT_NEAR(grad.data(i), (weighted_sum(plus, probe) - weighted_sum(minus, probe)) / (2 * h), 1e-7);
    }
  };
  check([](Tensor& t) { elu_inplace(t); }, [](const Tensor& o, Tensor& g) { elu_backward_inplace(o, g); });
  check([](Tensor& t) { sigmoid_inplace(t); }, [](const Tensor& o, Tensor& g) { sigmoid_backward_inplace(o, g); });
}

TEST(Activations, EluValues) {
  Tensor t(1, 1, 3);
  t.data << -1.0, 0.0, 2.0;
  elu_inplace(t);
  EXPECT_NEAR(t.data(0), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_EQ(t.data(1), 0.0);
  EXPECT_EQ(t.data(2), 2.0);
}

TEST(Upsample, NearestAndAdjoint) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor(rng, 2, 3, 4);
  const Tensor up = upsample2x(x);
  ASSERT_EQ(up.height, 6);
  ASSERT_EQ(up.width, 8);
  EXPECT_EQ(up.data(1, 5 * 8 + 7), x.data(1, 2 * 4 + 3));
  const Tensor g = random_tensor(rng, 2, 6, 8);
  EXPECT_NEAR(weighted_sum(up, g), weighted_sum(x, upsample2x_backward(g)), 1e-12);
}
