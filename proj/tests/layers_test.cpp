#include "dced/layers.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "support/gradient_checks.hpp"

using namespace dced;
namespace ts = dced::testsupport;

namespace {

// Naive six-nested-loop convolution reference, double precision throughout.
Tensor conv_reference(const Tensor& x, const ConvParams& p) {
  const Shape& s = x.shape();
  const int co = p.out_channels();
  Tensor out(Shape{s.n, co, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    for (int oc = 0; oc < co; ++oc) {
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) {
          double acc = p.bias[oc];
          for (int ic = 0; ic < s.c; ++ic) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = y + ky - 1, ix = xx + kx - 1;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                acc += static_cast<double>(x.at(n, ic, iy, ix)) * p.weights.at(oc, ic, ky, kx);
              }
            }
          }
          out.at(n, oc, y, xx) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

// Naive scatter-loop transpose-convolution reference.
Tensor tconv_reference(const Tensor& x, const ConvParams& p) {
  const Shape& s = x.shape();
  const int co = p.out_channels();
  Tensor out(Shape{s.n, co, 2 * s.h, 2 * s.w});
  std::vector<double> acc(out.size());
  for (int n = 0; n < s.n; ++n) {
    for (int oc = 0; oc < co; ++oc) {
      for (int y = 0; y < 2 * s.h; ++y) {
        for (int xx = 0; xx < 2 * s.w; ++xx) {
          acc[out.offset(n, oc, y, xx)] = p.bias[oc];
        }
      }
    }
  }
  for (int n = 0; n < s.n; ++n) {
    for (int ic = 0; ic < s.c; ++ic) {
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) {
          for (int oc = 0; oc < co; ++oc) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int ty = 2 * y + ky - 1, tx = 2 * xx + kx - 1;
                if (ty < 0 || ty >= 2 * s.h || tx < 0 || tx >= 2 * s.w) continue;
                acc[out.offset(n, oc, ty, tx)] +=
                    static_cast<double>(x.at(n, ic, y, xx)) * p.weights.at(oc, ic, ky, kx);
              }
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

}  // namespace

TEST(Conv2d, ZeroInputGivesZeroOutput) {
  Rng rng(1);
  ConvParams p = ConvParams::create(4, 2, rng);
  Tensor x(Shape{1, 2, 5, 5}, 0.0f);
  Tensor y = conv2d(x, p);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.0f);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(2);
  ConvParams p;
  p.weights = Tensor(Shape{1, 1, 3, 3}, 0.0f);
  p.weights.at(0, 0, 1, 1) = 1.0f;
  p.bias = {0.0f};
  Tensor x = randn(rng, Shape{1, 1, 5, 5}, 1.0f);
  Tensor y = conv2d(x, p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_FLOAT_EQ(y[i], x[i]);
}

TEST(Conv2d, MatchesNaiveLoopReference) {
  Rng rng(3);
  Tensor x = randn(rng, Shape{1, 2, 5, 5}, 1.0f);
  ConvParams p = ConvParams::create(3, 2, rng);
  for (float& b : p.bias) b = static_cast<float>(rng.normal());
  Tensor fast = conv2d(x, p);
  Tensor ref = conv_reference(x, p);
  ASSERT_EQ(fast.shape(), ref.shape());
  for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], ref[i], 1e-5);
}

TEST(Conv2d, ChannelMismatchRejected) {
  Rng rng(4);
  ConvParams p = ConvParams::create(3, 2, rng);
  Tensor x(Shape{1, 4, 5, 5});
  EXPECT_THROW(conv2d(x, p), ShapeError);
}

TEST(TransposeConv2d, ZeroInputGivesDoubledZeroOutput) {
  Rng rng(5);
  ConvParams p = ConvParams::create(2, 3, rng);
  Tensor x(Shape{1, 3, 4, 6}, 0.0f);
  Tensor y = transpose_conv2d(x, p);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 8, 12}));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.0f);
}

TEST(TransposeConv2d, SingleElementScatter) {
  // One input pixel of value v lands on the stride-2-visible kernel window.
  ConvParams p;
  p.weights = Tensor(Shape{1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) p.weights[i] = static_cast<float>(i + 1);
  p.bias = {0.0f};
  const float v = 2.5f;
  Tensor x(Shape{1, 1, 1, 1}, v);
  Tensor y = transpose_conv2d(x, p);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 0), v * p.weights.at(0, 0, 1, 1));
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 1), v * p.weights.at(0, 0, 1, 2));
  EXPECT_FLOAT_EQ(y.at(0, 0, 1, 0), v * p.weights.at(0, 0, 2, 1));
  EXPECT_FLOAT_EQ(y.at(0, 0, 1, 1), v * p.weights.at(0, 0, 2, 2));
}

TEST(TransposeConv2d, MatchesNaiveScatterReference) {
  Rng rng(6);
  Tensor x = randn(rng, Shape{2, 3, 4, 5}, 1.0f);
  ConvParams p = ConvParams::create(2, 3, rng);
  for (float& b : p.bias) b = static_cast<float>(rng.normal());
  Tensor fast = transpose_conv2d(x, p);
  Tensor ref = tconv_reference(x, p);
  ASSERT_EQ(fast.shape(), ref.shape());
  for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], ref[i], 1e-5);
}

TEST(BatchNorm, TrainingNormalizesPerChannel) {
  Rng rng(7);
  Tensor x = randn(rng, Shape{2, 3, 8, 8}, 2.0f);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += 1.5f;
  BatchNormParams p = BatchNormParams::create(3);
  Tensor y = batchnorm(x, p, Mode::Training);
  const std::size_t plane = 64;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (int n = 0; n < 2; ++n) {
      for (std::size_t i = 0; i < plane; ++i) mean += y.at(n, c, i / 8, i % 8);
    }
    mean /= 2.0 * plane;
    for (int n = 0; n < 2; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = y.at(n, c, i / 8, i % 8) - mean;
        var += d * d;
      }
    }
    var /= 2.0 * plane;
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(BatchNorm, InferenceWithIdentityStatsIsNearIdentity) {
  Rng rng(8);
  Tensor x = randn(rng, Shape{1, 2, 4, 4}, 1.0f);
  BatchNormParams p = BatchNormParams::create(2);
  Tensor y = batchnorm(x, p, Mode::Inference);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-4);
}

TEST(BatchNorm, MatchesDoublePrecisionFormula) {
  Rng rng(9);
  Tensor x = randn(rng, Shape{2, 4, 4, 4}, 1.3f);
  BatchNormParams p = BatchNormParams::create(4);
  for (float& g : p.gamma) g = static_cast<float>(1.0 + 0.2 * rng.normal());
  for (float& b : p.beta) b = static_cast<float>(0.3 * rng.normal());
  BatchNormParams run = p;
  Tensor y = batchnorm(x, run, Mode::Training);

  const std::size_t plane = 16;
  for (int c = 0; c < 4; ++c) {
    double mean = 0.0, var = 0.0;
    for (int n = 0; n < 2; ++n) {
      for (int h = 0; h < 4; ++h) {
        for (int w = 0; w < 4; ++w) mean += x.at(n, c, h, w);
      }
    }
    mean /= 2.0 * plane;
    for (int n = 0; n < 2; ++n) {
      for (int h = 0; h < 4; ++h) {
        for (int w = 0; w < 4; ++w) {
          const double d = x.at(n, c, h, w) - mean;
          var += d * d;
        }
      }
    }
    var /= 2.0 * plane;
    for (int n = 0; n < 2; ++n) {
      for (int h = 0; h < 4; ++h) {
        for (int w = 0; w < 4; ++w) {
          const double expected =
              p.gamma[c] * ((x.at(n, c, h, w) - mean) / std::sqrt(var + p.epsilon)) + p.beta[c];
          EXPECT_NEAR(y.at(n, c, h, w), expected, 1e-4);
        }
      }
    }
  }
}

TEST(BatchNorm, ChannelMismatchRejected) {
  BatchNormParams p = BatchNormParams::create(3);
  Tensor x(Shape{1, 2, 4, 4});
  EXPECT_THROW(batchnorm(x, p, Mode::Training), ShapeError);
}

TEST(Pool2x2, AverageOfSmallBlock) {
  Tensor x(Shape{1, 1, 2, 2});
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  x[3] = 4;
  Tensor avg = pool2x2(x, PoolMode::Average);
  EXPECT_FLOAT_EQ(avg[0], 2.5f);
  Tensor mx = pool2x2(x, PoolMode::Max);
  EXPECT_FLOAT_EQ(mx[0], 4.0f);
}

TEST(Pool2x2, ConstantInputIsInvariant) {
  Tensor x(Shape{2, 3, 4, 4}, 1.75f);
  for (PoolMode mode : {PoolMode::Average, PoolMode::Max}) {
    Tensor y = pool2x2(x, mode);
    EXPECT_EQ(y.shape(), (Shape{2, 3, 2, 2}));
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_FLOAT_EQ(y[i], 1.75f);
  }
}

TEST(Pool2x2, OddSpatialDimsRejected) {
  Tensor x(Shape{1, 1, 3, 4});
  EXPECT_THROW(pool2x2(x, PoolMode::Average), ShapeError);
}

TEST(Dropout, RateZeroIsIdentity) {
  Rng rng(10);
  Tensor x = randn(rng, Shape{1, 1, 4, 4}, 1.0f);
  for (Mode mode : {Mode::Training, Mode::Inference}) {
    Rng r(1);
    Tensor y = dropout(x, DropoutSpec{0.0f}, mode, r);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
  }
}

TEST(Dropout, InferenceIsIdentityAtAnyRate) {
  Rng rng(11);
  Tensor x = randn(rng, Shape{1, 1, 4, 4}, 1.0f);
  Rng r(2);
  Tensor y = dropout(x, DropoutSpec{0.2f}, Mode::Inference, r);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Dropout, StatisticsAtRatePointTwo) {
  Tensor x(Shape{1, 10, 100, 100}, 1.0f);
  Rng rng(12);
  Tensor y = dropout(x, DropoutSpec{0.2f}, Mode::Training, rng);
  std::size_t zeros = 0;
  double mean = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0f) ++zeros;
    mean += y[i];
  }
  const double zero_fraction = static_cast<double>(zeros) / static_cast<double>(y.size());
  mean /= static_cast<double>(y.size());
  EXPECT_GE(zero_fraction, 0.19);
  EXPECT_LE(zero_fraction, 0.21);
  EXPECT_NEAR(mean, 1.0, 0.02);
}

TEST(Dropout, RateOneRejected) {
  Tensor x(Shape{1, 1, 2, 2});
  Rng rng(13);
  EXPECT_THROW(dropout(x, DropoutSpec{1.0f}, Mode::Training, rng), std::invalid_argument);
}

TEST(Relu, Examples) {
  Tensor x(Shape{1, 1, 1, 3});
  x[0] = -1.0f;
  x[1] = 0.0f;
  x[2] = 2.0f;
  Tensor y = relu(x);
  EXPECT_EQ(y[0], 0.0f);
  EXPECT_EQ(y[1], 0.0f);
  EXPECT_EQ(y[2], 2.0f);

  Tensor neg(Shape{1, 1, 2, 2}, -3.0f);
  Tensor yn = relu(neg);
  for (std::size_t i = 0; i < yn.size(); ++i) EXPECT_EQ(yn[i], 0.0f);

  Tensor pos(Shape{1, 1, 2, 2}, 3.0f);
  Tensor yp = relu(pos);
  for (std::size_t i = 0; i < yp.size(); ++i) EXPECT_EQ(yp[i], 3.0f);
}

TEST(Sigmoid, OutputsLieStrictlyInUnitInterval) {
  Rng rng(14);
  Tensor x = randn(rng, Shape{1, 1, 8, 8}, 5.0f);
  Tensor y = sigmoid(x);
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_GT(y[i], 0.0f);
    EXPECT_LT(y[i], 1.0f);
  }
}

// --- backward-pass contracts -------------------------------------------------

TEST(Backward, ReluAtPositiveInputPassesGradThrough) {
  Tensor x(Shape{1, 1, 2, 2}, 2.0f);
  ReluCache cache;
  relu(x, &cache);
  Rng rng(15);
  Tensor g = randn(rng, Shape{1, 1, 2, 2}, 1.0f);
  Tensor gi = relu_backward(cache, g);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(gi[i], g[i]);
}

TEST(Backward, AveragePoolDistributesQuarter) {
  Tensor x(Shape{1, 1, 4, 4}, 1.0f);
  PoolCache cache;
  pool2x2(x, PoolMode::Average, &cache);
  Tensor g(Shape{1, 1, 2, 2}, 1.0f);
  Tensor gi = pool2x2_backward(cache, g);
  for (std::size_t i = 0; i < gi.size(); ++i) EXPECT_FLOAT_EQ(gi[i], 0.25f);
}

TEST(Backward, CacheReuseRejected) {
  Rng rng(16);
  Tensor x = randn(rng, Shape{1, 1, 4, 4}, 1.0f);
  ReluCache cache;
  relu(x, &cache);
  Tensor g(Shape{1, 1, 4, 4}, 1.0f);
  relu_backward(cache, g);
  EXPECT_THROW(relu_backward(cache, g), std::logic_error);
}

TEST(Backward, GradOutShapeMismatchRejected) {
  Rng rng(17);
  Tensor x = randn(rng, Shape{1, 2, 4, 4}, 1.0f);
  ConvParams p = ConvParams::create(3, 2, rng);
  ConvCache cache;
  conv2d(x, p, &cache);
  Tensor bad(Shape{1, 3, 2, 4}, 1.0f);
  EXPECT_THROW(conv2d_backward(cache, bad, p), ShapeError);
}

TEST(GradientFidelity, AllLayerKindsMatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    EXPECT_LT(ts::check_conv_gradients(seed).worst(), 1e-3) << "conv seed " << seed;
    EXPECT_LT(ts::check_transpose_conv_gradients(seed).worst(), 1e-3) << "tconv seed " << seed;
    EXPECT_LT(ts::check_batchnorm_gradients(seed).worst(), 1e-3) << "bn seed " << seed;
    EXPECT_LT(ts::check_pool_gradients(seed, PoolMode::Average), 1e-3) << "avg seed " << seed;
    EXPECT_LT(ts::check_pool_gradients(seed, PoolMode::Max), 1e-3) << "max seed " << seed;
    EXPECT_LT(ts::check_dropout_gradients(seed), 1e-3) << "dropout seed " << seed;
    EXPECT_LT(ts::check_relu_gradients(seed), 1e-3) << "relu seed " << seed;
    EXPECT_LT(ts::check_sigmoid_gradients(seed), 1e-3) << "sigmoid seed " << seed;
  }
}

// --- structural properties ----------------------------------------------------

TEST(Properties, LinearityOfLinearLayers) {
  Rng rng(18);
  const float a = 1.7f, b = -0.6f;
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = randn(rng, Shape{1, 2, 4, 4}, 1.0f);
    Tensor y = randn(rng, Shape{1, 2, 4, 4}, 1.0f);
    Tensor axby(Shape{1, 2, 4, 4});
    for (std::size_t i = 0; i < x.size(); ++i) axby[i] = a * x[i] + b * y[i];

    ConvParams p = ConvParams::create(3, 2, rng);  // zero bias by construction
    const auto check_linear = [&](auto&& f) {
      Tensor lhs = f(axby);
      Tensor fx = f(x), fy = f(y);
      for (std::size_t i = 0; i < lhs.size(); ++i) {
        EXPECT_NEAR(lhs[i], a * fx[i] + b * fy[i], 1e-4);
      }
    };
    check_linear([&](const Tensor& t) { return conv2d(t, p); });
    check_linear([&](const Tensor& t) { return transpose_conv2d(t, p); });
    check_linear([&](const Tensor& t) { return pool2x2(t, PoolMode::Average); });
  }
}

TEST(Properties, ShapeAlgebraOverEvenSizes) {
  Rng rng(19);
  ConvParams p = ConvParams::create(2, 1, rng);
  for (int size = 4; size <= 64; size += 2) {
    Tensor x(Shape{1, 1, size, size}, 0.5f);
    EXPECT_EQ(conv2d(x, p).shape(), (Shape{1, 2, size, size}));
    EXPECT_EQ(pool2x2(x, PoolMode::Average).shape(), (Shape{1, 1, size / 2, size / 2}));
    EXPECT_EQ(transpose_conv2d(x, p).shape(), (Shape{1, 2, 2 * size, 2 * size}));
  }
}

TEST(Properties, InferenceModeIsRngIndependent) {
  Rng rng(20);
  Tensor x = randn(rng, Shape{1, 3, 4, 4}, 1.0f);
  BatchNormParams bn = BatchNormParams::create(3);
  Rng r1(1), r2(999);
  Tensor d1 = dropout(x, DropoutSpec{0.5f}, Mode::Inference, r1);
  Tensor d2 = dropout(x, DropoutSpec{0.5f}, Mode::Inference, r2);
  Tensor b1 = batchnorm(x, bn, Mode::Inference);
  Tensor b2 = batchnorm(x, bn, Mode::Inference);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(d1[i], d2[i]);
    EXPECT_EQ(b1[i], b2[i]);
  }
}
