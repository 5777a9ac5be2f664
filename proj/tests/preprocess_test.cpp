#include "dced/preprocess.hpp"

#include <gtest/gtest.h>

#include "dced/tensor.hpp"

using namespace dced;

namespace {

RawImage flat_gray(int w, int h, std::uint8_t v) { return RawImage::create(w, h, 1, v); }

double pixel_variance(const RawImage& img) {
  double mean = 0.0;
  for (std::uint8_t p : img.pixels) mean += p;
  mean /= static_cast<double>(img.pixels.size());
  double var = 0.0;
  for (std::uint8_t p : img.pixels) var += (p - mean) * (p - mean);
  return var / static_cast<double>(img.pixels.size());
}

}  // namespace

TEST(Grayscale, PureWhite) {
  RawImage img = RawImage::create(2, 2, 3, 255);
  RawImage gray = to_grayscale(img);
  for (std::uint8_t p : gray.pixels) EXPECT_EQ(p, 255);
}

TEST(Grayscale, GrayInputPassesThrough) {
  RawImage img = flat_gray(3, 3, 97);
  img.at(1, 1) = 14;
  RawImage gray = to_grayscale(img);
  EXPECT_EQ(gray.pixels, img.pixels);
}

TEST(Grayscale, PureRedLuminance) {
  RawImage img = RawImage::create(1, 1, 3, 0);
  img.at(0, 0, 0) = 255;
  RawImage gray = to_grayscale(img);
  EXPECT_EQ(gray.at(0, 0), 76);  // round(0.299 * 255)
}

TEST(Wiener, ConstantImageUnchanged) {
  RawImage img = flat_gray(9, 9, 123);
  RawImage out = wiener_filter(img, 5);
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(Wiener, ImpulseAmplitudeStrictlyReduced) {
  RawImage img = flat_gray(9, 9, 100);
  img.at(4, 4) = 200;
  RawImage out = wiener_filter(img, 3);
  const int before = 100;
  const int after = std::abs(static_cast<int>(out.at(4, 4)) - 100);
  EXPECT_LT(after, before);
  EXPECT_GT(after, 0);  // partially suppressed, not erased with this window
}

TEST(Wiener, NoiseFieldVarianceDrops) {
  Rng rng(77);
  RawImage img = flat_gray(32, 32, 0);
  for (std::uint8_t& p : img.pixels) {
    p = clamp_u8(128.0 + rng.normal() * 30.0);
  }
  RawImage out = wiener_filter(img, 5);
  EXPECT_LT(pixel_variance(out), pixel_variance(img));
}

TEST(Wiener, EvenWindowRejected) {
  RawImage img = flat_gray(8, 8, 5);
  EXPECT_THROW(wiener_filter(img, 4), std::invalid_argument);
}

TEST(Laplacian, ConstantImageUnchanged) {
  RawImage img = flat_gray(7, 7, 200);
  RawImage out = laplacian_sharpen(img);
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(Laplacian, BrightPixelBrightensWithClamp) {
  RawImage img = flat_gray(5, 5, 100);
  img.at(2, 2) = 200;
  RawImage out = laplacian_sharpen(img);
  EXPECT_EQ(out.at(2, 2), 255);  // 200 - (400 - 800) clamps at 255
}

TEST(Laplacian, StepEdgeOvershootsBothSides) {
  // Vertical edge between value 100 (left) and 150 (right).
  RawImage img = flat_gray(8, 5, 100);
  for (int y = 0; y < 5; ++y) {
    for (int x = 4; x < 8; ++x) img.at(y, x) = 150;
  }
  RawImage out = laplacian_sharpen(img);
  EXPECT_EQ(out.at(2, 3), 50);   // undershoot on the dark side
  EXPECT_EQ(out.at(2, 4), 200);  // overshoot on the bright side
}

TEST(Contrast, FullRangeImageUnchanged) {
  RawImage img = flat_gray(10, 10, 0);
  // Enough mass at the extremes that p1 == 0 and p99 == 255.
  for (int i = 0; i < 50; ++i) img.pixels[i] = 0;
  for (int i = 50; i < 100; ++i) img.pixels[i] = 255;
  RawImage out = contrast_normalize(img, 1.0, 99.0);
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(Contrast, ConstantImageHitsDegenerateBranch) {
  RawImage img = flat_gray(6, 6, 42);
  RawImage out = contrast_normalize(img);
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(Contrast, NarrowBandStretchesToFullRange) {
  Rng rng(5);
  RawImage img = flat_gray(20, 20, 0);
  for (std::uint8_t& p : img.pixels) {
    p = static_cast<std::uint8_t>(100 + rng.below(51));  // uniform in [100, 150]
  }
  RawImage out = contrast_normalize(img);
  int lo = 255, hi = 0;
  for (std::uint8_t p : out.pixels) {
    lo = std::min(lo, static_cast<int>(p));
    hi = std::max(hi, static_cast<int>(p));
  }
  EXPECT_LE(lo, 5);
  EXPECT_GE(hi, 250);
}

TEST(Resize, PaperSourceToModelInput) {
  RawImage img = flat_gray(490, 480, 70);
  RawImage out = resize_bilinear(img, 320, 320);
  EXPECT_EQ(out.width, 320);
  EXPECT_EQ(out.height, 320);
  for (std::uint8_t p : out.pixels) EXPECT_EQ(p, 70);  // constant stays constant
}

TEST(Resize, IdentityWhenSizesMatch) {
  Rng rng(6);
  RawImage img = flat_gray(17, 13, 0);
  for (std::uint8_t& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  RawImage out = resize_bilinear(img, 17, 13);
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(UnityMask, AllBlackIsAllRoi) {
  RawImage truth = flat_gray(4, 4, 0);
  Mask m = unity_mask(truth, 128);
  for (std::uint8_t v : m.values) EXPECT_EQ(v, 0);
}

TEST(UnityMask, AllWhiteIsAllBackground) {
  RawImage truth = flat_gray(4, 4, 255);
  Mask m = unity_mask(truth, 128);
  for (std::uint8_t v : m.values) EXPECT_EQ(v, 1);
}

TEST(UnityMask, CheckerboardThresholds) {
  RawImage truth = flat_gray(6, 6, 0);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) truth.at(y, x) = (y + x) % 2 ? 255 : 0;
  }
  Mask m = unity_mask(truth, 128);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) EXPECT_EQ(m.at(y, x), (y + x) % 2 ? 1 : 0);
  }
}

TEST(UnityMask, Idempotent) {
  RawImage truth = flat_gray(5, 5, 0);
  for (std::size_t i = 0; i < truth.pixels.size(); ++i) {
    truth.pixels[i] = static_cast<std::uint8_t>((i * 37) % 256);
  }
  Mask first = unity_mask(truth, 128);
  RawImage rendered = flat_gray(5, 5, 0);
  for (std::size_t i = 0; i < first.values.size(); ++i) {
    rendered.pixels[i] = first.values[i] ? 255 : 0;
  }
  Mask second = unity_mask(rendered, 128);
  EXPECT_EQ(second.values, first.values);
}

TEST(Pipeline, ProducesPaperShapesAtDefaultConfig) {
  Rng rng(9);
  RawImage raw = RawImage::create(490, 480, 3, 0);
  for (std::uint8_t& p : raw.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  RawImage truth = flat_gray(490, 480, 0);
  for (std::uint8_t& p : truth.pixels) p = rng.uniform() < 0.2 ? 0 : 255;

  LabeledImage sample = preprocess_pipeline(raw, truth, 320, PreprocessConfig{}, "healthy");
  EXPECT_EQ(sample.image.shape(), (Shape{1, 3, 320, 320}));
  EXPECT_EQ(sample.mask.width, 320);
  EXPECT_EQ(sample.mask.height, 320);
  for (std::uint8_t v : sample.mask.values) EXPECT_LE(v, 1);
  for (std::size_t i = 0; i < sample.image.size(); ++i) {
    EXPECT_GE(sample.image[i], 0.0f);
    EXPECT_LE(sample.image[i], 1.0f);
  }
}

TEST(Pipeline, Deterministic) {
  Rng rng(10);
  RawImage raw = RawImage::create(64, 64, 3, 0);
  for (std::uint8_t& p : raw.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  RawImage truth = flat_gray(64, 64, 0);
  for (std::uint8_t& p : truth.pixels) p = rng.uniform() < 0.3 ? 0 : 255;

  LabeledImage a = preprocess_pipeline(raw, truth, 64, PreprocessConfig{});
  LabeledImage b = preprocess_pipeline(raw, truth, 64, PreprocessConfig{});
  EXPECT_EQ(a.mask.values, b.mask.values);
  for (std::size_t i = 0; i < a.image.size(); ++i) EXPECT_EQ(a.image[i], b.image[i]);
}

TEST(Pipeline, SizeMismatchRejected) {
  RawImage raw = RawImage::create(32, 32, 3, 0);
  RawImage truth = flat_gray(16, 32, 0);
  EXPECT_THROW(preprocess_pipeline(raw, truth, 32, PreprocessConfig{}), IoError);
}

TEST(Pipeline, MaskPathIgnoresImageFilters) {
  Rng rng(11);
  RawImage truth = flat_gray(64, 64, 255);
  for (int y = 20; y < 40; ++y) {
    for (int x = 20; x < 40; ++x) truth.at(y, x) = 0;
  }
  RawImage raw_a = RawImage::create(64, 64, 3, 10);
  RawImage raw_b = RawImage::create(64, 64, 3, 0);
  for (std::uint8_t& p : raw_b.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  LabeledImage a = preprocess_pipeline(raw_a, truth, 64, PreprocessConfig{});
  LabeledImage b = preprocess_pipeline(raw_b, truth, 64, PreprocessConfig{});
  EXPECT_EQ(a.mask.values, b.mask.values);
}
