#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "dced/image.hpp"
#include "dced/tensor.hpp"

namespace dced {

struct PreprocessConfig {
  int wiener_window = 5;
  double percentile_low = 1.0;
  double percentile_high = 99.0;
  int mask_threshold = 128;  // truth pixel < threshold => ROI
};

// Preprocessed sample: 3-channel [0,1] image tensor plus the unity mask
// (0 = ROI, 1 = background) and dataset bookkeeping.
struct LabeledImage {
  Tensor image;  // (1, 3, S, S)
  Mask mask;     // S x S
  std::string tag;                 // healthy | anaemic
  std::array<int, 5> class_counts{};  // normal, microcyte, macrocyte, elliptocyte, target
};

inline RawImage to_grayscale(const RawImage& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw ShapeError("to_grayscale: unsupported channel count");
  RawImage out = RawImage::create(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double lum =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
      out.at(y, x) = clamp_u8(lum);
    }
  }
  return out;
}

// Adaptive local Wiener denoising. Per pixel, with local mean mu and variance
// s2 over the window and noise power nu = mean of all local variances:
//   out = mu + max(0, s2 - nu) / max(s2, nu) * (x - mu)
// Borders use edge replication.
inline RawImage wiener_filter(const RawImage& img, int window) {
  if (img.channels != 1) throw ShapeError("wiener_filter: expects grayscale input");
  if (window < 3 || window % 2 == 0) {
    throw std::invalid_argument("wiener_filter: window must be odd and >= 3");
  }
  const int W = img.width, H = img.height, r = window / 2;
  std::vector<double> mean(static_cast<std::size_t>(W) * H);
  std::vector<double> var(static_cast<std::size_t>(W) * H);
  double noise = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double sum = 0.0, sq = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = std::clamp(y + dy, 0, H - 1);
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = std::clamp(x + dx, 0, W - 1);
          const double v = img.at(yy, xx);
          sum += v;
          sq += v * v;
        }
      }
      const double count = static_cast<double>(window) * window;
      const double mu = sum / count;
      const double s2 = std::max(0.0, sq / count - mu * mu);
      mean[static_cast<std::size_t>(y) * W + x] = mu;
      var[static_cast<std::size_t>(y) * W + x] = s2;
      noise += s2;
    }
  }
  noise /= static_cast<double>(W) * H;
  RawImage out = RawImage::create(W, H, 1);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double s2 = var[i];
    const double coeff = s2 > noise && s2 > 0.0 ? (s2 - noise) / s2 : 0.0;
    out.pixels[i] = clamp_u8(mean[i] + coeff * (img.pixels[i] - mean[i]));
  }
  return out;
}

// out = clamp(x - lap(x)) with the 4-neighbor Laplacian, edge replication.
inline RawImage laplacian_sharpen(const RawImage& img) {
  if (img.channels != 1) throw ShapeError("laplacian_sharpen: expects grayscale input");
  const int W = img.width, H = img.height;
  RawImage out = RawImage::create(W, H, 1);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double center = img.at(y, x);
      const double up = img.at(std::max(0, y - 1), x);
      const double down = img.at(std::min(H - 1, y + 1), x);
      const double left = img.at(y, std::max(0, x - 1));
      const double right = img.at(y, std::min(W - 1, x + 1));
      const double lap = up + down + left + right - 4.0 * center;
      out.at(y, x) = clamp_u8(center - lap);
    }
  }
  return out;
}

namespace detail {

// Linear-interpolation percentile over a sorted copy of the pixels.
inline double percentile(std::vector<std::uint8_t> values, double p) {
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (values[lo + 1] - values[lo]) * frac;
}

}  // namespace detail

// Stretches the [p_low, p_high] percentile range linearly onto [0,255].
inline RawImage contrast_normalize(const RawImage& img, double p_low = 1.0,
                                   double p_high = 99.0) {
  if (img.channels != 1) throw ShapeError("contrast_normalize: expects grayscale input");
  const double lo = detail::percentile(img.pixels, p_low);
  const double hi = detail::percentile(img.pixels, p_high);
  if (!(hi > lo)) return img;  // degenerate range
  RawImage out = RawImage::create(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    out.pixels[i] = clamp_u8((img.pixels[i] - lo) * 255.0 / (hi - lo));
  }
  return out;
}

// Corner-aligned bilinear resize: destination index i samples the source at
// i * (src-1) / (dst-1), so the first and last samples land on the corners.
inline RawImage resize_bilinear(const RawImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ShapeError("resize_bilinear: target must be >= 1");
  if (out_w == img.width && out_h == img.height) return img;
  RawImage out = RawImage::create(out_w, out_h, img.channels);
  const double sy = out_h > 1 ? static_cast<double>(img.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(img.width - 1) / (out_w - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = clamp_u8(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

// Label-preserving resize for masks (nearest source pixel, corner-aligned).
inline Mask resize_nearest(const Mask& mask, int out_w, int out_h) {
  if (out_w == mask.width && out_h == mask.height) return mask;
  Mask out = Mask::create(out_w, out_h);
  const double sy = out_h > 1 ? static_cast<double>(mask.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(mask.width - 1) / (out_w - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const int yy = static_cast<int>(std::lround(y * sy));
    for (int x = 0; x < out_w; ++x) {
      const int xx = static_cast<int>(std::lround(x * sx));
      out.at(y, x) = mask.at(yy, xx);
    }
  }
  return out;
}

// Pixel < threshold becomes ROI (0), everything else background (1).
inline Mask unity_mask(const RawImage& truth, int threshold) {
  if (truth.channels != 1) throw ShapeError("unity_mask: truth image must be single channel");
  Mask m = Mask::create(truth.width, truth.height);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = truth.pixels[i] < threshold ? 0 : 1;
  }
  return m;
}

// Image path: grayscale -> wiener -> laplacian -> contrast stretch -> resize,
// then the gray plane is replicated to 3 channels and scaled to [0,1].
// Truth path: unity mask -> nearest-neighbor resize (never bilinear).
inline LabeledImage preprocess_pipeline(const RawImage& raw, const RawImage& truth,
                                        int target_size, const PreprocessConfig& cfg,
                                        const std::string& tag = "") {
  if (raw.width != truth.width || raw.height != truth.height) {
    throw IoError("preprocess: image/truth size mismatch (" + std::to_string(raw.width) + "x" +
                  std::to_string(raw.height) + " vs " + std::to_string(truth.width) + "x" +
                  std::to_string(truth.height) + ")");
  }
  RawImage gray = to_grayscale(raw);
  gray = wiener_filter(gray, cfg.wiener_window);
  gray = laplacian_sharpen(gray);
  gray = contrast_normalize(gray, cfg.percentile_low, cfg.percentile_high);
  gray = resize_bilinear(gray, target_size, target_size);

  LabeledImage sample;
  sample.tag = tag;
  sample.image = Tensor(Shape{1, 3, target_size, target_size});
  const std::size_t plane = static_cast<std::size_t>(target_size) * target_size;
  for (std::size_t i = 0; i < plane; ++i) {
    const float v = static_cast<float>(gray.pixels[i]) / 255.0f;
    sample.image[i] = v;
    sample.image[plane + i] = v;
    sample.image[2 * plane + i] = v;
  }
  const RawImage truth_gray = to_grayscale(truth);
  sample.mask = resize_nearest(unity_mask(truth_gray, cfg.mask_threshold), target_size,
                               target_size);
  return sample;
}

// Image-only variant for segmentation of inputs without ground truth.
inline Tensor preprocess_image(const RawImage& raw, int target_size,
                               const PreprocessConfig& cfg) {
  RawImage gray = to_grayscale(raw);
  gray = wiener_filter(gray, cfg.wiener_window);
  gray = laplacian_sharpen(gray);
  gray = contrast_normalize(gray, cfg.percentile_low, cfg.percentile_high);
  gray = resize_bilinear(gray, target_size, target_size);
  Tensor image(Shape{1, 3, target_size, target_size});
  const std::size_t plane = static_cast<std::size_t>(target_size) * target_size;
  for (std::size_t i = 0; i < plane; ++i) {
    const float v = static_cast<float>(gray.pixels[i]) / 255.0f;
    image[i] = v;
    image[plane + i] = v;
    image[2 * plane + i] = v;
  }
  return image;
}

}  // namespace dced
