#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dced/image.hpp"
#include "dced/preprocess.hpp"
#include "dced/synthgen.hpp"

namespace dced {

// Preprocessed samples round-trip through ordinary PPM/PGM pairs: the image
// tensor holds one gray value per pixel replicated over 3 channels on the
// exact k/255 grid, so 8-bit storage is lossless.
inline void save_labeled_image(const LabeledImage& sample, const std::filesystem::path& image_path,
                               const std::filesystem::path& mask_path) {
  const Shape& s = sample.image.shape();
  RawImage img = RawImage::create(s.w, s.h, 3);
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (std::size_t i = 0; i < plane; ++i) {
    img.pixels[3 * i] = clamp_u8(sample.image[i] * 255.0);
    img.pixels[3 * i + 1] = clamp_u8(sample.image[plane + i] * 255.0);
    img.pixels[3 * i + 2] = clamp_u8(sample.image[2 * plane + i] * 255.0);
  }
  save_image(img, image_path);
  save_mask(sample.mask, mask_path);
}

inline LabeledImage load_labeled_image(const std::filesystem::path& image_path,
                                       const std::filesystem::path& mask_path,
                                       const std::string& tag) {
  const RawImage img = load_image(image_path);
  if (img.channels != 3) throw IoError("preprocessed image must be 3-channel: " + image_path.string());
  LabeledImage sample;
  sample.tag = tag;
  sample.image = Tensor(Shape{1, 3, img.height, img.width});
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (std::size_t i = 0; i < plane; ++i) {
    sample.image[i] = static_cast<float>(img.pixels[3 * i]) / 255.0f;
    sample.image[plane + i] = static_cast<float>(img.pixels[3 * i + 1]) / 255.0f;
    sample.image[2 * plane + i] = static_cast<float>(img.pixels[3 * i + 2]) / 255.0f;
  }
  sample.mask = load_mask(mask_path);
  return sample;
}

// Loads a preprocessed dataset directory through its manifest.
inline std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir) {
  const std::vector<ManifestRow> rows = load_manifest(dir / "manifest.csv");
  std::vector<LabeledImage> images;
  images.reserve(rows.size());
  for (const ManifestRow& row : rows) {
    LabeledImage sample = load_labeled_image(dir / row.image, dir / row.mask, row.tag);
    sample.class_counts = row.counts;
    images.push_back(std::move(sample));
  }
  return images;
}

}  // namespace dced
