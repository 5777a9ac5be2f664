#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dced/errors.hpp"

namespace dced {

// Writes bytes to a temp file next to `path`, then renames into place, so a
// failed command never leaves a partial output behind.
inline void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("rename failed: " + path.string() + " (" + ec.message() + ")");
  }
}

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
}

// 8-bit image, interleaved channels, row-major. channels is 1 (gray) or 3 (RGB).
struct RawImage {
  int width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> pixels;

  static RawImage create(int w, int h, int c, std::uint8_t fill = 0) {
    if (w < 1 || h < 1 || (c != 1 && c != 3)) {
      throw ShapeError("RawImage: bad dims " + std::to_string(w) + "x" + std::to_string(h) +
                       "x" + std::to_string(c));
    }
    RawImage img;
    img.width = w;
    img.height = h;
    img.channels = c;
    img.pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
    return img;
  }

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Binary ground-truth map: 0 = ROI (cell), 1 = background.
struct Mask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> values;

  static Mask create(int w, int h, std::uint8_t fill = 1) {
    Mask m;
    m.width = w;
    m.height = h;
    m.values.assign(static_cast<std::size_t>(w) * h, fill);
    return m;
  }

  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }
};

namespace detail {

inline int netpbm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header tokens.
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  if (!in || value < 0) throw IoError("malformed netpbm header: " + path);
  return value;
}

}  // namespace detail

// Binary PGM (P5) and PPM (P6), maxval 255.
inline RawImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6')) {
    throw IoError("unsupported image format (want P5/P6): " + path.string());
  }
  const int channels = kind == '5' ? 1 : 3;
  const int w = detail::netpbm_token(in, path.string());
  const int h = detail::netpbm_token(in, path.string());
  const int maxval = detail::netpbm_token(in, path.string());
  if (maxval != 255) throw IoError("unsupported maxval (want 255): " + path.string());
  in.get();  // single whitespace before raster
  RawImage img = RawImage::create(w, h, channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw IoError("truncated image raster: " + path.string());
  }
  return img;
}

inline void save_image(const RawImage& img, const std::filesystem::path& path) {
  std::ostringstream out;
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  atomic_write(path, out.str());
}

// Masks travel as PGM with 0 = ROI, 255 = background.
inline void save_mask(const Mask& mask, const std::filesystem::path& path) {
  RawImage img = RawImage::create(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    img.pixels[i] = mask.values[i] ? 255 : 0;
  }
  save_image(img, path);
}

inline Mask load_mask(const std::filesystem::path& path, int threshold = 128) {
  const RawImage img = load_image(path);
  if (img.channels != 1) throw IoError("mask must be single channel: " + path.string());
  Mask m = Mask::create(img.width, img.height);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = img.pixels[i] < threshold ? 0 : 1;
  }
  return m;
}

}  // namespace dced
