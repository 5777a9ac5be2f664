#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dced/errors.hpp"

namespace dced {

// (batch, channels, rows, cols) of a dense NCHW tensor. All dims >= 1.
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  void validate() const {
    if (n < 1 || c < 1 || h < 1 || w < 1) {
      throw ShapeError("invalid shape " + str() + ": all dimensions must be >= 1");
    }
  }
};

// Dense 4-D float32 tensor, row-major (n, c, h, w). The currency of all
// network math. Immutable-after-construction by convention: layers return
// fresh tensors instead of writing through shared ones.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, float value = 0.0f) : shape_(shape) {
    shape.validate();
    data_.assign(shape.count(), value);
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  std::size_t offset(int n, int c, int h, int w) const {
    assert(n >= 0 && n < shape_.n && c >= 0 && c < shape_.c);
    assert(h >= 0 && h < shape_.h && w >= 0 && w < shape_.w);
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](float v) { return std::isfinite(v); });
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Recovers (n,c,h,w) from a flat row-major offset.
inline void unflatten(const Shape& s, std::size_t off, int& n, int& c, int& h, int& w) {
  w = static_cast<int>(off % s.w);
  off /= s.w;
  h = static_cast<int>(off % s.h);
  off /= s.h;
  c = static_cast<int>(off % s.c);
  n = static_cast<int>(off / s.c);
}

inline Tensor tensor_filled(Shape shape, float value) {
  return Tensor(shape, value);
}

// Deterministic 64-bit seedable generator. The raw stream is std::mt19937_64
// (bit-exact across standard libraries); all derived draws (uniform doubles,
// normals via Box-Muller, shuffles via Fisher-Yates) are computed here so the
// whole stream is reproducible from the seed alone.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (sine branch discarded).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) { return gen_() % bound; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

inline Tensor randn(Rng& rng, Shape shape, float std_dev) {
  if (!(std_dev > 0.0f)) {
    throw std::invalid_argument("randn: std must be > 0");
  }
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<float>(rng.normal() * std_dev);
  }
  return t;
}

// Concatenates along the channel axis; channels of `a` precede channels of `b`.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + sa.str() + " vs " + sb.str());
  }
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t plane = static_cast<std::size_t>(sa.h) * sa.w;
  for (int n = 0; n < sa.n; ++n) {
    float* dst = out.data() + static_cast<std::size_t>(n) * (sa.c + sb.c) * plane;
    const float* pa = a.data() + static_cast<std::size_t>(n) * sa.c * plane;
    const float* pb = b.data() + static_cast<std::size_t>(n) * sb.c * plane;
    std::copy(pa, pa + sa.c * plane, dst);
    std::copy(pb, pb + sb.c * plane, dst + sa.c * plane);
  }
  return out;
}

// Channels [c_begin, c_end) as a fresh tensor.
inline Tensor slice_channels(const Tensor& t, int c_begin, int c_end) {
  const Shape& s = t.shape();
  if (c_begin < 0 || c_end > s.c || c_begin >= c_end) {
    throw ShapeError("slice_channels: bad range [" + std::to_string(c_begin) + "," +
                     std::to_string(c_end) + ") for " + s.str());
  }
  Tensor out(Shape{s.n, c_end - c_begin, s.h, s.w});
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    const float* src = t.data() + (static_cast<std::size_t>(n) * s.c + c_begin) * plane;
    float* dst = out.data() + static_cast<std::size_t>(n) * (c_end - c_begin) * plane;
    std::copy(src, src + static_cast<std::size_t>(c_end - c_begin) * plane, dst);
  }
  return out;
}

}  // namespace dced
