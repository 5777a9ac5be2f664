#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dced/errors.hpp"
#include "dced/tensor.hpp"

namespace dced {

enum class Mode { Training, Inference };

enum class PoolMode { Average, Max };

// 3x3 kernel bank, cross-correlation convention (no kernel flip).
// weights laid out (c_out, c_in, 3, 3); one bias per output channel.
struct ConvParams {
  Tensor weights;
  std::vector<float> bias;

  int out_channels() const { return weights.shape().n; }
  int in_channels() const { return weights.shape().c; }

  // He initialization: zero-mean normal with std sqrt(2 / fan_in).
  static ConvParams create(int c_out, int c_in, Rng& rng) {
    if (c_out < 1 || c_in < 1) {
      throw ShapeError("ConvParams: channel counts must be >= 1");
    }
    ConvParams p;
    const float std_dev = std::sqrt(2.0f / (static_cast<float>(c_in) * 9.0f));
    p.weights = randn(rng, Shape{c_out, c_in, 3, 3}, std_dev);
    p.bias.assign(c_out, 0.0f);
    return p;
  }

  void check() const {
    if (weights.shape().h != 3 || weights.shape().w != 3) {
      throw ShapeError("ConvParams: kernel must be 3x3, got " + weights.shape().str());
    }
    if (static_cast<int>(bias.size()) != weights.shape().n) {
      throw ShapeError("ConvParams: bias length != c_out");
    }
  }
};

struct ConvGrads {
  Tensor weights;
  std::vector<float> bias;
};

struct BatchNormParams {
  std::vector<float> gamma, beta;
  std::vector<float> running_mean, running_var;
  float momentum = 0.9f;
  float epsilon = 1e-5f;

  int channels() const { return static_cast<int>(gamma.size()); }

  static BatchNormParams create(int c, float momentum = 0.9f, float epsilon = 1e-5f) {
    BatchNormParams p;
    p.gamma.assign(c, 1.0f);
    p.beta.assign(c, 0.0f);
    p.running_mean.assign(c, 0.0f);
    p.running_var.assign(c, 1.0f);
    p.momentum = momentum;
    p.epsilon = epsilon;
    return p;
  }
};

struct BatchNormGrads {
  std::vector<float> gamma, beta;
};

struct DropoutSpec {
  float rate = 0.0f;  // in [0, 1)
};

namespace detail {

struct CacheBase {
  bool consumed = false;
  void consume(const char* what) {
    if (consumed) {
      throw std::logic_error(std::string(what) + ": cache consumed twice");
    }
    consumed = true;
  }
};

}  // namespace detail

struct ConvCache : detail::CacheBase {
  Tensor input;
};

struct BatchNormCache : detail::CacheBase {
  Tensor input;
  Mode mode = Mode::Training;
  std::vector<double> mean, inv_std;  // batch stats (training) or running (inference)
};

struct PoolCache : detail::CacheBase {
  Shape in_shape;
  PoolMode mode = PoolMode::Average;
  std::vector<std::uint32_t> argmax;  // flat input offsets, max mode only
};

struct DropoutCache : detail::CacheBase {
  std::vector<float> scale;  // per-element multiplier; empty means identity
};

struct ReluCache : detail::CacheBase {
  Tensor input;
};

struct SigmoidCache : detail::CacheBase {
  Tensor output;
};

// --- convolution -----------------------------------------------------------

// 3x3, stride 1, zero padding 1: output spatial size equals input.
inline Tensor conv2d(const Tensor& input, const ConvParams& params, ConvCache* cache = nullptr) {
  params.check();
  const Shape& s = input.shape();
  if (s.c != params.in_channels()) {
    throw ShapeError("conv2d: input channels " + std::to_string(s.c) + " != kernel c_in " +
                     std::to_string(params.in_channels()));
  }
  const int co = params.out_channels();
  Tensor out(Shape{s.n, co, s.h, s.w});
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  std::vector<double> acc(plane);
  for (int n = 0; n < s.n; ++n) {
    for (int oc = 0; oc < co; ++oc) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(params.bias[oc]));
      for (int ic = 0; ic < s.c; ++ic) {
        const float* in_plane = input.data() + (static_cast<std::size_t>(n) * s.c + ic) * plane;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = params.weights.at(oc, ic, ky, kx);
            if (wv == 0.0) continue;
            const int y0 = std::max(0, 1 - ky), y1 = std::min(s.h, s.h + 1 - ky);
            const int x0 = std::max(0, 1 - kx), x1 = std::min(s.w, s.w + 1 - kx);
            for (int y = y0; y < y1; ++y) {
              const float* in_row = in_plane + static_cast<std::size_t>(y + ky - 1) * s.w;
              double* acc_row = acc.data() + static_cast<std::size_t>(y) * s.w;
              for (int x = x0; x < x1; ++x) {
                acc_row[x] += wv * in_row[x + kx - 1];
              }
            }
          }
        }
      }
      float* out_plane = out.data() + (static_cast<std::size_t>(n) * co + oc) * plane;
      for (std::size_t i = 0; i < plane; ++i) out_plane[i] = static_cast<float>(acc[i]);
    }
  }
  if (cache) {
    cache->input = input;
    cache->consumed = false;
  }
  assert(out.all_finite() || !input.all_finite());
  return out;
}

struct ConvBackward {
  Tensor grad_input;
  ConvGrads grads;
};

inline ConvBackward conv2d_backward(ConvCache& cache, const Tensor& grad_out,
                                    const ConvParams& params) {
  cache.consume("conv2d_backward");
  const Shape& s = cache.input.shape();
  const int co = params.out_channels();
  if (grad_out.shape() != Shape{s.n, co, s.h, s.w}) {
    throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape().str() +
                     " != forward output shape");
  }
  ConvBackward r;
  r.grad_input = Tensor(s);
  r.grads.weights = Tensor(params.weights.shape());
  r.grads.bias.assign(co, 0.0f);

  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  std::vector<double> wacc(params.weights.size(), 0.0);
  std::vector<double> bacc(co, 0.0);
  std::vector<double> iacc(plane);

  for (int n = 0; n < s.n; ++n) {
    for (int oc = 0; oc < co; ++oc) {
      const float* g_plane = grad_out.data() + (static_cast<std::size_t>(n) * co + oc) * plane;
      for (std::size_t i = 0; i < plane; ++i) bacc[oc] += g_plane[i];
      for (int ic = 0; ic < s.c; ++ic) {
        const float* in_plane =
            cache.input.data() + (static_cast<std::size_t>(n) * s.c + ic) * plane;
        double* w_block = wacc.data() + params.weights.offset(oc, ic, 0, 0);
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int y0 = std::max(0, 1 - ky), y1 = std::min(s.h, s.h + 1 - ky);
            const int x0 = std::max(0, 1 - kx), x1 = std::min(s.w, s.w + 1 - kx);
            double sum = 0.0;
            for (int y = y0; y < y1; ++y) {
              const float* in_row = in_plane + static_cast<std::size_t>(y + ky - 1) * s.w;
              const float* g_row = g_plane + static_cast<std::size_t>(y) * s.w;
              for (int x = x0; x < x1; ++x) {
                sum += static_cast<double>(g_row[x]) * in_row[x + kx - 1];
              }
            }
            w_block[ky * 3 + kx] += sum;
          }
        }
      }
    }
    for (int ic = 0; ic < s.c; ++ic) {
      std::fill(iacc.begin(), iacc.end(), 0.0);
      for (int oc = 0; oc < co; ++oc) {
        const float* g_plane = grad_out.data() + (static_cast<std::size_t>(n) * co + oc) * plane;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = params.weights.at(oc, ic, ky, kx);
            if (wv == 0.0) continue;
            const int y0 = std::max(0, 1 - ky), y1 = std::min(s.h, s.h + 1 - ky);
            const int x0 = std::max(0, 1 - kx), x1 = std::min(s.w, s.w + 1 - kx);
            for (int y = y0; y < y1; ++y) {
              const float* g_row = g_plane + static_cast<std::size_t>(y) * s.w;
              double* i_row = iacc.data() + static_cast<std::size_t>(y + ky - 1) * s.w;
              for (int x = x0; x < x1; ++x) {
                i_row[x + kx - 1] += wv * g_row[x];
              }
            }
          }
        }
      }
      float* gi_plane = r.grad_input.data() + (static_cast<std::size_t>(n) * s.c + ic) * plane;
      for (std::size_t i = 0; i < plane; ++i) gi_plane[i] = static_cast<float>(iacc[i]);
    }
  }
  for (std::size_t i = 0; i < wacc.size(); ++i) {
    r.grads.weights[i] = static_cast<float>(wacc[i]);
  }
  for (int oc = 0; oc < co; ++oc) r.grads.bias[oc] = static_cast<float>(bacc[oc]);
  return r;
}

// --- transpose convolution --------------------------------------------------

// Stride-2 transpose of the 3x3/pad-1 convolution: exact 2x upsampling.
// Scatter form: out[2y+ky-1, 2x+kx-1] += in[y, x] * w[oc, ic, ky, kx].
inline Tensor transpose_conv2d(const Tensor& input, const ConvParams& params,
                               ConvCache* cache = nullptr) {
  params.check();
  const Shape& s = input.shape();
  if (s.c != params.in_channels()) {
    throw ShapeError("transpose_conv2d: input channels " + std::to_string(s.c) +
                     " != kernel c_in " + std::to_string(params.in_channels()));
  }
  const int co = params.out_channels();
  const int oh = 2 * s.h, ow = 2 * s.w;
  Tensor out(Shape{s.n, co, oh, ow});
  const std::size_t in_plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  std::vector<double> acc(out_plane);
  for (int n = 0; n < s.n; ++n) {
    for (int oc = 0; oc < co; ++oc) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(params.bias[oc]));
      for (int ic = 0; ic < s.c; ++ic) {
        const float* in_p = input.data() + (static_cast<std::size_t>(n) * s.c + ic) * in_plane;
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = params.weights.at(oc, ic, ky, kx);
            if (wv == 0.0) continue;
            for (int y = 0; y < s.h; ++y) {
              const int ty = 2 * y + ky - 1;
              if (ty < 0 || ty >= oh) continue;
              const float* in_row = in_p + static_cast<std::size_t>(y) * s.w;
              double* acc_row = acc.data() + static_cast<std::size_t>(ty) * ow;
              for (int x = 0; x < s.w; ++x) {
                const int tx = 2 * x + kx - 1;
                if (tx < 0 || tx >= ow) continue;
                acc_row[tx] += wv * in_row[x];
              }
            }
          }
        }
      }
      float* out_p = out.data() + (static_cast<std::size_t>(n) * co + oc) * out_plane;
      for (std::size_t i = 0; i < out_plane; ++i) out_p[i] = static_cast<float>(acc[i]);
    }
  }
  if (cache) {
    cache->input = input;
    cache->consumed = false;
  }
  assert(out.all_finite() || !input.all_finite());
  return out;
}

inline ConvBackward transpose_conv2d_backward(ConvCache& cache, const Tensor& grad_out,
                                              const ConvParams& params) {
  cache.consume("transpose_conv2d_backward");
  const Shape& s = cache.input.shape();
  const int co = params.out_channels();
  const int oh = 2 * s.h, ow = 2 * s.w;
  if (grad_out.shape() != Shape{s.n, co, oh, ow}) {
    throw ShapeError("transpose_conv2d_backward: grad_out shape " + grad_out.shape().str() +
                     " != forward output shape");
  }
  ConvBackward r;
  r.grad_input = Tensor(s);
  r.grads.weights = Tensor(params.weights.shape());
  r.grads.bias.assign(co, 0.0f);

  const std::size_t in_plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  std::vector<double> wacc(params.weights.size(), 0.0);
  std::vector<double> bacc(co, 0.0);
  std::vector<double> iacc(in_plane);

  for (int n = 0; n < s.n; ++n) {
    for (int oc = 0; oc < co; ++oc) {
      const float* g_p = grad_out.data() + (static_cast<std::size_t>(n) * co + oc) * out_plane;
      for (std::size_t i = 0; i < out_plane; ++i) bacc[oc] += g_p[i];
    }
    for (int ic = 0; ic < s.c; ++ic) {
      const float* in_p = cache.input.data() + (static_cast<std::size_t>(n) * s.c + ic) * in_plane;
      std::fill(iacc.begin(), iacc.end(), 0.0);
      for (int oc = 0; oc < co; ++oc) {
        const float* g_p = grad_out.data() + (static_cast<std::size_t>(n) * co + oc) * out_plane;
        double* w_block = wacc.data() + params.weights.offset(oc, ic, 0, 0);
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = params.weights.at(oc, ic, ky, kx);
            double wsum = 0.0;
            for (int y = 0; y < s.h; ++y) {
              const int ty = 2 * y + ky - 1;
              if (ty < 0 || ty >= oh) continue;
              const float* in_row = in_p + static_cast<std::size_t>(y) * s.w;
              const float* g_row = g_p + static_cast<std::size_t>(ty) * ow;
              double* i_row = iacc.data() + static_cast<std::size_t>(y) * s.w;
              for (int x = 0; x < s.w; ++x) {
                const int tx = 2 * x + kx - 1;
                if (tx < 0 || tx >= ow) continue;
                const double g = g_row[tx];
                wsum += g * in_row[x];
                i_row[x] += wv * g;
              }
            }
            w_block[ky * 3 + kx] += wsum;
          }
        }
      }
      float* gi_p = r.grad_input.data() + (static_cast<std::size_t>(n) * s.c + ic) * in_plane;
      for (std::size_t i = 0; i < in_plane; ++i) gi_p[i] = static_cast<float>(iacc[i]);
    }
  }
  for (std::size_t i = 0; i < wacc.size(); ++i) {
    r.grads.weights[i] = static_cast<float>(wacc[i]);
  }
  for (int oc = 0; oc < co; ++oc) r.grads.bias[oc] = static_cast<float>(bacc[oc]);
  return r;
}

// --- batch normalization ----------------------------------------------------

// Training mode normalizes by per-channel batch statistics (biased variance)
// and folds them into the running estimates; inference mode uses the running
// estimates only. Training mutates params' running stats.
inline Tensor batchnorm(const Tensor& input, BatchNormParams& params, Mode mode,
                        BatchNormCache* cache = nullptr) {
  const Shape& s = input.shape();
  if (s.c != params.channels()) {
    throw ShapeError("batchnorm: input channels " + std::to_string(s.c) + " != params length " +
                     std::to_string(params.channels()));
  }
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const double m = static_cast<double>(s.n) * plane;
  Tensor out(s);
  std::vector<double> mean(s.c), inv_std(s.c);

  for (int c = 0; c < s.c; ++c) {
    double mu, var;
    if (mode == Mode::Training) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* p = input.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum += p[i];
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      mu = sum / m;
      var = std::max(0.0, sq / m - mu * mu);
      params.running_mean[c] = static_cast<float>(params.momentum * params.running_mean[c] +
                                                  (1.0 - params.momentum) * mu);
      params.running_var[c] = static_cast<float>(params.momentum * params.running_var[c] +
                                                 (1.0 - params.momentum) * var);
    } else {
      mu = params.running_mean[c];
      var = params.running_var[c];
    }
    mean[c] = mu;
    inv_std[c] = 1.0 / std::sqrt(var + params.epsilon);
    const double g = params.gamma[c], b = params.beta[c];
    for (int n = 0; n < s.n; ++n) {
      const float* p = input.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      float* q = out.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        q[i] = static_cast<float>(g * ((p[i] - mu) * inv_std[c]) + b);
      }
    }
  }
  if (cache) {
    cache->input = input;
    cache->mode = mode;
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    cache->consumed = false;
  }
  assert(out.all_finite() || !input.all_finite());
  return out;
}

struct BatchNormBackward {
  Tensor grad_input;
  BatchNormGrads grads;
};

inline BatchNormBackward batchnorm_backward(BatchNormCache& cache, const Tensor& grad_out,
                                            const BatchNormParams& params) {
  cache.consume("batchnorm_backward");
  const Shape& s = cache.input.shape();
  if (grad_out.shape() != s) {
    throw ShapeError("batchnorm_backward: grad_out shape mismatch");
  }
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const double m = static_cast<double>(s.n) * plane;
  BatchNormBackward r;
  r.grad_input = Tensor(s);
  r.grads.gamma.assign(s.c, 0.0f);
  r.grads.beta.assign(s.c, 0.0f);

  for (int c = 0; c < s.c; ++c) {
    const double mu = cache.mean[c], is = cache.inv_std[c];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* x = cache.input.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      const float* dy = grad_out.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * ((x[i] - mu) * is);
      }
    }
    r.grads.beta[c] = static_cast<float>(sum_dy);
    r.grads.gamma[c] = static_cast<float>(sum_dy_xhat);
    const double g = params.gamma[c];
    for (int n = 0; n < s.n; ++n) {
      const float* x = cache.input.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      const float* dy = grad_out.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      float* dx = r.grad_input.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      if (cache.mode == Mode::Training) {
        for (std::size_t i = 0; i < plane; ++i) {
          const double xhat = (x[i] - mu) * is;
          dx[i] = static_cast<float>(g * is / m * (m * dy[i] - sum_dy - xhat * sum_dy_xhat));
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) {
          dx[i] = static_cast<float>(g * is * dy[i]);
        }
      }
    }
  }
  return r;
}

// --- 2x2 pooling -------------------------------------------------------------

inline Tensor pool2x2(const Tensor& input, PoolMode mode, PoolCache* cache = nullptr) {
  const Shape& s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("pool2x2: spatial dims must be even, got " + s.str());
  }
  Tensor out(Shape{s.n, s.c, s.h / 2, s.w / 2});
  if (cache) {
    cache->in_shape = s;
    cache->mode = mode;
    cache->argmax.clear();
    cache->consumed = false;
    if (mode == PoolMode::Max) cache->argmax.resize(out.size());
  }
  std::size_t oi = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; y += 2) {
        for (int x = 0; x < s.w; x += 2) {
          const std::size_t i00 = input.offset(n, c, y, x);
          const std::size_t i01 = i00 + 1;
          const std::size_t i10 = i00 + s.w;
          const std::size_t i11 = i10 + 1;
          if (mode == PoolMode::Average) {
            out[oi] = static_cast<float>(
                (static_cast<double>(input[i00]) + input[i01] + input[i10] + input[i11]) / 4.0);
          } else {
            std::size_t best = i00;
            if (input[i01] > input[best]) best = i01;
            if (input[i10] > input[best]) best = i10;
            if (input[i11] > input[best]) best = i11;
            out[oi] = input[best];
            if (cache) cache->argmax[oi] = static_cast<std::uint32_t>(best);
          }
          ++oi;
        }
      }
    }
  }
  return out;
}

inline Tensor pool2x2_backward(PoolCache& cache, const Tensor& grad_out) {
  cache.consume("pool2x2_backward");
  const Shape& s = cache.in_shape;
  if (grad_out.shape() != Shape{s.n, s.c, s.h / 2, s.w / 2}) {
    throw ShapeError("pool2x2_backward: grad_out shape mismatch");
  }
  Tensor grad_in(s, 0.0f);
  std::size_t oi = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; y += 2) {
        for (int x = 0; x < s.w; x += 2) {
          const float g = grad_out[oi];
          if (cache.mode == PoolMode::Average) {
            const std::size_t i00 = grad_in.offset(n, c, y, x);
            grad_in[i00] += g * 0.25f;
            grad_in[i00 + 1] += g * 0.25f;
            grad_in[i00 + s.w] += g * 0.25f;
            grad_in[i00 + s.w + 1] += g * 0.25f;
          } else {
            grad_in[cache.argmax[oi]] += g;
          }
          ++oi;
        }
      }
    }
  }
  return grad_in;
}

// --- dropout ------------------------------------------------------------------

// Inverted dropout: survivors are scaled by 1/(1-rate) so inference is the
// identity map.
inline Tensor dropout(const Tensor& input, const DropoutSpec& spec, Mode mode, Rng& rng,
                      DropoutCache* cache = nullptr) {
  if (!(spec.rate >= 0.0f && spec.rate < 1.0f)) {
    throw std::invalid_argument("dropout: rate must be in [0,1)");
  }
  if (cache) {
    cache->scale.clear();
    cache->consumed = false;
  }
  if (mode == Mode::Inference || spec.rate == 0.0f) {
    return input;
  }
  Tensor out(input.shape());
  const float keep_scale = 1.0f / (1.0f - spec.rate);
  if (cache) cache->scale.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const float m = rng.uniform() < spec.rate ? 0.0f : keep_scale;
    out[i] = input[i] * m;
    if (cache) cache->scale[i] = m;
  }
  return out;
}

inline Tensor dropout_backward(DropoutCache& cache, const Tensor& grad_out) {
  cache.consume("dropout_backward");
  if (cache.scale.empty()) {
    return grad_out;  // identity forward
  }
  if (cache.scale.size() != grad_out.size()) {
    throw ShapeError("dropout_backward: grad_out size mismatch");
  }
  Tensor grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    grad_in[i] = grad_out[i] * cache.scale[i];
  }
  return grad_in;
}

// --- activations ---------------------------------------------------------------

inline Tensor relu(const Tensor& input, ReluCache* cache = nullptr) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0.0f ? input[i] : 0.0f;
  }
  if (cache) {
    cache->input = input;
    cache->consumed = false;
  }
  return out;
}

inline Tensor relu_backward(ReluCache& cache, const Tensor& grad_out) {
  cache.consume("relu_backward");
  if (grad_out.shape() != cache.input.shape()) {
    throw ShapeError("relu_backward: grad_out shape mismatch");
  }
  Tensor grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    grad_in[i] = cache.input[i] > 0.0f ? grad_out[i] : 0.0f;
  }
  return grad_in;
}

// Logistic squashing for the decoder output; values land strictly in (0,1).
inline Tensor sigmoid(const Tensor& input, SigmoidCache* cache = nullptr) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(input[i]))));
  }
  if (cache) {
    cache->output = out;
    cache->consumed = false;
  }
  return out;
}

inline Tensor sigmoid_backward(SigmoidCache& cache, const Tensor& grad_out) {
  cache.consume("sigmoid_backward");
  if (grad_out.shape() != cache.output.shape()) {
    throw ShapeError("sigmoid_backward: grad_out shape mismatch");
  }
  Tensor grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const double y = cache.output[i];
    grad_in[i] = static_cast<float>(grad_out[i] * y * (1.0 - y));
  }
  return grad_in;
}

}  // namespace dced
