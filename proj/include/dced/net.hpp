#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dced/image.hpp"
#include "dced/layers.hpp"
#include "dced/tensor.hpp"

namespace dced {

// Structural configuration of the multi-level network. The full-scale
// defaults (base 320, full width) shrink to desk scale through base_size and
// width_multiplier; channel targets stay in the 32..512 proportion.
struct NetworkConfig {
  int base_size = 320;  // multiple of 32, >= 32
  int levels = 3;
  std::vector<double> thresholds{0.5, 0.8, 0.95};  // per-level T_o, strictly increasing
  double final_threshold = 0.95;
  double width_multiplier = 1.0;
  std::uint64_t seed = 42;
  float bn_momentum = 0.9f;
  float bn_epsilon = 1e-5f;

  // Post-concat channel totals per encoder pool.
  std::array<int, 5> channel_targets() const {
    constexpr std::array<int, 5> base{32, 64, 128, 256, 512};
    std::array<int, 5> scaled{};
    for (int i = 0; i < 5; ++i) {
      scaled[i] = std::max(1, static_cast<int>(std::llround(base[i] * width_multiplier)));
    }
    return scaled;
  }

  void validate() const {
    if (base_size < 32 || base_size % 32 != 0) {
      throw ShapeError("NetworkConfig: base_size must be a multiple of 32, >= 32");
    }
    if (levels < 1) throw ShapeError("NetworkConfig: at least one level required");
    if (static_cast<int>(thresholds.size()) != levels) {
      throw ShapeError("NetworkConfig: need one threshold per level");
    }
    for (int i = 0; i < levels; ++i) {
      if (!(thresholds[i] > 0.0 && thresholds[i] <= 1.0)) {
        throw ShapeError("NetworkConfig: thresholds must lie in (0,1]");
      }
      if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
        throw ShapeError("NetworkConfig: thresholds must be strictly increasing");
      }
    }
    const auto ch = channel_targets();
    for (int i = 1; i < 5; ++i) {
      if (ch[i] <= ch[i - 1]) {
        throw ShapeError("NetworkConfig: width_multiplier collapses the channel progression");
      }
    }
    if (ch[0] <= 3) {
      throw ShapeError("NetworkConfig: width_multiplier too small for the 3-channel input");
    }
  }
};

// One encoder pool: conv -> batchnorm -> relu -> 2x2 average pool, then the
// average-pooled input is concatenated in front to reach the channel target.
struct EncoderPool {
  ConvParams conv;
  BatchNormParams norm;
  float dropout_rate = 0.0f;
};

// One decoder pool: stride-2 transpose conv -> batchnorm -> relu, then the
// same-size encoder skip is concatenated. The last pool swaps the norm/relu
// for the logistic output squashing and has no skip.
struct DecoderPool {
  ConvParams tconv;
  BatchNormParams norm;
  bool has_norm = true;
  bool has_skip = true;
  float dropout_rate = 0.0f;
};

struct Level {
  int input_channels = 3;
  double threshold = 0.5;  // T_o
  std::array<EncoderPool, 5> encoder;
  std::array<DecoderPool, 5> decoder;

  // rng == nullptr leaves the kernels zeroed (checkpoint loading path).
  static Level create(const NetworkConfig& cfg, int input_channels, double threshold,
                      Rng* rng) {
    const auto ch = cfg.channel_targets();
    if (ch[0] <= input_channels) {
      throw ShapeError("Level: first channel target must exceed the input channel count");
    }
    Level level;
    level.input_channels = input_channels;
    level.threshold = threshold;

    Rng zero_rng(0);
    const auto make_conv = [&](int c_out, int c_in) {
      if (rng) return ConvParams::create(c_out, c_in, *rng);
      ConvParams p = ConvParams::create(c_out, c_in, zero_rng);
      p.weights = Tensor(p.weights.shape(), 0.0f);
      return p;
    };

    int c_in = input_channels;
    for (int i = 0; i < 5; ++i) {
      EncoderPool& pool = level.encoder[i];
      pool.conv = make_conv(ch[i] - c_in, c_in);
      pool.norm = BatchNormParams::create(ch[i] - c_in, cfg.bn_momentum, cfg.bn_epsilon);
      pool.dropout_rate = i >= 3 ? 0.2f : 0.0f;  // last two encoder pools
      c_in = ch[i];
    }
    // Decoder upsampling chain; post-concat totals are 2x the skip channels.
    int dec_in = ch[4];
    for (int i = 0; i < 4; ++i) {
      DecoderPool& pool = level.decoder[i];
      const int up = ch[3 - i];
      pool.tconv = make_conv(up, dec_in);
      pool.norm = BatchNormParams::create(up, cfg.bn_momentum, cfg.bn_epsilon);
      pool.has_norm = true;
      pool.has_skip = true;
      pool.dropout_rate = i <= 1 ? 0.2f : 0.0f;  // initial two decoder pools
      dec_in = 2 * up;
    }
    DecoderPool& last = level.decoder[4];
    last.tconv = make_conv(1, dec_in);
    last.has_norm = false;
    last.has_skip = false;
    last.dropout_rate = 0.0f;
    return level;
  }
};

enum class GateDecision { Advance, Repeat };

// --- forward/backward plumbing -------------------------------------------------

struct EncoderPoolCache {
  ConvCache conv;
  BatchNormCache norm;
  ReluCache relu;
  PoolCache pool_feat, pool_skip;
  DropoutCache dropout;
};

struct DecoderPoolCache {
  ConvCache tconv;
  BatchNormCache norm;
  ReluCache relu;
  SigmoidCache sigmoid;
  DropoutCache dropout;
};

struct LevelCache {
  std::array<EncoderPoolCache, 5> enc;
  std::array<DecoderPoolCache, 5> dec;
};

struct PoolGrads {
  ConvGrads conv;
  BatchNormGrads norm;
};

struct LevelGrads {
  std::array<PoolGrads, 5> encoder, decoder;
};

struct EncoderResult {
  Tensor code;                 // == skips[4]
  std::vector<Tensor> skips;   // post-concat output of each encoder pool
};

namespace detail {

inline void add_into(Tensor& acc, const Tensor& t) {
  if (acc.shape() != t.shape()) throw ShapeError("add_into: shape mismatch");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += t[i];
}

inline Tensor encoder_pool_forward(EncoderPool& pool, const Tensor& x, Mode mode, Rng& rng,
                                   EncoderPoolCache* cache) {
  Tensor feat = conv2d(x, pool.conv, cache ? &cache->conv : nullptr);
  feat = batchnorm(feat, pool.norm, mode, cache ? &cache->norm : nullptr);
  feat = relu(feat, cache ? &cache->relu : nullptr);
  feat = pool2x2(feat, PoolMode::Average, cache ? &cache->pool_feat : nullptr);
  Tensor pooled_in = pool2x2(x, PoolMode::Average, cache ? &cache->pool_skip : nullptr);
  Tensor out = concat_channels(pooled_in, feat);
  return dropout(out, DropoutSpec{pool.dropout_rate}, mode, rng,
                 cache ? &cache->dropout : nullptr);
}

// Returns grad w.r.t. the pool input.
inline Tensor encoder_pool_backward(EncoderPool& pool, EncoderPoolCache& cache,
                                    const Tensor& grad_out, PoolGrads& grads) {
  Tensor g = dropout_backward(cache.dropout, grad_out);
  const int c_in = pool.conv.in_channels();
  Tensor g_skip = slice_channels(g, 0, c_in);
  Tensor g_feat = slice_channels(g, c_in, g.shape().c);
  Tensor gx = pool2x2_backward(cache.pool_skip, g_skip);
  Tensor ga = pool2x2_backward(cache.pool_feat, g_feat);
  ga = relu_backward(cache.relu, ga);
  BatchNormBackward bn = batchnorm_backward(cache.norm, ga, pool.norm);
  ConvBackward cv = conv2d_backward(cache.conv, bn.grad_input, pool.conv);
  add_into(gx, cv.grad_input);
  grads.conv = std::move(cv.grads);
  grads.norm = std::move(bn.grads);
  return gx;
}

inline Tensor decoder_pool_forward(DecoderPool& pool, const Tensor& x, const Tensor* skip,
                                   Mode mode, Rng& rng, DecoderPoolCache* cache) {
  Tensor up = transpose_conv2d(x, pool.tconv, cache ? &cache->tconv : nullptr);
  if (pool.has_norm) {
    up = batchnorm(up, pool.norm, mode, cache ? &cache->norm : nullptr);
    up = relu(up, cache ? &cache->relu : nullptr);
  } else {
    up = sigmoid(up, cache ? &cache->sigmoid : nullptr);
  }
  Tensor out = pool.has_skip && skip ? concat_channels(up, *skip) : std::move(up);
  return dropout(out, DropoutSpec{pool.dropout_rate}, mode, rng,
                 cache ? &cache->dropout : nullptr);
}

// Returns grad w.r.t. the pool input; grad w.r.t. the consumed skip lands in
// *grad_skip when the pool has one.
inline Tensor decoder_pool_backward(DecoderPool& pool, DecoderPoolCache& cache,
                                    const Tensor& grad_out, PoolGrads& grads,
                                    Tensor* grad_skip) {
  Tensor g = dropout_backward(cache.dropout, grad_out);
  Tensor g_up;
  if (pool.has_skip) {
    const int up_c = pool.tconv.out_channels();
    g_up = slice_channels(g, 0, up_c);
    if (grad_skip) *grad_skip = slice_channels(g, up_c, g.shape().c);
  } else {
    g_up = std::move(g);
  }
  if (pool.has_norm) {
    g_up = relu_backward(cache.relu, g_up);
    BatchNormBackward bn = batchnorm_backward(cache.norm, g_up, pool.norm);
    grads.norm = std::move(bn.grads);
    g_up = std::move(bn.grad_input);
  } else {
    g_up = sigmoid_backward(cache.sigmoid, g_up);
  }
  ConvBackward cv = transpose_conv2d_backward(cache.tconv, g_up, pool.tconv);
  grads.conv = std::move(cv.grads);
  return std::move(cv.grad_input);
}

}  // namespace detail

inline EncoderResult encoder_forward(Level& level, const Tensor& input, Mode mode, Rng& rng,
                                     LevelCache* cache = nullptr) {
  const Shape& s = input.shape();
  if (s.c != level.input_channels) {
    throw ShapeError("encoder_forward: expected " + std::to_string(level.input_channels) +
                     " input channels, got " + std::to_string(s.c));
  }
  if (s.h % 32 != 0 || s.w % 32 != 0 || s.h < 32 || s.w < 32) {
    throw ShapeError("encoder_forward: spatial size " + s.str() +
                     " is not divisible by the 5-pool chain");
  }
  EncoderResult r;
  Tensor x = input;
  for (int i = 0; i < 5; ++i) {
    x = detail::encoder_pool_forward(level.encoder[i], x, mode, rng,
                                     cache ? &cache->enc[i] : nullptr);
    r.skips.push_back(x);
  }
  r.code = r.skips.back();
  return r;
}

inline Tensor decoder_forward(Level& level, const Tensor& code,
                              const std::vector<Tensor>& skips, Mode mode, Rng& rng,
                              LevelCache* cache = nullptr) {
  if (skips.size() != 5) throw ShapeError("decoder_forward: expected 5 encoder skips");
  Tensor x = code;
  for (int i = 0; i < 5; ++i) {
    const Tensor* skip = i < 4 ? &skips[3 - i] : nullptr;
    x = detail::decoder_pool_forward(level.decoder[i], x, skip, mode, rng,
                                     cache ? &cache->dec[i] : nullptr);
  }
  return x;
}

inline Tensor level_forward(Level& level, const Tensor& input, Mode mode, Rng& rng,
                            LevelCache* cache = nullptr) {
  EncoderResult enc = encoder_forward(level, input, mode, rng, cache);
  return decoder_forward(level, enc.code, enc.skips, mode, rng, cache);
}

// Inference is const: dropout is inactive and batchnorm reads running stats
// without updating them.
inline Tensor level_infer(const Level& level, const Tensor& input) {
  Rng unused(0);
  return level_forward(const_cast<Level&>(level), input, Mode::Inference, unused, nullptr);
}

// Backpropagates the output gradient through one level, accumulating both the
// decoder skip gradients and the encoder chain.
inline LevelGrads level_backward(Level& level, LevelCache& cache, const Tensor& grad_out) {
  LevelGrads grads;
  std::array<Tensor, 4> skip_grads;  // for encoder pools 1..4 (skips[0..3])
  Tensor g = grad_out;
  for (int i = 4; i >= 0; --i) {
    Tensor g_skip;
    g = detail::decoder_pool_backward(level.decoder[i], cache.dec[i], g, grads.decoder[i],
                                      i < 4 ? &g_skip : nullptr);
    if (i < 4) skip_grads[3 - i] = std::move(g_skip);
  }
  for (int i = 4; i >= 0; --i) {
    if (i < 4) detail::add_into(g, skip_grads[i]);
    g = detail::encoder_pool_backward(level.encoder[i], cache.enc[i], g, grads.encoder[i]);
  }
  return grads;
}

// --- the comparison gate ---------------------------------------------------------

// C_o: pixel accuracy of the 0.5-binarized prediction against the ground
// truth, averaged over the batch. Both tensors are (n, 1, h, w); truth holds
// 0/1 mask values.
inline double compute_gate(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError("compute_gate: shape mismatch " + pred.shape().str() + " vs " +
                     truth.shape().str());
  }
  const Shape& s = pred.shape();
  const std::size_t per_item = static_cast<std::size_t>(s.c) * s.h * s.w;
  double acc_sum = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const float* p = pred.data() + n * per_item;
    const float* t = truth.data() + n * per_item;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < per_item; ++i) {
      const int label = p[i] >= 0.5f ? 1 : 0;
      if (label == static_cast<int>(t[i])) ++correct;
    }
    acc_sum += static_cast<double>(correct) / static_cast<double>(per_item);
  }
  return acc_sum / s.n;
}

// Advance exactly when C_o >= T_o (boundary advances).
inline GateDecision gate_decision(double co, double to) {
  if (!(co >= 0.0 && co <= 1.0 && to >= 0.0 && to <= 1.0)) {
    throw std::invalid_argument("gate_decision: C_o and T_o must lie in [0,1]");
  }
  return co >= to ? GateDecision::Advance : GateDecision::Repeat;
}

// --- multi-level composition -------------------------------------------------------

struct MultiLevelNet {
  NetworkConfig config;
  std::vector<Level> levels;

  static MultiLevelNet create(const NetworkConfig& cfg) {
    cfg.validate();
    MultiLevelNet net;
    net.config = cfg;
    Rng rng(cfg.seed);
    for (int i = 0; i < cfg.levels; ++i) {
      net.levels.push_back(Level::create(cfg, i == 0 ? 3 : 1, cfg.thresholds[i], &rng));
    }
    return net;
  }

  static MultiLevelNet create_empty(const NetworkConfig& cfg) {
    cfg.validate();
    MultiLevelNet net;
    net.config = cfg;
    for (int i = 0; i < cfg.levels; ++i) {
      net.levels.push_back(Level::create(cfg, i == 0 ? 3 : 1, cfg.thresholds[i], nullptr));
    }
    return net;
  }
};

// Straight L-level inference pipeline: level n's probability map is level
// n+1's single-channel input. Ground truth is never consulted here; the
// C_o/T_o gate only steers training.
inline Tensor multi_level_forward(const MultiLevelNet& net, const Tensor& image) {
  if (net.levels.empty()) throw ShapeError("multi_level_forward: net has no levels");
  if (image.shape().h != net.config.base_size || image.shape().w != net.config.base_size) {
    throw ShapeError("multi_level_forward: input " + image.shape().str() +
                     " does not match base size " + std::to_string(net.config.base_size));
  }
  Tensor x = level_infer(net.levels.front(), image);
  for (std::size_t i = 1; i < net.levels.size(); ++i) {
    x = level_infer(net.levels[i], x);
  }
  return x;
}

// --- parameter traversal (fixed order shared by the optimizer and checkpoint) -----

struct ParamView {
  float* data;
  std::size_t size;
};

inline std::vector<ParamView> level_param_views(Level& level) {
  std::vector<ParamView> views;
  const auto add = [&views](std::vector<float>& v) {
    views.push_back({v.data(), v.size()});
  };
  for (EncoderPool& pool : level.encoder) {
    views.push_back({pool.conv.weights.data(), pool.conv.weights.size()});
    add(pool.conv.bias);
    add(pool.norm.gamma);
    add(pool.norm.beta);
  }
  for (DecoderPool& pool : level.decoder) {
    views.push_back({pool.tconv.weights.data(), pool.tconv.weights.size()});
    add(pool.tconv.bias);
    if (pool.has_norm) {
      add(pool.norm.gamma);
      add(pool.norm.beta);
    }
  }
  return views;
}

inline std::vector<ParamView> level_grad_views(const Level& level, LevelGrads& grads) {
  std::vector<ParamView> views;
  const auto add = [&views](std::vector<float>& v) {
    views.push_back({v.data(), v.size()});
  };
  for (int i = 0; i < 5; ++i) {
    PoolGrads& g = grads.encoder[i];
    views.push_back({g.conv.weights.data(), g.conv.weights.size()});
    add(g.conv.bias);
    add(g.norm.gamma);
    add(g.norm.beta);
  }
  for (int i = 0; i < 5; ++i) {
    PoolGrads& g = grads.decoder[i];
    views.push_back({g.conv.weights.data(), g.conv.weights.size()});
    add(g.conv.bias);
    if (level.decoder[i].has_norm) {
      add(g.norm.gamma);
      add(g.norm.beta);
    }
  }
  return views;
}

// --- mask/tensor bridges --------------------------------------------------------

inline Tensor mask_to_tensor(const Mask& mask) {
  Tensor t(Shape{1, 1, mask.height, mask.width});
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    t[i] = static_cast<float>(mask.values[i]);
  }
  return t;
}

// Binarizes a probability map at 0.5: >= 0.5 is background (1), else ROI (0).
inline Mask prob_to_mask(const Tensor& prob, int batch_index = 0) {
  const Shape& s = prob.shape();
  if (s.c != 1) throw ShapeError("prob_to_mask: expected a single-channel map");
  Mask m = Mask::create(s.w, s.h);
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const float* p = prob.data() + batch_index * plane;
  for (std::size_t i = 0; i < plane; ++i) {
    m.values[i] = p[i] >= 0.5f ? 1 : 0;
  }
  return m;
}

}  // namespace dced
