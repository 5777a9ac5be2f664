#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dced/image.hpp"
#include "dced/net.hpp"

namespace dced {

// Checkpoint layout, version 1. All integers and float bit patterns are
// stored least-significant-byte-first regardless of host, so checkpoint bytes
// are portable and determinism checks are cross-machine meaningful.
//
//   "DCED"  magic
//   u32     format version (1)
//   u16+s   rng algorithm name
//   u64     config hash
//   u32     base_size        f32 width_multiplier
//   u32     level count      f32 final_threshold
//   f32     bn_momentum      f32 bn_epsilon
//   u64     init seed
//   f32[levels] thresholds
//   per level: u32 input_channels, then parameter blocks in fixed order,
//   each block = u32 kind, u32 ndims, u32 dims[], f32 payload[].
namespace checkpoint_format {
constexpr std::uint32_t kVersion = 1;
enum BlockKind : std::uint32_t {
  ConvWeights = 1,
  ConvBias = 2,
  BnGamma = 3,
  BnBeta = 4,
  BnRunningMean = 5,
  BnRunningVar = 6,
  TconvWeights = 7,
  TconvBias = 8,
};
}  // namespace checkpoint_format

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}
inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct ByteReader {
  const std::string& bytes;
  std::size_t pos = 0;
  std::string context = "header";

  void need(std::size_t n) {
    if (pos + n > bytes.size()) {
      throw CheckpointError("checkpoint truncated in " + context);
    }
  }
  std::uint16_t u16() {
    need(2);
    const auto b = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    pos += 2;
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    need(4);
    const auto b = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    pos += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
};

// Enumerates every parameter/statistics block of a level in the fixed
// checkpoint order. Fn(kind, dims, data pointer, element count).
template <typename Fn>
inline void for_each_level_block(Level& level, Fn&& fn) {
  using namespace checkpoint_format;
  const auto vec_block = [&fn](BlockKind kind, std::vector<float>& v) {
    fn(static_cast<std::uint32_t>(kind),
       std::vector<std::uint32_t>{static_cast<std::uint32_t>(v.size())}, v.data(), v.size());
  };
  const auto conv_block = [&fn](BlockKind kind, Tensor& t) {
    const Shape& s = t.shape();
    fn(static_cast<std::uint32_t>(kind),
       std::vector<std::uint32_t>{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                  static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
       t.data(), t.size());
  };
  for (EncoderPool& pool : level.encoder) {
    conv_block(ConvWeights, pool.conv.weights);
    vec_block(ConvBias, pool.conv.bias);
    vec_block(BnGamma, pool.norm.gamma);
    vec_block(BnBeta, pool.norm.beta);
    vec_block(BnRunningMean, pool.norm.running_mean);
    vec_block(BnRunningVar, pool.norm.running_var);
  }
  for (DecoderPool& pool : level.decoder) {
    conv_block(TconvWeights, pool.tconv.weights);
    vec_block(TconvBias, pool.tconv.bias);
    if (pool.has_norm) {
      vec_block(BnGamma, pool.norm.gamma);
      vec_block(BnBeta, pool.norm.beta);
      vec_block(BnRunningMean, pool.norm.running_mean);
      vec_block(BnRunningVar, pool.norm.running_var);
    }
  }
}

}  // namespace detail

inline std::string checkpoint_bytes(const MultiLevelNet& net, std::uint64_t config_hash) {
  std::string out;
  out += "DCED";
  detail::put_u32(out, checkpoint_format::kVersion);
  const std::string algo = Rng::kAlgorithm;
  detail::put_u16(out, static_cast<std::uint16_t>(algo.size()));
  out += algo;
  detail::put_u64(out, config_hash);
  detail::put_u32(out, static_cast<std::uint32_t>(net.config.base_size));
  detail::put_f64(out, net.config.width_multiplier);
  detail::put_u32(out, static_cast<std::uint32_t>(net.levels.size()));
  detail::put_f64(out, net.config.final_threshold);
  detail::put_f32(out, net.config.bn_momentum);
  detail::put_f32(out, net.config.bn_epsilon);
  detail::put_u64(out, net.config.seed);
  for (const Level& level : net.levels) detail::put_f64(out, level.threshold);
  for (const Level& level : net.levels) {
    detail::put_u32(out, static_cast<std::uint32_t>(level.input_channels));
    detail::for_each_level_block(
        const_cast<Level&>(level),
        [&out](std::uint32_t kind, const std::vector<std::uint32_t>& dims, float* data,
               std::size_t count) {
          detail::put_u32(out, kind);
          detail::put_u32(out, static_cast<std::uint32_t>(dims.size()));
          for (std::uint32_t d : dims) detail::put_u32(out, d);
          for (std::size_t i = 0; i < count; ++i) detail::put_f32(out, data[i]);
        });
  }
  return out;
}

inline void save_checkpoint(const MultiLevelNet& net, const std::filesystem::path& path,
                            std::uint64_t config_hash = 0) {
  atomic_write(path, checkpoint_bytes(net, config_hash));
}

struct LoadedCheckpoint {
  MultiLevelNet net;
  std::uint64_t config_hash = 0;
  std::string rng_algorithm;
};

inline LoadedCheckpoint load_checkpoint_bytes(const std::string& bytes,
                                              std::optional<std::uint64_t> expected_hash = {}) {
  detail::ByteReader r{bytes};
  r.need(4);
  if (bytes.compare(0, 4, "DCED") != 0) {
    throw CheckpointError("bad magic bytes (not a DCED checkpoint)");
  }
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != checkpoint_format::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(checkpoint_format::kVersion) + ")");
  }
  LoadedCheckpoint loaded;
  const std::uint16_t algo_len = r.u16();
  r.need(algo_len);
  loaded.rng_algorithm = bytes.substr(r.pos, algo_len);
  r.pos += algo_len;
  loaded.config_hash = r.u64();
  if (expected_hash && *expected_hash != loaded.config_hash) {
    throw CheckpointError("config hash mismatch: checkpoint was trained under a different config");
  }

  NetworkConfig cfg;
  cfg.base_size = static_cast<int>(r.u32());
  cfg.width_multiplier = r.f64();
  cfg.levels = static_cast<int>(r.u32());
  cfg.final_threshold = r.f64();
  cfg.bn_momentum = r.f32();
  cfg.bn_epsilon = r.f32();
  cfg.seed = r.u64();
  cfg.thresholds.clear();
  for (int i = 0; i < cfg.levels; ++i) cfg.thresholds.push_back(r.f64());

  loaded.net = MultiLevelNet::create_empty(cfg);
  for (int li = 0; li < cfg.levels; ++li) {
    Level& level = loaded.net.levels[li];
    r.context = "level " + std::to_string(li + 1) + " header";
    const std::uint32_t in_ch = r.u32();
    if (static_cast<int>(in_ch) != level.input_channels) {
      throw CheckpointError("level " + std::to_string(li + 1) + ": unexpected input channels");
    }
    int block_index = 0;
    detail::for_each_level_block(
        level, [&](std::uint32_t kind, const std::vector<std::uint32_t>& dims, float* data,
                   std::size_t count) {
          ++block_index;
          r.context = "level " + std::to_string(li + 1) + " block " +
                      std::to_string(block_index) + " (kind " + std::to_string(kind) + ")";
          const std::uint32_t file_kind = r.u32();
          if (file_kind != kind) {
            throw CheckpointError(r.context + ": kind mismatch, file has " +
                                  std::to_string(file_kind));
          }
          const std::uint32_t ndims = r.u32();
          if (ndims != dims.size()) throw CheckpointError(r.context + ": rank mismatch");
          for (std::uint32_t expected : dims) {
            if (r.u32() != expected) throw CheckpointError(r.context + ": shape mismatch");
          }
          for (std::size_t i = 0; i < count; ++i) data[i] = r.f32();
        });
  }
  if (r.pos != bytes.size()) {
    throw CheckpointError("trailing bytes after checkpoint body");
  }
  return loaded;
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> expected_hash = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_checkpoint_bytes(buf.str(), expected_hash);
}

}  // namespace dced
