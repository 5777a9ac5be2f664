#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dced/net.hpp"
#include "dced/preprocess.hpp"
#include "dced/synthgen.hpp"
#include "dced/train.hpp"

namespace dced {

// Everything the CLI reads from the plain-text config file. Synthgen class
// weights stay on the tag preset unless the config overrides any of them.
struct AppConfig {
  NetworkConfig network;
  TrainConfig train;
  PreprocessConfig preprocess;
  SceneConfig synthgen;
  bool synthgen_weights_overridden = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw ConfigError("trailing characters in number '" + v + "'", line);
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    throw ConfigError("expected a number, got '" + v + "'", line);
  }
}

inline long long parse_int(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw ConfigError("trailing characters in integer '" + v + "'", line);
    return i;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    throw ConfigError("expected an integer, got '" + v + "'", line);
  }
}

inline bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true/false, got '" + v + "'", line);
}

inline std::vector<double> parse_double_list(const std::string& v, int line) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_double(trim(item), line));
  }
  if (out.empty()) throw ConfigError("expected a comma-separated list", line);
  return out;
}

}  // namespace detail

// key = value per line, '#' comments, [section] headers. Unknown sections or
// keys are rejected with the offending line number.
inline AppConfig parse_config_text(const std::string& text) {
  AppConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header", line_no);
      section = line.substr(1, line.size() - 2);
      if (section != "network" && section != "train" && section != "preprocess" &&
          section != "synthgen") {
        throw ConfigError("unknown section [" + section + "]", line_no);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line_no);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("key outside any [section]", line_no);

    if (section == "network") {
      if (key == "base_size") cfg.network.base_size = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "levels") cfg.network.levels = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "thresholds") cfg.network.thresholds = detail::parse_double_list(value, line_no);
      else if (key == "final_threshold") cfg.network.final_threshold = detail::parse_double(value, line_no);
      else if (key == "width_multiplier") cfg.network.width_multiplier = detail::parse_double(value, line_no);
      else if (key == "seed") cfg.network.seed = static_cast<std::uint64_t>(detail::parse_int(value, line_no));
      else if (key == "bn_momentum") cfg.network.bn_momentum = static_cast<float>(detail::parse_double(value, line_no));
      else if (key == "bn_epsilon") cfg.network.bn_epsilon = static_cast<float>(detail::parse_double(value, line_no));
      else throw ConfigError("unknown key '" + key + "' in [network]", line_no);
    } else if (section == "train") {
      if (key == "learning_rate") cfg.train.learning_rate = detail::parse_double(value, line_no);
      else if (key == "minibatch") cfg.train.minibatch = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "max_epochs_per_level") cfg.train.max_epochs_per_level = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "iterations_per_epoch") cfg.train.iterations_per_epoch = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "max_global_rounds") cfg.train.max_global_rounds = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(detail::parse_int(value, line_no));
      else if (key == "split_fraction") cfg.train.split_fraction = detail::parse_double(value, line_no);
      else if (key == "folds") cfg.train.folds = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "sample_with_replacement") cfg.train.sample_with_replacement = detail::parse_bool(value, line_no);
      else throw ConfigError("unknown key '" + key + "' in [train]", line_no);
    } else if (section == "preprocess") {
      if (key == "wiener_window") cfg.preprocess.wiener_window = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "percentile_low") cfg.preprocess.percentile_low = detail::parse_double(value, line_no);
      else if (key == "percentile_high") cfg.preprocess.percentile_high = detail::parse_double(value, line_no);
      else if (key == "mask_threshold") cfg.preprocess.mask_threshold = static_cast<int>(detail::parse_int(value, line_no));
      else throw ConfigError("unknown key '" + key + "' in [preprocess]", line_no);
    } else {  // synthgen
      if (key == "image_size") cfg.synthgen.image_size = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "cells_per_image") cfg.synthgen.cells_per_image = static_cast<int>(detail::parse_int(value, line_no));
      else if (key == "overlap_allowance") cfg.synthgen.overlap_allowance = detail::parse_double(value, line_no);
      else if (key == "cell_scale") cfg.synthgen.cell_scale = detail::parse_double(value, line_no);
      else if (key == "illumination_amplitude") cfg.synthgen.illumination_amplitude = detail::parse_double(value, line_no);
      else if (key == "noise_std") cfg.synthgen.noise_std = detail::parse_double(value, line_no);
      else if (key == "seed") cfg.synthgen.seed = static_cast<std::uint64_t>(detail::parse_int(value, line_no));
      else if (key == "weight_normal") { cfg.synthgen.weights[0] = detail::parse_double(value, line_no); cfg.synthgen_weights_overridden = true; }
      else if (key == "weight_microcyte") { cfg.synthgen.weights[1] = detail::parse_double(value, line_no); cfg.synthgen_weights_overridden = true; }
      else if (key == "weight_macrocyte") { cfg.synthgen.weights[2] = detail::parse_double(value, line_no); cfg.synthgen_weights_overridden = true; }
      else if (key == "weight_elliptocyte") { cfg.synthgen.weights[3] = detail::parse_double(value, line_no); cfg.synthgen_weights_overridden = true; }
      else if (key == "weight_target") { cfg.synthgen.weights[4] = detail::parse_double(value, line_no); cfg.synthgen_weights_overridden = true; }
      else throw ConfigError("unknown key '" + key + "' in [synthgen]", line_no);
    }
  }
  return cfg;
}

inline AppConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// Canonical serialization of the training-relevant sections; its FNV-1a hash
// ties a checkpoint to the configuration that produced it.
inline std::string canonical_config_string(const AppConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "network.base_size=" << cfg.network.base_size << ";levels=" << cfg.network.levels
      << ";thresholds=";
  for (std::size_t i = 0; i < cfg.network.thresholds.size(); ++i) {
    out << (i ? "," : "") << cfg.network.thresholds[i];
  }
  out << ";final_threshold=" << cfg.network.final_threshold
      << ";width_multiplier=" << cfg.network.width_multiplier << ";seed=" << cfg.network.seed
      << ";bn_momentum=" << cfg.network.bn_momentum << ";bn_epsilon=" << cfg.network.bn_epsilon
      << "|train.learning_rate=" << cfg.train.learning_rate
      << ";minibatch=" << cfg.train.minibatch
      << ";max_epochs_per_level=" << cfg.train.max_epochs_per_level
      << ";iterations_per_epoch=" << cfg.train.iterations_per_epoch
      << ";max_global_rounds=" << cfg.train.max_global_rounds << ";seed=" << cfg.train.seed
      << ";split_fraction=" << cfg.train.split_fraction << ";folds=" << cfg.train.folds
      << ";sample_with_replacement=" << cfg.train.sample_with_replacement;
  return out.str();
}

inline std::uint64_t fnv1a_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t config_hash(const AppConfig& cfg) {
  return fnv1a_hash(canonical_config_string(cfg));
}

}  // namespace dced
