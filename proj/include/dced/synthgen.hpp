#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dced/image.hpp"
#include "dced/tensor.hpp"

namespace dced {

enum class Morphology { Normal = 0, Microcyte, Macrocyte, Elliptocyte, Target };

constexpr int kMorphologyCount = 5;

inline const char* morphology_name(Morphology m) {
  switch (m) {
    case Morphology::Normal: return "normal";
    case Morphology::Microcyte: return "microcyte";
    case Morphology::Macrocyte: return "macrocyte";
    case Morphology::Elliptocyte: return "elliptocyte";
    case Morphology::Target: return "target";
  }
  return "?";
}

// One rendered cell: a rotated ellipse with a radial intensity profile.
// Target cells add a bright inner disc inside a darker annulus.
struct CellSpec {
  Morphology morphology = Morphology::Normal;
  double cx = 0, cy = 0;       // center, pixels
  double a = 0, b = 0;         // semi-axes, pixels (a >= b)
  double rotation = 0;         // radians
  double rim_intensity = 110;  // darkest ring value
  double center_intensity = 165;  // central pallor value
  double inner_fraction = 0.45;   // target cells: bright disc radius / a
  double inner_intensity = 175;   // target cells: disc value
};

struct SceneConfig {
  int image_size = 160;
  int cells_per_image = 12;
  // morphology mix: normal, microcyte, macrocyte, elliptocyte, target
  std::array<double, kMorphologyCount> weights{0.90, 0.025, 0.025, 0.025, 0.025};
  double overlap_allowance = 0.45;  // 0 = disjoint cells, 1 = unconstrained
  double cell_scale = 1.0;          // multiplies every radius band
  double illumination_amplitude = 12.0;
  double noise_std = 2.5;
  std::uint64_t seed = 0;

  static std::array<double, kMorphologyCount> preset_weights(const std::string& tag) {
    if (tag == "anaemic") return {0.20, 0.25, 0.15, 0.20, 0.20};
    return {0.90, 0.025, 0.025, 0.025, 0.025};
  }
};

namespace detail {

// Semi-axis bands as fractions of the image size; strictly ordered so that
// every sampled microcyte is smaller than every normal cell, and every normal
// cell smaller than every macrocyte.
struct RadiusBand {
  double lo, hi;
};
constexpr RadiusBand kMicrocyteBand{0.040, 0.060};
constexpr RadiusBand kNormalBand{0.070, 0.095};
constexpr RadiusBand kMacrocyteBand{0.105, 0.130};
constexpr RadiusBand kElliptoMajorBand{0.095, 0.120};

inline double uniform_in(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rng.uniform();
}

}  // namespace detail

inline CellSpec sample_cell(Rng& rng, const SceneConfig& config) {
  double total = 0.0;
  for (double w : config.weights) {
    if (w < 0.0) throw std::invalid_argument("sample_cell: negative class weight");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("sample_cell: all class weights are zero");

  const double pick = rng.uniform() * total;
  double acc = 0.0;
  int cls = kMorphologyCount - 1;
  for (int i = 0; i < kMorphologyCount; ++i) {
    acc += config.weights[i];
    if (pick < acc) {
      cls = i;
      break;
    }
  }

  const double S = config.image_size * config.cell_scale;
  CellSpec cell;
  cell.morphology = static_cast<Morphology>(cls);
  switch (cell.morphology) {
    case Morphology::Microcyte: {
      cell.a = detail::uniform_in(rng, detail::kMicrocyteBand.lo, detail::kMicrocyteBand.hi) * S;
      cell.b = cell.a * detail::uniform_in(rng, 0.85, 1.0);
      break;
    }
    case Morphology::Macrocyte: {
      cell.a = detail::uniform_in(rng, detail::kMacrocyteBand.lo, detail::kMacrocyteBand.hi) * S;
      cell.b = cell.a * detail::uniform_in(rng, 0.85, 1.0);
      break;
    }
    case Morphology::Elliptocyte: {
      cell.a = detail::uniform_in(rng, detail::kElliptoMajorBand.lo, detail::kElliptoMajorBand.hi) * S;
      const double aspect = detail::uniform_in(rng, 2.0, 2.6);
      cell.b = cell.a / aspect;
      cell.center_intensity = 130;  // elongated cells lack the central pallor
      cell.rim_intensity = 115;
      break;
    }
    case Morphology::Target: {
      cell.a = detail::uniform_in(rng, detail::kNormalBand.lo, detail::kNormalBand.hi) * S;
      cell.b = cell.a * detail::uniform_in(rng, 0.85, 1.0);
      cell.rim_intensity = 105;
      cell.center_intensity = 105;
      cell.inner_intensity = 175;
      break;
    }
    case Morphology::Normal:
    default: {
      cell.a = detail::uniform_in(rng, detail::kNormalBand.lo, detail::kNormalBand.hi) * S;
      cell.b = cell.a * detail::uniform_in(rng, 0.85, 1.0);
      break;
    }
  }
  cell.rotation = rng.uniform() * 3.14159265358979323846;
  const double extent = config.image_size;
  const double margin = std::min(cell.a + 2.0, extent / 2.0 - 1.0);
  cell.cx = detail::uniform_in(rng, margin, extent - margin);
  cell.cy = detail::uniform_in(rng, margin, extent - margin);
  cell.rim_intensity += detail::uniform_in(rng, -8.0, 8.0);
  cell.center_intensity += detail::uniform_in(rng, -8.0, 8.0);
  return cell;
}

struct Scene {
  RawImage image;                               // RGB
  Mask mask;                                    // 0 = cell, 1 = background
  std::array<int, kMorphologyCount> counts{};   // per-morphology cells rendered
  std::vector<CellSpec> cells;
};

// Rasterizes cells over an illumination-graded background plus Gaussian pixel
// noise; the mask is the exact union of the cell supports and never sees the
// noise. Overlaps are allowed within the configured allowance.
inline Scene render_scene(Rng& rng, const SceneConfig& config) {
  const int S = config.image_size;
  Scene scene;
  scene.image = RawImage::create(S, S, 3);
  scene.mask = Mask::create(S, S, 1);

  for (int i = 0; i < config.cells_per_image; ++i) {
    CellSpec cell;
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      cell = sample_cell(rng, config);
      placed = true;
      for (const CellSpec& other : scene.cells) {
        const double dx = cell.cx - other.cx, dy = cell.cy - other.cy;
        const double min_dist = (1.0 - config.overlap_allowance) * (cell.a + other.a);
        if (dx * dx + dy * dy < min_dist * min_dist) {
          placed = false;
          break;
        }
      }
    }
    scene.cells.push_back(cell);  // after 40 rejections the last draw stands
    ++scene.counts[static_cast<int>(cell.morphology)];
  }

  const double phi = rng.uniform() * 2.0 * 3.14159265358979323846;
  const double gx = std::cos(phi), gy = std::sin(phi);
  constexpr double kBackground = 205.0;

  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      double value = kBackground;
      bool inside_any = false;
      for (const CellSpec& cell : scene.cells) {
        const double dx = x - cell.cx, dy = y - cell.cy;
        const double ct = std::cos(cell.rotation), st = std::sin(cell.rotation);
        const double u = (dx * ct + dy * st) / cell.a;
        const double v = (-dx * st + dy * ct) / cell.b;
        const double rho_sq = u * u + v * v;
        if (rho_sq > 1.0) continue;
        inside_any = true;
        const double rho = std::sqrt(rho_sq);
        double cell_value;
        if (cell.morphology == Morphology::Target && rho < cell.inner_fraction) {
          cell_value = cell.inner_intensity;
        } else {
          cell_value = cell.center_intensity +
                       (cell.rim_intensity - cell.center_intensity) * rho_sq;
        }
        value = std::min(value, cell_value);  // darkest overlapping cell wins
      }
      if (inside_any) scene.mask.at(y, x) = 0;
      const double illum = config.illumination_amplitude *
                           ((x / static_cast<double>(S) - 0.5) * gx +
                            (y / static_cast<double>(S) - 0.5) * gy);
      const double noise = config.noise_std > 0.0 ? rng.normal() * config.noise_std : 0.0;
      const double g = value + illum + noise;
      // Mild red tint so the RGB -> grayscale path has real work to do.
      scene.image.at(y, x, 0) = clamp_u8(g * 1.00);
      scene.image.at(y, x, 1) = clamp_u8(g * 0.86);
      scene.image.at(y, x, 2) = clamp_u8(g * 0.90);
    }
  }
  return scene;
}

// --- dataset manifest ---------------------------------------------------------

struct ManifestRow {
  std::string image, mask, tag;
  std::uint64_t seed = 0;
  std::array<int, kMorphologyCount> counts{};
};

inline void save_manifest(const std::vector<ManifestRow>& rows,
                          const std::filesystem::path& path) {
  std::ostringstream out;
  out << "image,mask,seed,tag,normal,microcyte,macrocyte,elliptocyte,target\n";
  for (const ManifestRow& r : rows) {
    out << r.image << "," << r.mask << "," << r.seed << "," << r.tag;
    for (int c : r.counts) out << "," << c;
    out << "\n";
  }
  atomic_write(path, out.str());
}

inline std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestRow r;
    std::string field;
    std::getline(ss, r.image, ',');
    std::getline(ss, r.mask, ',');
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    std::getline(ss, r.tag, ',');
    for (int i = 0; i < kMorphologyCount; ++i) {
      if (!std::getline(ss, field, ',')) throw IoError("malformed manifest row: " + line);
      r.counts[i] = std::stoi(field);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// Writes n image/mask pairs with deterministic filenames and per-image seeds,
// plus the manifest. (config, seed) fully determines the directory bytes.
inline std::vector<ManifestRow> generate_dataset(const SceneConfig& config, int n_images,
                                                 const std::filesystem::path& out_dir,
                                                 const std::string& tag) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir.string());
  std::vector<ManifestRow> rows;
  for (int i = 0; i < n_images; ++i) {
    const std::uint64_t image_seed = config.seed + static_cast<std::uint64_t>(i);
    Rng rng(image_seed);
    const Scene scene = render_scene(rng, config);
    char img_name[32], mask_name[32];
    std::snprintf(img_name, sizeof img_name, "img_%04d.ppm", i);
    std::snprintf(mask_name, sizeof mask_name, "mask_%04d.pgm", i);
    save_image(scene.image, out_dir / img_name);
    save_mask(scene.mask, out_dir / mask_name);
    ManifestRow row;
    row.image = img_name;
    row.mask = mask_name;
    row.seed = image_seed;
    row.tag = tag;
    row.counts = scene.counts;
    rows.push_back(std::move(row));
  }
  save_manifest(rows, out_dir / "manifest.csv");
  return rows;
}

}  // namespace dced
