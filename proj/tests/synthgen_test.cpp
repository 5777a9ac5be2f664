#include "dced/synthgen.hpp"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

using namespace dced;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

SceneConfig quiet_config() {
  SceneConfig cfg;
  cfg.image_size = 96;
  cfg.cells_per_image = 6;
  cfg.noise_std = 0.0;
  cfg.illumination_amplitude = 0.0;
  return cfg;
}

}  // namespace

TEST(SampleCell, DegenerateMixAlwaysNormal) {
  SceneConfig cfg = quiet_config();
  cfg.weights = {1, 0, 0, 0, 0};
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(sample_cell(rng, cfg).morphology, Morphology::Normal);
  }
}

TEST(SampleCell, RadiusBandsAreStrictlyOrdered) {
  SceneConfig cfg = quiet_config();
  Rng rng(2);
  double micro_max = 0.0, normal_min = 1e9, normal_max = 0.0, macro_min = 1e9;
  for (int i = 0; i < 1000; ++i) {
    cfg.weights = {0, 1, 0, 0, 0};
    micro_max = std::max(micro_max, sample_cell(rng, cfg).a);
    cfg.weights = {1, 0, 0, 0, 0};
    const CellSpec n = sample_cell(rng, cfg);
    normal_min = std::min(normal_min, n.a);
    normal_max = std::max(normal_max, n.a);
    cfg.weights = {0, 0, 1, 0, 0};
    macro_min = std::min(macro_min, sample_cell(rng, cfg).a);
  }
  EXPECT_LT(micro_max, normal_min);
  EXPECT_LT(normal_max, macro_min);
}

TEST(SampleCell, ElliptocyteAspectRatio) {
  SceneConfig cfg = quiet_config();
  cfg.weights = {0, 0, 0, 1, 0};
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const CellSpec c = sample_cell(rng, cfg);
    EXPECT_GE(c.a / c.b, 2.0);
  }
}

TEST(SampleCell, SameSeedSameSpec) {
  SceneConfig cfg = quiet_config();
  Rng a(42), b(42);
  const CellSpec ca = sample_cell(a, cfg);
  const CellSpec cb = sample_cell(b, cfg);
  EXPECT_EQ(ca.morphology, cb.morphology);
  EXPECT_EQ(ca.cx, cb.cx);
  EXPECT_EQ(ca.a, cb.a);
  EXPECT_EQ(ca.rotation, cb.rotation);
}

TEST(SampleCell, AllZeroWeightsRejected) {
  SceneConfig cfg = quiet_config();
  cfg.weights = {0, 0, 0, 0, 0};
  Rng rng(4);
  EXPECT_THROW(sample_cell(rng, cfg), std::invalid_argument);
}

TEST(SampleCell, ClassBalanceConvergesToWeights) {
  SceneConfig cfg = quiet_config();
  cfg.weights = {0.2, 0.25, 0.15, 0.2, 0.2};
  Rng rng(5);
  std::array<int, kMorphologyCount> counts{};
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) ++counts[static_cast<int>(sample_cell(rng, cfg).morphology)];
  for (int c = 0; c < kMorphologyCount; ++c) {
    const double freq = static_cast<double>(counts[c]) / draws;
    EXPECT_NEAR(freq, cfg.weights[c], 0.03) << "class " << c;
  }
}

TEST(RenderScene, SingleCellMaskAreaMatchesEllipse) {
  SceneConfig cfg = quiet_config();
  cfg.image_size = 256;
  cfg.cells_per_image = 1;
  cfg.weights = {1, 0, 0, 0, 0};
  Rng rng(6);
  const Scene scene = render_scene(rng, cfg);
  long long roi = 0;
  for (std::uint8_t v : scene.mask.values) {
    if (v == 0) ++roi;
  }
  const double expected = 3.14159265358979323846 * scene.cells[0].a * scene.cells[0].b;
  EXPECT_NEAR(static_cast<double>(roi), expected, 0.02 * expected);
}

TEST(RenderScene, NoCellsGivesAllBackground) {
  SceneConfig cfg = quiet_config();
  cfg.cells_per_image = 0;
  Rng rng(7);
  const Scene scene = render_scene(rng, cfg);
  for (std::uint8_t v : scene.mask.values) EXPECT_EQ(v, 1);
}

TEST(RenderScene, MaskIndependentOfNoise) {
  SceneConfig noisy = quiet_config();
  noisy.noise_std = 8.0;
  SceneConfig clean = quiet_config();
  Rng r1(8), r2(8);
  const Scene a = render_scene(r1, noisy);
  const Scene b = render_scene(r2, clean);
  EXPECT_EQ(a.mask.values, b.mask.values);
}

TEST(RenderScene, DarkenedPixelsFallInsideMask) {
  SceneConfig cfg = quiet_config();  // no noise, no gradient: background is flat 205
  Rng rng(9);
  const Scene scene = render_scene(rng, cfg);
  for (int y = 0; y < cfg.image_size; ++y) {
    for (int x = 0; x < cfg.image_size; ++x) {
      const bool darkened = scene.image.at(y, x, 0) != 205;
      EXPECT_EQ(darkened, scene.mask.at(y, x) == 0) << y << "," << x;
    }
  }
}

TEST(RenderScene, CountsSumToCellsPerImage) {
  SceneConfig cfg = quiet_config();
  cfg.cells_per_image = 12;
  cfg.weights = SceneConfig::preset_weights("anaemic");
  Rng rng(10);
  const Scene scene = render_scene(rng, cfg);
  int total = 0;
  for (int c : scene.counts) total += c;
  EXPECT_EQ(total, 12);
}

TEST(GenerateDataset, DeterministicDirectoryBytes) {
  const fs::path dir_a = fs::temp_directory_path() / "dced_synth_a";
  const fs::path dir_b = fs::temp_directory_path() / "dced_synth_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  SceneConfig cfg = quiet_config();
  cfg.seed = 7;
  cfg.noise_std = 2.0;
  generate_dataset(cfg, 4, dir_a, "healthy");
  generate_dataset(cfg, 4, dir_b, "healthy");
  for (const auto& entry : fs::directory_iterator(dir_a)) {
    const fs::path other = dir_b / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(entry.path()), slurp(other)) << entry.path();
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST(GenerateDataset, ManifestBookkeeping) {
  const fs::path dir = fs::temp_directory_path() / "dced_synth_manifest";
  fs::remove_all(dir);
  SceneConfig cfg = quiet_config();
  cfg.cells_per_image = 5;
  cfg.seed = 11;
  const auto rows = generate_dataset(cfg, 3, dir, "anaemic");
  ASSERT_EQ(rows.size(), 3u);
  int total = 0;
  for (const ManifestRow& r : rows) {
    EXPECT_EQ(r.tag, "anaemic");
    for (int c : r.counts) total += c;
  }
  EXPECT_EQ(total, 15);

  const auto loaded = load_manifest(dir / "manifest.csv");
  ASSERT_EQ(loaded.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(loaded[i].image, rows[i].image);
    EXPECT_EQ(loaded[i].seed, rows[i].seed);
    EXPECT_EQ(loaded[i].counts, rows[i].counts);
  }
  fs::remove_all(dir);
}

TEST(GenerateDataset, AnaemicPresetSkewsAwayFromNormal) {
  SceneConfig cfg = quiet_config();
  cfg.cells_per_image = 40;
  cfg.weights = SceneConfig::preset_weights("anaemic");
  Rng rng(12);
  std::array<int, kMorphologyCount> counts{};
  for (int i = 0; i < 25; ++i) {
    const Scene scene = render_scene(rng, cfg);
    for (int c = 0; c < kMorphologyCount; ++c) counts[c] += scene.counts[c];
  }
  const int total = 25 * 40;
  const double normal_share = static_cast<double>(counts[0]) / total;
  EXPECT_LT(normal_share, 0.5);  // healthy preset would be ~0.9
  for (int c = 1; c < kMorphologyCount; ++c) EXPECT_GT(counts[c], 0);
}
