#pragma once

#include <optional>
#include <string>

#include "jdm/enhancement.hpp"
#include "jdm/metrics.hpp"

namespace jdm {

/// Everything rendered for one synthetic scene.
struct SceneBundle {
  SceneTruth truth;
  SpectralCube cube;
  LrMsi msi;
  RgbImage input16;   // imaging-model render, 16-bit quantized
  RgbImage target8;   // reference tone operator, 8-bit quantized
  ShadingMap shading; // NIR-estimated shading prior
};

struct SyntheticOptions {
  int hw = 64;
  int channels = 31;
  int msi_hw = 16;
  int msi_bands = 10;
  bool metameric = true;
  // benchmark scenes anchor material spectra so category/color relations are
  // stable across scenes (characteristic per-material curves)
  std::uint64_t anchor_seed = 500;
};

SceneBundle make_scene_bundle(std::uint64_t seed, const SyntheticOptions& options);

/// Fixed reference tone operator standing in for the commercial target
/// generator: per-category gamma on the shading-free reflectance render, a
/// global S-curve, then re-shading with sqrt(S).
RgbImage reference_tone_target(const SceneTruth& truth, const SensitivityBank& bank);

EnhanceSample to_enhance_sample(const SceneBundle& bundle);
DecompSample to_decomp_sample(const SceneBundle& bundle);

/// Keeps bands fully inside [lo, hi] nm.
LrMsi filter_msi_window(const LrMsi& msi, double lo, double hi);

/// Deterministic 80/20 split: pure function of (seed, count).
void split_80_20(int count, std::uint64_t seed, std::vector<int>& train_idx,
                 std::vector<int>& test_idx);

/// One sample record on disk.
struct SampleRecord {
  std::string dir;
  std::string input16, target8, cube, msi, shading, seg;
};

/// Scene directory index; verifies every referenced file exists at load.
struct DatasetIndex {
  std::vector<SampleRecord> records;

  static DatasetIndex scan(const std::string& root);
};

void write_scene_dir(const std::string& dir, const SceneBundle& bundle);
SceneBundle load_scene_dir(const SampleRecord& record);

/// Training/evaluation configuration (JSON document).
struct RunConfig {
  std::string preset = "toy";  // "toy" | "paper"
  std::uint64_t seed = 7;
  int scenes = 40;
  double lr = 1e-3;
  int batch = 4;
  int steps = 400;
  int crop = 64;
  int lowres = 32;
  int grid_h = 8, grid_w = 8, depth = 8;
  int n_experts = 6;
  bool use_s = true, use_r = true, use_m = true;
  int msi_hw = 16;
  int msi_bands = 10;
  double msi_window_lo = 400.0, msi_window_hi = 1000.0;
  int scene_channels = 31;

  static RunConfig from_json_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  std::string to_json() const;
  EnhanceConfig enhance_config() const;
  SyntheticOptions synthetic_options() const;
};

struct AblationRow {
  std::string setting;
  double psnr = 0.0;
  double ssim = 0.0;
  double delta_e = 0.0;
};

struct AblationTable {
  std::string axis;
  std::vector<AblationRow> rows;

  std::string to_json() const;
  std::string to_text() const;
};

/// Trains one model per setting under a shared seed and reports metrics on
/// the held-out split. axis is one of spectral | spatial | experts | priors.
AblationTable run_ablation(const RunConfig& config, const std::string& axis,
                           const std::vector<std::string>& values = {});

}  // namespace jdm
