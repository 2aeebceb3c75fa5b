#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "jdm/image.hpp"

namespace jdm {

/// H x W x C radiance/reflectance samples with per-channel wavelengths,
/// channel-last row-major. Wavelengths are strictly increasing in [400,1000].
struct SpectralCube {
  int height = 0;
  int width = 0;
  Eigen::VectorXd wavelengths_nm;
  Array values;  // h*w*c

  SpectralCube() = default;
  SpectralCube(int h, int w, Eigen::VectorXd wl)
      : height(h), width(w), wavelengths_nm(std::move(wl)) {
    values = Array::Zero(static_cast<std::int64_t>(h) * w * wavelengths_nm.size());
  }
  int channels() const { return static_cast<int>(wavelengths_nm.size()); }
  double at(int y, int x, int c) const {
    return values[(static_cast<std::int64_t>(y) * width + x) * channels() + c];
  }
  double& at(int y, int x, int c) {
    return values[(static_cast<std::int64_t>(y) * width + x) * channels() + c];
  }
};

/// Low-resolution multi-spectral image; default 10 bands of 60 nm over
/// 400-1000 nm at 16 x 16.
struct LrMsi {
  int height = 16;
  int width = 16;
  std::vector<std::pair<double, double>> band_ranges_nm;
  Array values;  // h*w*bands

  int bands() const { return static_cast<int>(band_ranges_nm.size()); }
  double at(int y, int x, int b) const {
    return values[(static_cast<std::int64_t>(y) * width + x) * bands() + b];
  }
  double& at(int y, int x, int b) {
    return values[(static_cast<std::int64_t>(y) * width + x) * bands() + b];
  }
};

std::vector<std::pair<double, double>> default_band_ranges(int n_bands = 10,
                                                           double lo = 400.0,
                                                           double hi = 1000.0);

/// Per-output-channel camera sensitivity curves sampled on a wavelength grid.
struct SensitivityBank {
  Eigen::VectorXd wavelengths_nm;
  std::vector<Eigen::VectorXd> curves;  // one per output channel, non-negative
};

/// Gaussian RGB sensitivities centered 460/550/620 nm with 35 nm std.
SensitivityBank default_rgb_bank(const Eigen::VectorXd& wavelengths_nm);

/// Ground-truth intrinsics of a synthetic scene: illuminant L, shading S,
/// per-pixel reflectance R, material segmentation M.
struct SceneTruth {
  int height = 0;
  int width = 0;
  Eigen::VectorXd wavelengths_nm;
  Eigen::VectorXd illuminant;  // positive, per wavelength
  Array shading;               // h*w in (0,1]
  Array reflectance;           // h*w*c in [0,1]
  MaterialSegmentation segmentation;

  int channels() const { return static_cast<int>(wavelengths_nm.size()); }
  double refl(int y, int x, int c) const {
    return reflectance[(static_cast<std::int64_t>(y) * width + x) * channels() + c];
  }
};

struct SceneOptions {
  bool metameric_pair = false;  // embed an RGB-metameric, MSI-separable pair
  int max_regions = 6;
  // When nonzero, category reflectance curves and the illuminant are drawn
  // once from this seed and only lightly jittered per scene, giving materials
  // stable cross-scene spectral signatures. Zero keeps every scene fully
  // independent.
  std::uint64_t anchor_seed = 0;
};

/// cube[x,c] = L(lambda_c) * S(x) * R(lambda_c, x)
SpectralCube render_cube(const SceneTruth& truth);

/// rgb[x,k] = sum_c C_k(l_c) cube[x,c] dl / sum_c C_k(l_c) dl, clamped to [0,1].
RgbImage render_rgb(const SceneTruth& truth, const SensitivityBank& bank);
RgbImage render_rgb_cube(const SpectralCube& cube, const SensitivityBank& bank);

/// Band means over channels in range, box-averaged over near-equal tiles.
LrMsi simulate_lr_msi(const SpectralCube& cube, int n_bands = 10, int out_hw = 16);

/// Deterministic synthetic scene: Voronoi material regions with smooth
/// reflectance curves flat over 850-1000 nm, smooth shading in [0.1, 1],
/// broad positive illuminant.
SceneTruth generate_synthetic_scene(std::uint64_t seed, int hw, int n_channels,
                                    const SceneOptions& options = {});

}  // namespace jdm
