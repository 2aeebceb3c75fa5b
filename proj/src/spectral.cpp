#include "jdm/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace jdm {

namespace {

// Trapezoidal per-channel wavelength weights.
Eigen::VectorXd channel_weights(const Eigen::VectorXd& wl) {
  const Eigen::Index n = wl.size();
  Eigen::VectorXd w(n);
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lo = i == 0 ? wl[0] : 0.5 * (wl[i - 1] + wl[i]);
    const double hi = i == n - 1 ? wl[n - 1] : 0.5 * (wl[i] + wl[i + 1]);
    w[i] = hi - lo;
  }
  return w;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

std::vector<std::pair<double, double>> default_band_ranges(int n_bands, double lo, double hi) {
  std::vector<std::pair<double, double>> out;
  const double step = (hi - lo) / n_bands;
  for (int k = 0; k < n_bands; ++k) {
    out.emplace_back(lo + k * step, lo + (k + 1) * step);
  }
  return out;
}

SensitivityBank default_rgb_bank(const Eigen::VectorXd& wavelengths_nm) {
  SensitivityBank bank;
  bank.wavelengths_nm = wavelengths_nm;
  const double centers[3] = {620.0, 550.0, 460.0};  // R, G, B
  const double stddev = 35.0;
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd c(wavelengths_nm.size());
    for (Eigen::Index i = 0; i < wavelengths_nm.size(); ++i) {
      const double d = (wavelengths_nm[i] - centers[k]) / stddev;
      c[i] = std::exp(-0.5 * d * d);
    }
    bank.curves.push_back(c);
  }
  return bank;
}

SpectralCube render_cube(const SceneTruth& truth) {
  SpectralCube cube(truth.height, truth.width, truth.wavelengths_nm);
  const int C = truth.channels();
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(truth.height) * truth.width; ++p) {
    const double s = truth.shading[p];
    for (int c = 0; c < C; ++c) {
      cube.values[p * C + c] = truth.illuminant[c] * s * truth.reflectance[p * C + c];
    }
  }
  return cube;
}

RgbImage render_rgb_cube(const SpectralCube& cube, const SensitivityBank& bank) {
  if (bank.wavelengths_nm.size() != cube.wavelengths_nm.size() ||
      (bank.wavelengths_nm - cube.wavelengths_nm).cwiseAbs().maxCoeff() > 1e-9) {
    throw ValueError("render_rgb: sensitivity bank wavelength grid does not match cube");
  }
  const int C = cube.channels();
  const Eigen::VectorXd dw = channel_weights(cube.wavelengths_nm);
  RgbImage im(cube.height, cube.width, 16);
  double norm[3];
  for (int k = 0; k < 3; ++k) {
    norm[k] = (bank.curves[static_cast<std::size_t>(k)].array() * dw.array()).sum();
    if (norm[k] <= 0.0) throw ValueError("render_rgb: sensitivity curve " + std::to_string(k) +
                                         " integrates to a non-positive value");
  }
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(cube.height) * cube.width; ++p) {
    for (int k = 0; k < 3; ++k) {
      const Eigen::VectorXd& ck = bank.curves[static_cast<std::size_t>(k)];
      double acc = 0.0;
      for (int c = 0; c < C; ++c) acc += ck[c] * cube.values[p * C + c] * dw[c];
      im.values[p * 3 + k] = std::clamp(acc / norm[k], 0.0, 1.0);
    }
  }
  return im;
}

RgbImage render_rgb(const SceneTruth& truth, const SensitivityBank& bank) {
  return render_rgb_cube(render_cube(truth), bank);
}

LrMsi simulate_lr_msi(const SpectralCube& cube, int n_bands, int out_hw) {
  if (out_hw > cube.height || out_hw > cube.width) {
    throw ValueError("simulate_lr_msi: output size " + std::to_string(out_hw) +
                     " exceeds cube dimensions " + std::to_string(cube.height) + "x" +
                     std::to_string(cube.width));
  }
  LrMsi msi;
  msi.height = out_hw;
  msi.width = out_hw;
  msi.band_ranges_nm = default_band_ranges(n_bands);
  msi.values = Array::Zero(static_cast<std::int64_t>(out_hw) * out_hw * n_bands);

  const int C = cube.channels();
  std::vector<std::vector<int>> members(static_cast<std::size_t>(n_bands));
  for (int c = 0; c < C; ++c) {
    const double wl = cube.wavelengths_nm[c];
    for (int k = 0; k < n_bands; ++k) {
      const auto& [lo, hi] = msi.band_ranges_nm[static_cast<std::size_t>(k)];
      const bool last = k == n_bands - 1;
      if (wl >= lo && (wl < hi || (last && wl <= hi))) {
        members[static_cast<std::size_t>(k)].push_back(c);
        break;
      }
    }
  }
  for (int k = 0; k < n_bands; ++k) {
    if (members[static_cast<std::size_t>(k)].empty()) {
      throw ValueError("simulate_lr_msi: no cube channel falls in band " + std::to_string(k));
    }
  }

  // near-equal tiles: tile k covers [floor(k*H/out), floor((k+1)*H/out))
  for (int ty = 0; ty < out_hw; ++ty) {
    const int y0 = static_cast<int>(static_cast<std::int64_t>(ty) * cube.height / out_hw);
    const int y1 = static_cast<int>(static_cast<std::int64_t>(ty + 1) * cube.height / out_hw);
    for (int tx = 0; tx < out_hw; ++tx) {
      const int x0 = static_cast<int>(static_cast<std::int64_t>(tx) * cube.width / out_hw);
      const int x1 = static_cast<int>(static_cast<std::int64_t>(tx + 1) * cube.width / out_hw);
      for (int k = 0; k < n_bands; ++k) {
        double acc = 0.0;
        std::int64_t count = 0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) {
            for (int c : members[static_cast<std::size_t>(k)]) {
              acc += cube.at(y, x, c);
              ++count;
            }
          }
        }
        msi.at(ty, tx, k) = acc / static_cast<double>(count);
      }
    }
  }
  return msi;
}

namespace {

Eigen::VectorXd smooth_visible_curve(const Eigen::VectorXd& wl, RandomStream& rng,
                                     double nir_value) {
  const double base = rng.uniform(0.15, 0.75);
  const double centers[4] = {440.0, 520.0, 600.0, 700.0};
  double amp[4];
  for (double& a : amp) a = rng.uniform(-0.25, 0.35);
  Eigen::VectorXd r(wl.size());
  for (Eigen::Index i = 0; i < wl.size(); ++i) {
    double v = base;
    for (int j = 0; j < 4; ++j) {
      const double d = (wl[i] - centers[j]) / 45.0;
      v += amp[j] * std::exp(-0.5 * d * d);
    }
    v = std::clamp(v, 0.05, 0.95);
    const double w = smoothstep((wl[i] - 780.0) / 70.0);  // flat tail from 850 nm
    r[i] = (1.0 - w) * v + w * nir_value;
  }
  return r;
}

// Visible-band perturbation orthogonal to every sensitivity*illuminant curve,
// zero above 780 nm; added to one curve of a metameric pair.
Eigen::VectorXd metameric_delta(const Eigen::VectorXd& wl, const Eigen::VectorXd& illum,
                                const SensitivityBank& bank) {
  const Eigen::Index n = wl.size();
  Eigen::VectorXd dw = channel_weights(wl);
  const double centers[4] = {460.0, 530.0, 600.0, 670.0};
  Eigen::MatrixXd basis(n, 4);
  for (int j = 0; j < 4; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (wl[i] - centers[j]) / 30.0;
      basis(i, j) = wl[i] > 780.0 ? 0.0 : std::exp(-0.5 * d * d);
    }
  }
  Eigen::MatrixXd g(3, 4);
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 4; ++j) {
      g(k, j) = (bank.curves[static_cast<std::size_t>(k)].array() * illum.array() *
                 basis.col(j).array() * dw.array())
                    .sum();
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
  Eigen::MatrixXd kernel = lu.kernel();
  if (kernel.cols() == 0) return Eigen::VectorXd::Zero(n);
  Eigen::VectorXd delta = basis * kernel.col(0);
  const double peak = delta.cwiseAbs().maxCoeff();
  if (peak < 1e-12) return Eigen::VectorXd::Zero(n);
  return delta * (0.14 / peak);
}

}  // namespace

namespace {

Eigen::VectorXd draw_illuminant(const Eigen::VectorXd& wl, RandomStream& rng) {
  const Eigen::Index n = wl.size();
  Eigen::VectorXd illum(n);
  const double ph1 = rng.uniform(0.0, 6.283), ph2 = rng.uniform(0.0, 6.283);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double t = (wl[c] - 400.0) / 600.0;
    illum[c] = 1.0 + 0.2 * std::cos(6.283185307179586 * t + ph1) +
               0.1 * std::cos(12.566370614359172 * t + ph2);
    illum[c] = std::max(illum[c], 0.4);
  }
  illum *= static_cast<double>(n) / illum.sum();
  return illum;
}

struct ScenePalette {
  Eigen::VectorXd illuminant;
  double nir_value = 0.5;
  std::vector<Eigen::VectorXd> curves;
};

ScenePalette draw_palette(const Eigen::VectorXd& wl, bool metameric, RandomStream& rng) {
  ScenePalette pal;
  pal.illuminant = draw_illuminant(wl, rng);
  pal.nir_value = rng.uniform(0.45, 0.7);
  pal.curves.resize(kNumMaterialClasses);
  for (int m = 0; m < kNumMaterialClasses; ++m) {
    pal.curves[static_cast<std::size_t>(m)] = smooth_visible_curve(wl, rng, pal.nir_value);
  }
  if (metameric) {
    // building (0) and road (4) become indistinguishable through the RGB bank
    SensitivityBank bank = default_rgb_bank(wl);
    Eigen::VectorXd delta = metameric_delta(wl, pal.illuminant, bank);
    Eigen::VectorXd shared = smooth_visible_curve(wl, rng, pal.nir_value);
    for (Eigen::Index i = 0; i < shared.size(); ++i) shared[i] = std::clamp(shared[i], 0.2, 0.8);
    pal.curves[0] = shared;
    pal.curves[4] = shared + delta;
    for (Eigen::Index i = 0; i < shared.size(); ++i) {
      pal.curves[4][i] = std::clamp(pal.curves[4][i], 0.02, 0.98);
    }
  }
  return pal;
}

// smooth multiplicative perturbation of the visible bands, zero above 760 nm
Eigen::VectorXd visible_jitter(const Eigen::VectorXd& wl, double amplitude, RandomStream& rng) {
  const double centers[3] = {450.0, 550.0, 650.0};
  double amp[3];
  for (double& a : amp) a = rng.uniform(-amplitude, amplitude);
  Eigen::VectorXd j(wl.size());
  for (Eigen::Index i = 0; i < wl.size(); ++i) {
    double v = 0.0;
    for (int b = 0; b < 3; ++b) {
      const double d = (wl[i] - centers[b]) / 50.0;
      v += amp[b] * std::exp(-0.5 * d * d);
    }
    v *= 1.0 - smoothstep((wl[i] - 700.0) / 60.0);
    j[i] = v;
  }
  return j;
}

}  // namespace

SceneTruth generate_synthetic_scene(std::uint64_t seed, int hw, int n_channels,
                                    const SceneOptions& options) {
  if (hw < 16) throw ValueError("generate_synthetic_scene: hw must be at least 16");
  RandomStream rng(seed * 0x9e3779b97f4a7c15ULL + 0x51ed2701);

  SceneTruth truth;
  truth.height = hw;
  truth.width = hw;
  truth.wavelengths_nm.resize(n_channels);
  for (int c = 0; c < n_channels; ++c) {
    truth.wavelengths_nm[c] =
        n_channels == 1 ? 700.0 : 400.0 + 600.0 * c / static_cast<double>(n_channels - 1);
  }

  ScenePalette pal;
  if (options.anchor_seed != 0) {
    RandomStream anchor_rng(options.anchor_seed * 0x9e3779b97f4a7c15ULL + 0x51ed2701);
    pal = draw_palette(truth.wavelengths_nm, options.metameric_pair, anchor_rng);
    // light per-scene variation on top of the anchored palette
    Eigen::VectorXd illum_jitter = visible_jitter(truth.wavelengths_nm, 0.04, rng);
    for (Eigen::Index c = 0; c < pal.illuminant.size(); ++c) {
      pal.illuminant[c] = std::max(pal.illuminant[c] * (1.0 + illum_jitter[c]), 0.3);
    }
    pal.illuminant *= static_cast<double>(n_channels) / pal.illuminant.sum();
    Eigen::VectorXd pair_jitter = visible_jitter(truth.wavelengths_nm, 0.03, rng);
    for (int m = 0; m < kNumMaterialClasses; ++m) {
      // the metameric pair shares one jitter so it stays metameric
      Eigen::VectorXd j = (m == 0 || m == 4) ? pair_jitter
                                             : visible_jitter(truth.wavelengths_nm, 0.03, rng);
      for (Eigen::Index c = 0; c < j.size(); ++c) {
        pal.curves[static_cast<std::size_t>(m)][c] =
            std::clamp(pal.curves[static_cast<std::size_t>(m)][c] * (1.0 + j[c]), 0.01, 0.99);
      }
    }
  } else {
    pal = draw_palette(truth.wavelengths_nm, options.metameric_pair, rng);
  }
  truth.illuminant = pal.illuminant;

  // Voronoi partition into at most six labeled regions
  const int n_regions = std::min(options.max_regions, kNumMaterialClasses);
  std::vector<double> site_y(static_cast<std::size_t>(n_regions));
  std::vector<double> site_x(static_cast<std::size_t>(n_regions));
  for (int r = 0; r < n_regions; ++r) {
    site_y[static_cast<std::size_t>(r)] = rng.uniform(0.0, hw);
    site_x[static_cast<std::size_t>(r)] = rng.uniform(0.0, hw);
  }
  std::vector<int> category(static_cast<std::size_t>(n_regions));
  for (int r = 0; r < n_regions; ++r) category[static_cast<std::size_t>(r)] = r;
  rng.shuffle(category);

  truth.segmentation = MaterialSegmentation(hw, hw);
  for (int y = 0; y < hw; ++y) {
    for (int x = 0; x < hw; ++x) {
      double best = 1e30;
      int arg = 0;
      for (int r = 0; r < n_regions; ++r) {
        const double dy = y + 0.5 - site_y[static_cast<std::size_t>(r)];
        const double dx = x + 0.5 - site_x[static_cast<std::size_t>(r)];
        const double d = dy * dy + dx * dx;
        if (d < best) {
          best = d;
          arg = r;
        }
      }
      truth.segmentation.at(y, x) = category[static_cast<std::size_t>(arg)];
    }
  }

  truth.reflectance = Array::Zero(static_cast<std::int64_t>(hw) * hw * n_channels);
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(hw) * hw; ++p) {
    const int m = truth.segmentation.labels[p];
    for (int c = 0; c < n_channels; ++c) {
      truth.reflectance[p * n_channels + c] = pal.curves[static_cast<std::size_t>(m)][c];
    }
  }

  // smooth low-frequency shading rescaled to exactly [0.1, 1]
  Array field = Array::Zero(static_cast<std::int64_t>(hw) * hw);
  const int n_blobs = 3;
  std::vector<double> by(n_blobs), bx(n_blobs), bs(n_blobs), ba(n_blobs);
  for (int j = 0; j < n_blobs; ++j) {
    by[static_cast<std::size_t>(j)] = rng.uniform(0.0, hw);
    bx[static_cast<std::size_t>(j)] = rng.uniform(0.0, hw);
    bs[static_cast<std::size_t>(j)] = rng.uniform(0.25 * hw, 0.6 * hw);
    ba[static_cast<std::size_t>(j)] = rng.uniform(-1.0, 1.0);
  }
  const double gy = rng.uniform(-1.0, 1.0), gx = rng.uniform(-1.0, 1.0);
  for (int y = 0; y < hw; ++y) {
    for (int x = 0; x < hw; ++x) {
      double v = gy * (y / static_cast<double>(hw)) + gx * (x / static_cast<double>(hw));
      for (int j = 0; j < n_blobs; ++j) {
        const double dy = (y - by[static_cast<std::size_t>(j)]) / bs[static_cast<std::size_t>(j)];
        const double dx = (x - bx[static_cast<std::size_t>(j)]) / bs[static_cast<std::size_t>(j)];
        v += ba[static_cast<std::size_t>(j)] * std::exp(-0.5 * (dy * dy + dx * dx));
      }
      field[static_cast<std::int64_t>(y) * hw + x] = v;
    }
  }
  const double fmin = field.minCoeff(), fmax = field.maxCoeff();
  truth.shading = Array::Zero(field.size());
  if (fmax - fmin < 1e-9) {
    for (std::int64_t p = 0; p < field.size(); ++p) {
      truth.shading[p] = 0.1 + 0.9 * (p % hw) / static_cast<double>(hw - 1);
    }
  } else {
    truth.shading = 0.1 + 0.9 * (field - fmin) / (fmax - fmin);
  }
  return truth;
}

}  // namespace jdm
