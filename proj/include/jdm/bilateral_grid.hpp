#pragma once

#include "jdm/image.hpp"

namespace jdm {

/// Coarse spatial x luminance lattice of 3x4 affine color transforms.
/// Cell storage: ((y*grid_w + x)*12 + m)*depth + z with depth innermost, so
/// one cell's 12*depth values are contiguous for slicing.
struct BilateralGrid {
  int grid_h = 16;
  int grid_w = 16;
  int depth = 8;
  Array cells;

  BilateralGrid() = default;
  BilateralGrid(int gh, int gw, int d) : grid_h(gh), grid_w(gw), depth(d) {
    cells = Array::Zero(static_cast<std::int64_t>(gh) * gw * 12 * d);
  }
  double cell(int y, int x, int m, int z) const {
    return cells[((static_cast<std::int64_t>(y) * grid_w + x) * 12 + m) * depth + z];
  }
  double& cell(int y, int x, int m, int z) {
    return cells[((static_cast<std::int64_t>(y) * grid_w + x) * 12 + m) * depth + z];
  }
  /// Same matrix in every cell.
  static BilateralGrid constant(int gh, int gw, int d, const double matrix[12]);
  static BilateralGrid identity(int gh, int gw, int d);
};

/// Checkpoints store grids as (12, depth, grid_h, grid_w) tensors.
Tensor grid_to_tensor(const BilateralGrid& grid);
BilateralGrid grid_from_tensor(const Tensor& t);

/// Per-pixel sliced 3x4 affine transforms, channel-last (h*w*12).
struct AffineCoeffField {
  int height = 0;
  int width = 0;
  Array coeffs;

  AffineCoeffField() = default;
  AffineCoeffField(int h, int w) : height(h), width(w) {
    coeffs = Array::Zero(static_cast<std::int64_t>(h) * w * 12);
  }
};

/// Guidance auxiliary network parameters: color matrix + bias, per-channel
/// piecewise-linear curves on 16 uniform knots, channel mixer.
struct GuideParams {
  Eigen::Matrix3d ccm = Eigen::Matrix3d::Identity();
  Eigen::Vector3d ccm_bias = Eigen::Vector3d::Zero();
  // row-major so each channel's 16 knots are contiguous
  Eigen::Matrix<double, 3, 16, Eigen::RowMajor> knots;
  Eigen::Vector3d mixer = Eigen::Vector3d::Constant(1.0 / 3.0);
  double mixer_bias = 0.0;

  GuideParams();
};

/// g = clamp(mixer . PWL(ccm*rgb + bias) + mixer_bias, 0, 1), per pixel.
Array guidance_eval(const Image& rgb, const GuideParams& params);

/// Trilinear slice at (x+0.5)*gw/W - 0.5, (y+0.5)*gh/H - 0.5, g*depth - 0.5
/// with edge-clamped sampling, computed by nested lerps.
AffineCoeffField slice_grid(const BilateralGrid& grid, const Array& guidance, int height,
                            int width);

/// Reference slicer: explicit 8-corner weighted sums in a naive scalar loop.
AffineCoeffField slice_oracle_dense(const BilateralGrid& grid, const Array& guidance,
                                    int height, int width);

/// out[p] = A(p) * rgb(p) + b(p); no clamping here.
Image apply_affine(const Image& rgb, const AffineCoeffField& coeffs);

// ---- differentiable wrappers (batch-1 NCHW tensors) ----

/// grid (12, depth, gh, gw), guidance (1,1,H,W) -> coefficients (1,12,H,W).
Tensor op_slice_grid(const Tensor& grid, const Tensor& guidance);

/// image (1,3,H,W), coefficients (1,12,H,W) -> (1,3,H,W).
Tensor op_apply_affine(const Tensor& image, const Tensor& coeffs);

/// x (1,C,H,W), knots (C,K) on uniform [0,1] positions; input clamped to [0,1].
Tensor op_pwl(const Tensor& x, const Tensor& knots);

}  // namespace jdm
