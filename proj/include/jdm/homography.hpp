#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "jdm/image.hpp"

namespace jdm {

/// 3x3 projective transform, normalized so the bottom-right entry is 1.
struct Homography {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

  Homography inverse() const;
  /// Maps (x, y) -> (x', y').
  void apply(double x, double y, double& xo, double& yo) const;
};

struct Correspondence {
  double x1, y1, x2, y2;  // (x1,y1) in the source image maps to (x2,y2)
};

/// Normalized DLT (Hartley normalization, eigen-solve of the 9x9 normal
/// matrix). Needs at least 4 pairs with no 3 source points collinear.
Homography estimate_homography_dlt(const std::vector<Correspondence>& pairs);

/// Inverse-mapping projective warp with bilinear sampling; out-of-bounds
/// samples are zero. `h` maps source coordinates to output coordinates.
Image warp_image(const Image& image, const Homography& h, int out_h, int out_w);
RgbImage warp_image(const RgbImage& image, const Homography& h, int out_h, int out_w);

/// Correspondence file: JSON array of [x1, y1, x2, y2].
std::vector<Correspondence> load_correspondences(const std::string& path);

}  // namespace jdm
