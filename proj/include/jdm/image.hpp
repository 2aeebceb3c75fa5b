#pragma once

#include "jdm/common.hpp"
#include "jdm/tensor.hpp"

#include <Eigen/Core>

namespace jdm {

/// Channel-last H x W x C image plane, row-major, 64-bit values.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  Array values;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c) {
    values = Array::Zero(static_cast<std::int64_t>(h) * w * c);
  }

  double& at(int y, int x, int c) {
    return values[(static_cast<std::int64_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return values[(static_cast<std::int64_t>(y) * width + x) * channels + c];
  }
  std::int64_t pixels() const { return static_cast<std::int64_t>(height) * width; }
};

/// Display-referred RGB image, values normalized to [0,1].
struct RgbImage {
  int height = 0;
  int width = 0;
  int bit_depth = 16;  // 8 or 16; normalization divisor 255 or 65535
  Array values;        // h*w*3, channel-last

  RgbImage() = default;
  RgbImage(int h, int w, int depth) : height(h), width(w), bit_depth(depth) {
    values = Array::Zero(static_cast<std::int64_t>(h) * w * 3);
  }

  double& at(int y, int x, int c) {
    return values[(static_cast<std::int64_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return values[(static_cast<std::int64_t>(y) * width + x) * 3 + c];
  }
  Image as_image() const {
    Image im(height, width, 3);
    im.values = values;
    return im;
  }
};

/// Per-pixel scalar shading in (0,1], max-normalized to 1.
struct ShadingMap {
  int height = 0;
  int width = 0;
  Array values;  // h*w

  ShadingMap() = default;
  ShadingMap(int h, int w) : height(h), width(w) {
    values = Array::Zero(static_cast<std::int64_t>(h) * w);
  }
  double at(int y, int x) const { return values[static_cast<std::int64_t>(y) * width + x]; }
  double& at(int y, int x) { return values[static_cast<std::int64_t>(y) * width + x]; }
};

/// Material labels in {0..5}: 0=building 1=plant 2=sky 3=trunk 4=road 5=others.
struct MaterialSegmentation {
  int height = 0;
  int width = 0;
  Eigen::ArrayXi labels;  // h*w
  Array probabilities;    // optional h*w*n, empty when absent

  MaterialSegmentation() = default;
  MaterialSegmentation(int h, int w) : height(h), width(w) {
    labels = Eigen::ArrayXi::Zero(static_cast<std::int64_t>(h) * w);
  }
  int at(int y, int x) const { return labels[static_cast<std::int64_t>(y) * width + x]; }
  int& at(int y, int x) { return labels[static_cast<std::int64_t>(y) * width + x]; }
};

constexpr int kNumMaterialClasses = 6;
constexpr int kNumShadingLevels = 8;

// ---- tensor bridges (NCHW with batch 1) ----
Tensor image_to_tensor(const Image& im);
Tensor rgb_to_tensor(const RgbImage& im);
Tensor shading_to_tensor(const ShadingMap& s);
Image tensor_to_image(const Tensor& t);          // (1,C,H,W) -> HWC
RgbImage tensor_to_rgb(const Tensor& t, int bit_depth);  // clamps to [0,1]
ShadingMap tensor_to_shading(const Tensor& t);

}  // namespace jdm
