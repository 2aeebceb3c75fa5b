#pragma once

#include <string>

#include "jdm/image.hpp"

namespace jdm {

/// RGB PNG at the image's bit depth (8 or 16); values are quantized from [0,1].
void write_rgb_png(const std::string& path, const RgbImage& im);
RgbImage read_rgb_png(const std::string& path);

/// 16-bit single-channel PNG for shading-like maps in [0,1].
void write_gray16_png(const std::string& path, const Array& values, int height, int width);
void read_gray16_png(const std::string& path, Array& values, int& height, int& width);

/// 8-bit single-channel PNG carrying small integer labels.
void write_label_png(const std::string& path, const Eigen::ArrayXi& labels, int height,
                     int width);
void read_label_png(const std::string& path, Eigen::ArrayXi& labels, int& height, int& width);

}  // namespace jdm
