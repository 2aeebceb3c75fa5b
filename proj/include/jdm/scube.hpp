#pragma once

#include <string>

#include "jdm/spectral.hpp"

namespace jdm {

/// SCUBE binary: magic "SCUB", u32 version=1, u32 JSON header length, JSON
/// {height, width, channels, wavelengths_nm, dtype:"f32le",
/// layout:"hwc-row-major"}, then f32 little-endian payload. Lr-MSI files add
/// an optional "band_ranges_nm" key.
void write_cube(const SpectralCube& cube, const std::string& path);
SpectralCube read_cube(const std::string& path);

struct ScubeHeader {
  int height = 0, width = 0, channels = 0;
  std::vector<double> wavelengths_nm;
};

/// Parses the header only; does not touch the payload.
ScubeHeader read_cube_header(const std::string& path);

void write_msi(const LrMsi& msi, const std::string& path);
LrMsi read_msi(const std::string& path);

}  // namespace jdm
