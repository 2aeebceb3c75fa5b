#include "jdm/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace jdm {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Writes interleaved rows; samples are already integer-quantized.
void write_png_impl(const std::string& path, const std::vector<std::uint16_t>& samples,
                    int height, int width, int channels, int bit_depth) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("png: cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw IoError("png: allocation failure");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: write failure on " + path);
  }
  png_init_io(png, fp.get());
  const int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t row_samples = static_cast<std::size_t>(width) * channels;
  if (bit_depth == 16) {
    std::vector<unsigned char> row(row_samples * 2);
    for (int y = 0; y < height; ++y) {
      for (std::size_t i = 0; i < row_samples; ++i) {
        const std::uint16_t v = samples[static_cast<std::size_t>(y) * row_samples + i];
        row[2 * i] = static_cast<unsigned char>(v >> 8);  // network byte order
        row[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
      }
      png_write_row(png, row.data());
    }
  } else {
    std::vector<unsigned char> row(row_samples);
    for (int y = 0; y < height; ++y) {
      for (std::size_t i = 0; i < row_samples; ++i) {
        row[i] = static_cast<unsigned char>(samples[static_cast<std::size_t>(y) * row_samples + i]);
      }
      png_write_row(png, row.data());
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void read_png_impl(const std::string& path, std::vector<std::uint16_t>& samples, int& height,
                   int& width, int& channels, int& bit_depth) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("png: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw IoError("png: allocation failure");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: malformed file " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  channels = png_get_channels(png, info);
  bit_depth = png_get_bit_depth(png, info);

  const std::size_t row_samples = static_cast<std::size_t>(width) * channels;
  samples.resize(static_cast<std::size_t>(height) * row_samples);
  std::vector<unsigned char> row(png_get_rowbytes(png, info));
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    if (bit_depth == 16) {
      for (std::size_t i = 0; i < row_samples; ++i) {
        samples[static_cast<std::size_t>(y) * row_samples + i] =
            static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
      }
    } else {
      for (std::size_t i = 0; i < row_samples; ++i) {
        samples[static_cast<std::size_t>(y) * row_samples + i] = row[i];
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

std::uint16_t quantize(double v, int maxval) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(c * maxval));
}

}  // namespace

void write_rgb_png(const std::string& path, const RgbImage& im) {
  if (im.bit_depth != 8 && im.bit_depth != 16) {
    throw ValueError("png: rgb bit depth must be 8 or 16, got " + std::to_string(im.bit_depth));
  }
  const int maxval = im.bit_depth == 8 ? 255 : 65535;
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(im.height) * im.width * 3);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = quantize(im.values[static_cast<std::int64_t>(i)], maxval);
  }
  write_png_impl(path, samples, im.height, im.width, 3, im.bit_depth);
}

RgbImage read_rgb_png(const std::string& path) {
  std::vector<std::uint16_t> samples;
  int h, w, c, depth;
  read_png_impl(path, samples, h, w, c, depth);
  if (c != 3) throw IoError("png: expected 3 channels in " + path + ", got " + std::to_string(c));
  RgbImage im(h, w, depth);
  const double maxval = depth == 8 ? 255.0 : 65535.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    im.values[static_cast<std::int64_t>(i)] = samples[i] / maxval;
  }
  return im;
}

void write_gray16_png(const std::string& path, const Array& values, int height, int width) {
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(height) * width);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = quantize(values[static_cast<std::int64_t>(i)], 65535);
  }
  write_png_impl(path, samples, height, width, 1, 16);
}

void read_gray16_png(const std::string& path, Array& values, int& height, int& width) {
  std::vector<std::uint16_t> samples;
  int c, depth;
  read_png_impl(path, samples, height, width, c, depth);
  if (c != 1) throw IoError("png: expected single channel in " + path);
  const double maxval = depth == 8 ? 255.0 : 65535.0;
  values.resize(static_cast<std::int64_t>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    values[static_cast<std::int64_t>(i)] = samples[i] / maxval;
  }
}

void write_label_png(const std::string& path, const Eigen::ArrayXi& labels, int height,
                     int width) {
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(height) * width);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int v = labels[static_cast<std::int64_t>(i)];
    if (v < 0 || v > 255) throw ValueError("png: label out of byte range: " + std::to_string(v));
    samples[i] = static_cast<std::uint16_t>(v);
  }
  write_png_impl(path, samples, height, width, 1, 8);
}

void read_label_png(const std::string& path, Eigen::ArrayXi& labels, int& height, int& width) {
  std::vector<std::uint16_t> samples;
  int c, depth;
  read_png_impl(path, samples, height, width, c, depth);
  if (c != 1 || depth != 8) throw IoError("png: expected 8-bit single channel labels in " + path);
  labels.resize(static_cast<std::int64_t>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    labels[static_cast<std::int64_t>(i)] = samples[i];
  }
}

}  // namespace jdm
