#include "jdm/image.hpp"

#include <algorithm>

namespace jdm {

namespace {

Tensor hwc_to_nchw(const Array& v, int h, int w, int c) {
  Array d(static_cast<std::int64_t>(h) * w * c);
  for (int ch = 0; ch < c; ++ch) {
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p) {
      d[ch * static_cast<std::int64_t>(h) * w + p] = v[p * c + ch];
    }
  }
  return Tensor::from_array({1, c, h, w}, std::move(d));
}

Array nchw_to_hwc(const Tensor& t) {
  const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
  Array v(static_cast<std::int64_t>(h) * w * c);
  for (int ch = 0; ch < c; ++ch) {
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p) {
      v[p * c + ch] = t.data()[ch * static_cast<std::int64_t>(h) * w + p];
    }
  }
  return v;
}

}  // namespace

Tensor image_to_tensor(const Image& im) {
  return hwc_to_nchw(im.values, im.height, im.width, im.channels);
}

Tensor rgb_to_tensor(const RgbImage& im) {
  return hwc_to_nchw(im.values, im.height, im.width, 3);
}

Tensor shading_to_tensor(const ShadingMap& s) {
  Array d = s.values;
  return Tensor::from_array({1, 1, s.height, s.width}, std::move(d));
}

Image tensor_to_image(const Tensor& t) {
  if (t.rank() != 4 || t.dim(0) != 1) {
    throw ShapeError("tensor_to_image: expected (1,C,H,W), got " + shape_str(t.shape()));
  }
  Image im(t.dim(2), t.dim(3), t.dim(1));
  im.values = nchw_to_hwc(t);
  return im;
}

RgbImage tensor_to_rgb(const Tensor& t, int bit_depth) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 3) {
    throw ShapeError("tensor_to_rgb: expected (1,3,H,W), got " + shape_str(t.shape()));
  }
  RgbImage im(t.dim(2), t.dim(3), bit_depth);
  im.values = nchw_to_hwc(t).max(0.0).min(1.0);
  return im;
}

ShadingMap tensor_to_shading(const Tensor& t) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 1) {
    throw ShapeError("tensor_to_shading: expected (1,1,H,W), got " + shape_str(t.shape()));
  }
  ShadingMap s(t.dim(2), t.dim(3));
  s.values = t.data();
  return s;
}

}  // namespace jdm
