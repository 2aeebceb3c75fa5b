#include "jdm/bilateral_grid.hpp"

#include <algorithm>
#include <cmath>

namespace jdm {

BilateralGrid BilateralGrid::constant(int gh, int gw, int d, const double matrix[12]) {
  BilateralGrid g(gh, gw, d);
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < gw; ++x)
      for (int m = 0; m < 12; ++m)
        for (int z = 0; z < d; ++z) g.cell(y, x, m, z) = matrix[m];
  return g;
}

BilateralGrid BilateralGrid::identity(int gh, int gw, int d) {
  const double eye[12] = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  return constant(gh, gw, d, eye);
}

Tensor grid_to_tensor(const BilateralGrid& grid) {
  Array d(grid.cells.size());
  const int gh = grid.grid_h, gw = grid.grid_w, dep = grid.depth;
  for (int m = 0; m < 12; ++m)
    for (int z = 0; z < dep; ++z)
      for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
          d[((static_cast<std::int64_t>(m) * dep + z) * gh + y) * gw + x] = grid.cell(y, x, m, z);
        }
  return Tensor::from_array({12, dep, gh, gw}, std::move(d));
}

BilateralGrid grid_from_tensor(const Tensor& t) {
  if (t.rank() != 4 || t.dim(0) != 12) {
    throw ShapeError("grid_from_tensor: expected (12, depth, gh, gw), got " +
                     shape_str(t.shape()));
  }
  BilateralGrid grid(t.dim(2), t.dim(3), t.dim(1));
  const int gh = grid.grid_h, gw = grid.grid_w, dep = grid.depth;
  for (int m = 0; m < 12; ++m)
    for (int z = 0; z < dep; ++z)
      for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
          grid.cell(y, x, m, z) = t.data()[((static_cast<std::int64_t>(m) * dep + z) * gh + y) * gw + x];
        }
  return grid;
}

GuideParams::GuideParams() {
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 16; ++k) knots(c, k) = k / 15.0;
}

namespace {

double pwl_eval(const double* knots, int n_knots, double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * (n_knots - 1);
  int i = std::min(static_cast<int>(std::floor(pos)), n_knots - 2);
  const double f = pos - i;
  return knots[i] + f * (knots[i + 1] - knots[i]);
}

struct Taps {
  int lo, hi;
  double f;
};

inline Taps make_taps(double coord, int extent) {
  const double fl = std::floor(coord);
  Taps t;
  t.f = coord - fl;
  const int i = static_cast<int>(fl);
  t.lo = std::clamp(i, 0, extent - 1);
  t.hi = std::clamp(i + 1, 0, extent - 1);
  return t;
}

inline double lerp(double a, double b, double f) { return a + f * (b - a); }

}  // namespace

Array guidance_eval(const Image& rgb, const GuideParams& params) {
  if (rgb.channels != 3) throw ShapeError("guidance_eval: image must have 3 channels");
  Array g(static_cast<std::int64_t>(rgb.height) * rgb.width);
  for (std::int64_t p = 0; p < g.size(); ++p) {
    double v[3];
    for (int c = 0; c < 3; ++c) {
      v[c] = params.ccm(c, 0) * rgb.values[p * 3] + params.ccm(c, 1) * rgb.values[p * 3 + 1] +
             params.ccm(c, 2) * rgb.values[p * 3 + 2] + params.ccm_bias[c];
    }
    double acc = params.mixer_bias;
    for (int c = 0; c < 3; ++c) {
      acc += params.mixer[c] * pwl_eval(params.knots.row(c).data(), 16, v[c]);
    }
    g[p] = std::clamp(acc, 0.0, 1.0);
  }
  return g;
}

AffineCoeffField slice_grid(const BilateralGrid& grid, const Array& guidance, int height,
                            int width) {
  if (guidance.size() != static_cast<std::int64_t>(height) * width) {
    throw ShapeError("slice_grid: guidance length does not match output dimensions");
  }
  AffineCoeffField out(height, width);
  const double sx = static_cast<double>(grid.grid_w) / width;
  const double sy = static_cast<double>(grid.grid_h) / height;
  const int dep = grid.depth;
  for (int y = 0; y < height; ++y) {
    const Taps ty = make_taps((y + 0.5) * sy - 0.5, grid.grid_h);
    for (int x = 0; x < width; ++x) {
      const Taps tx = make_taps((x + 0.5) * sx - 0.5, grid.grid_w);
      const std::int64_t p = static_cast<std::int64_t>(y) * width + x;
      const Taps tz = make_taps(guidance[p] * dep - 0.5, dep);
      const double* c00 = &grid.cells[((static_cast<std::int64_t>(ty.lo) * grid.grid_w + tx.lo) * 12) * dep];
      const double* c01 = &grid.cells[((static_cast<std::int64_t>(ty.lo) * grid.grid_w + tx.hi) * 12) * dep];
      const double* c10 = &grid.cells[((static_cast<std::int64_t>(ty.hi) * grid.grid_w + tx.lo) * 12) * dep];
      const double* c11 = &grid.cells[((static_cast<std::int64_t>(ty.hi) * grid.grid_w + tx.hi) * 12) * dep];
      for (int m = 0; m < 12; ++m) {
        const std::int64_t zo = static_cast<std::int64_t>(m) * dep;
        const double v00 = lerp(c00[zo + tz.lo], c00[zo + tz.hi], tz.f);
        const double v01 = lerp(c01[zo + tz.lo], c01[zo + tz.hi], tz.f);
        const double v10 = lerp(c10[zo + tz.lo], c10[zo + tz.hi], tz.f);
        const double v11 = lerp(c11[zo + tz.lo], c11[zo + tz.hi], tz.f);
        out.coeffs[p * 12 + m] = lerp(lerp(v00, v01, tx.f), lerp(v10, v11, tx.f), ty.f);
      }
    }
  }
  return out;
}

AffineCoeffField slice_oracle_dense(const BilateralGrid& grid, const Array& guidance,
                                    int height, int width) {
  if (guidance.size() != static_cast<std::int64_t>(height) * width) {
    throw ShapeError("slice_oracle_dense: guidance length does not match output dimensions");
  }
  AffineCoeffField out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::int64_t p = static_cast<std::int64_t>(y) * width + x;
      const double cy = (y + 0.5) * grid.grid_h / static_cast<double>(height) - 0.5;
      const double cx = (x + 0.5) * grid.grid_w / static_cast<double>(width) - 0.5;
      const double cz = guidance[p] * grid.depth - 0.5;
      const int y0 = static_cast<int>(std::floor(cy));
      const int x0 = static_cast<int>(std::floor(cx));
      const int z0 = static_cast<int>(std::floor(cz));
      const double fy = cy - y0, fx = cx - x0, fz = cz - z0;
      for (int m = 0; m < 12; ++m) {
        double acc = 0.0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            for (int dz = 0; dz < 2; ++dz) {
              const double w = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx) * (dz ? fz : 1.0 - fz);
              const int yy = std::clamp(y0 + dy, 0, grid.grid_h - 1);
              const int xx = std::clamp(x0 + dx, 0, grid.grid_w - 1);
              const int zz = std::clamp(z0 + dz, 0, grid.depth - 1);
              acc += w * grid.cell(yy, xx, m, zz);
            }
          }
        }
        out.coeffs[p * 12 + m] = acc;
      }
    }
  }
  return out;
}

Image apply_affine(const Image& rgb, const AffineCoeffField& coeffs) {
  if (rgb.channels != 3) throw ShapeError("apply_affine: image must have 3 channels");
  if (rgb.height != coeffs.height || rgb.width != coeffs.width) {
    throw ShapeError("apply_affine: image " + std::to_string(rgb.height) + "x" +
                     std::to_string(rgb.width) + " vs coefficients " +
                     std::to_string(coeffs.height) + "x" + std::to_string(coeffs.width));
  }
  Image out(rgb.height, rgb.width, 3);
  for (std::int64_t p = 0; p < rgb.pixels(); ++p) {
    const double* a = &coeffs.coeffs[p * 12];
    const double r = rgb.values[p * 3], g = rgb.values[p * 3 + 1], b = rgb.values[p * 3 + 2];
    for (int c = 0; c < 3; ++c) {
      out.values[p * 3 + c] = a[c * 4] * r + a[c * 4 + 1] * g + a[c * 4 + 2] * b + a[c * 4 + 3];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// differentiable wrappers
// ---------------------------------------------------------------------------

Tensor op_slice_grid(const Tensor& grid, const Tensor& guidance) {
  if (grid.rank() != 4 || grid.dim(0) != 12) {
    throw ShapeError("op_slice_grid: grid must be (12, depth, gh, gw), got " +
                     shape_str(grid.shape()));
  }
  if (guidance.rank() != 4 || guidance.dim(0) != 1 || guidance.dim(1) != 1) {
    throw ShapeError("op_slice_grid: guidance must be (1,1,H,W), got " +
                     shape_str(guidance.shape()));
  }
  const int dep = grid.dim(1), gh = grid.dim(2), gw = grid.dim(3);
  const int H = guidance.dim(2), W = guidance.dim(3);
  BilateralGrid bg = grid_from_tensor(grid);
  AffineCoeffField field = slice_grid(bg, guidance.data(), H, W);

  // channel-first output (1,12,H,W)
  Array d(static_cast<std::int64_t>(12) * H * W);
  for (int m = 0; m < 12; ++m) {
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(H) * W; ++p) {
      d[m * static_cast<std::int64_t>(H) * W + p] = field.coeffs[p * 12 + m];
    }
  }
  return make_op(
      {1, 12, H, W}, std::move(d), {grid, guidance}, [=](detail::Node& nd) {
        detail::Node* pg = nd.parents[0].get();
        detail::Node* pu = nd.parents[1].get();
        const double sx = static_cast<double>(gw) / W;
        const double sy = static_cast<double>(gh) / H;
        Array ggrid;  // tensor layout (12, dep, gh, gw)
        if (pg->requires_grad) ggrid = Array::Zero(pg->data.size());
        Array gguid;
        if (pu->requires_grad) gguid = Array::Zero(pu->data.size());
        const std::int64_t hw = static_cast<std::int64_t>(H) * W;
        for (int y = 0; y < H; ++y) {
          const Taps ty = make_taps((y + 0.5) * sy - 0.5, gh);
          for (int x = 0; x < W; ++x) {
            const Taps tx = make_taps((x + 0.5) * sx - 0.5, gw);
            const std::int64_t p = static_cast<std::int64_t>(y) * W + x;
            const Taps tz = make_taps(pu->data[p] * dep - 0.5, dep);
            const double wy[2] = {1.0 - ty.f, ty.f};
            const double wx[2] = {1.0 - tx.f, tx.f};
            const double wz[2] = {1.0 - tz.f, tz.f};
            const int iy[2] = {ty.lo, ty.hi};
            const int ix[2] = {tx.lo, tx.hi};
            const int iz[2] = {tz.lo, tz.hi};
            double dguide = 0.0;
            for (int m = 0; m < 12; ++m) {
              const double go = nd.grad[m * hw + p];
              if (go == 0.0) continue;
              for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                  const double wxy = wy[a] * wx[b];
                  const std::int64_t base =
                      (static_cast<std::int64_t>(m) * dep) * gh * gw;
                  const std::int64_t cell_lo =
                      base + static_cast<std::int64_t>(iz[0]) * gh * gw + iy[a] * gw + ix[b];
                  const std::int64_t cell_hi =
                      base + static_cast<std::int64_t>(iz[1]) * gh * gw + iy[a] * gw + ix[b];
                  if (pg->requires_grad) {
                    ggrid[cell_lo] += go * wxy * wz[0];
                    ggrid[cell_hi] += go * wxy * wz[1];
                  }
                  if (pu->requires_grad) {
                    dguide += go * wxy * (pg->data[cell_hi] - pg->data[cell_lo]);
                  }
                }
            }
            if (pu->requires_grad) gguid[p] += dguide * dep;
          }
        }
        if (pg->requires_grad) pg->accumulate(ggrid);
        if (pu->requires_grad) pu->accumulate(gguid);
      });
}

Tensor op_apply_affine(const Tensor& image, const Tensor& coeffs) {
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3) {
    throw ShapeError("op_apply_affine: image must be (1,3,H,W), got " + shape_str(image.shape()));
  }
  if (coeffs.rank() != 4 || coeffs.dim(0) != 1 || coeffs.dim(1) != 12 ||
      coeffs.dim(2) != image.dim(2) || coeffs.dim(3) != image.dim(3)) {
    throw ShapeError("op_apply_affine: coefficients must be (1,12,H,W) matching image, got " +
                     shape_str(coeffs.shape()));
  }
  const int H = image.dim(2), W = image.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  Array d(static_cast<std::int64_t>(3) * hw);
  const double* iv = image.data().data();
  const double* cv = coeffs.data().data();
  for (std::int64_t p = 0; p < hw; ++p) {
    for (int c = 0; c < 3; ++c) {
      d[c * hw + p] = cv[(c * 4) * hw + p] * iv[p] + cv[(c * 4 + 1) * hw + p] * iv[hw + p] +
                      cv[(c * 4 + 2) * hw + p] * iv[2 * hw + p] + cv[(c * 4 + 3) * hw + p];
    }
  }
  return make_op({1, 3, H, W}, std::move(d), {image, coeffs}, [hw](detail::Node& nd) {
    detail::Node* pi = nd.parents[0].get();
    detail::Node* pc = nd.parents[1].get();
    if (pi->requires_grad) {
      Array gi = Array::Zero(pi->data.size());
      for (std::int64_t p = 0; p < hw; ++p) {
        for (int c = 0; c < 3; ++c) {
          const double go = nd.grad[c * hw + p];
          for (int j = 0; j < 3; ++j) {
            gi[j * hw + p] += go * pc->data[(c * 4 + j) * hw + p];
          }
        }
      }
      pi->accumulate(gi);
    }
    if (pc->requires_grad) {
      Array gc = Array::Zero(pc->data.size());
      for (std::int64_t p = 0; p < hw; ++p) {
        for (int c = 0; c < 3; ++c) {
          const double go = nd.grad[c * hw + p];
          for (int j = 0; j < 3; ++j) {
            gc[(c * 4 + j) * hw + p] += go * pi->data[j * hw + p];
          }
          gc[(c * 4 + 3) * hw + p] += go;
        }
      }
      pc->accumulate(gc);
    }
  });
}

Tensor op_pwl(const Tensor& x, const Tensor& knots) {
  if (x.rank() != 4 || knots.rank() != 2 || knots.dim(0) != x.dim(1)) {
    throw ShapeError("op_pwl: expected x (1,C,H,W) and knots (C,K)");
  }
  const int C = x.dim(1), H = x.dim(2), W = x.dim(3), K = knots.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  Array d(x.size());
  for (int c = 0; c < C; ++c) {
    const double* kn = knots.data().data() + static_cast<std::int64_t>(c) * K;
    for (std::int64_t p = 0; p < hw; ++p) {
      d[c * hw + p] = pwl_eval(kn, K, x.data()[c * hw + p]);
    }
  }
  return make_op({1, C, H, W}, std::move(d), {x, knots}, [C, hw, K](detail::Node& nd) {
    detail::Node* px = nd.parents[0].get();
    detail::Node* pk = nd.parents[1].get();
    Array gx;
    if (px->requires_grad) gx = Array::Zero(px->data.size());
    Array gk;
    if (pk->requires_grad) gk = Array::Zero(pk->data.size());
    for (int c = 0; c < C; ++c) {
      const double* kn = pk->data.data() + static_cast<std::int64_t>(c) * K;
      for (std::int64_t p = 0; p < hw; ++p) {
        const double go = nd.grad[c * hw + p];
        if (go == 0.0) continue;
        const double raw = px->data[c * hw + p];
        const double t = std::clamp(raw, 0.0, 1.0);
        const double pos = t * (K - 1);
        const int i = std::min(static_cast<int>(std::floor(pos)), K - 2);
        const double f = pos - i;
        if (px->requires_grad && raw > 0.0 && raw < 1.0) {
          gx[c * hw + p] += go * (kn[i + 1] - kn[i]) * (K - 1);
        }
        if (pk->requires_grad) {
          gk[c * static_cast<std::int64_t>(K) + i] += go * (1.0 - f);
          gk[c * static_cast<std::int64_t>(K) + i + 1] += go * f;
        }
      }
    }
    if (px->requires_grad) px->accumulate(gx);
    if (pk->requires_grad) pk->accumulate(gk);
  });
}

}  // namespace jdm
