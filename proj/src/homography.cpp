#include "jdm/homography.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace jdm {

Homography Homography::inverse() const {
  const double det = m.determinant();
  if (std::abs(det) <= 1e-12) throw ValueError("homography: matrix is singular");
  Homography out;
  out.m = m.inverse();
  if (std::abs(out.m(2, 2)) > 1e-12) out.m /= out.m(2, 2);
  return out;
}

void Homography::apply(double x, double y, double& xo, double& yo) const {
  const double w = m(2, 0) * x + m(2, 1) * y + m(2, 2);
  xo = (m(0, 0) * x + m(0, 1) * y + m(0, 2)) / w;
  yo = (m(1, 0) * x + m(1, 1) * y + m(1, 2)) / w;
}

namespace {

struct Normalizer {
  double cx, cy, scale;
};

Normalizer normalizer_for(const std::vector<Correspondence>& pairs, bool source) {
  double cx = 0, cy = 0;
  for (const auto& p : pairs) {
    cx += source ? p.x1 : p.x2;
    cy += source ? p.y1 : p.y2;
  }
  cx /= static_cast<double>(pairs.size());
  cy /= static_cast<double>(pairs.size());
  double mean_dist = 0;
  for (const auto& p : pairs) {
    const double dx = (source ? p.x1 : p.x2) - cx;
    const double dy = (source ? p.y1 : p.y2) - cy;
    mean_dist += std::sqrt(dx * dx + dy * dy);
  }
  mean_dist /= static_cast<double>(pairs.size());
  const double scale = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  return {cx, cy, scale};
}

bool three_collinear(const std::vector<Correspondence>& pairs) {
  const std::size_t n = pairs.size();
  if (n > 16) return false;  // full triple check only at small sizes
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        const double ax = pairs[j].x1 - pairs[i].x1, ay = pairs[j].y1 - pairs[i].y1;
        const double bx = pairs[k].x1 - pairs[i].x1, by = pairs[k].y1 - pairs[i].y1;
        const double cross = ax * by - ay * bx;
        const double na = std::hypot(ax, ay), nb = std::hypot(bx, by);
        if (na < 1e-12 || nb < 1e-12 || std::abs(cross) < 1e-9 * na * nb) return true;
      }
  return false;
}

}  // namespace

Homography estimate_homography_dlt(const std::vector<Correspondence>& pairs) {
  if (pairs.size() < 4) {
    throw ValueError("homography: need at least 4 correspondences, got " +
                     std::to_string(pairs.size()));
  }
  if (three_collinear(pairs)) {
    throw ValueError("homography: degenerate configuration (collinear source points)");
  }
  const Normalizer ns = normalizer_for(pairs, true);
  const Normalizer nd = normalizer_for(pairs, false);

  Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
  for (const auto& p : pairs) {
    const double x = (p.x1 - ns.cx) * ns.scale;
    const double y = (p.y1 - ns.cy) * ns.scale;
    const double u = (p.x2 - nd.cx) * nd.scale;
    const double v = (p.y2 - nd.cy) * nd.scale;
    Eigen::Matrix<double, 9, 1> r1, r2;
    r1 << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    r2 << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    ata += r1 * r1.transpose() + r2 * r2.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> es(ata);
  if (es.info() != Eigen::Success) throw ValueError("homography: eigen solve failed");
  Eigen::Matrix<double, 9, 1> h = es.eigenvectors().col(0);  // smallest eigenvalue

  Eigen::Matrix3d hn;
  hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  // undo the normalizations: H = T_dst^-1 * Hn * T_src
  Eigen::Matrix3d t_src, t_dst;
  t_src << ns.scale, 0, -ns.scale * ns.cx, 0, ns.scale, -ns.scale * ns.cy, 0, 0, 1;
  t_dst << nd.scale, 0, -nd.scale * nd.cx, 0, nd.scale, -nd.scale * nd.cy, 0, 0, 1;
  Eigen::Matrix3d out = t_dst.inverse() * hn * t_src;
  if (std::abs(out(2, 2)) < 1e-12 || std::abs(out.determinant()) < 1e-12) {
    throw ValueError("homography: degenerate configuration (singular solution)");
  }
  Homography result;
  result.m = out / out(2, 2);
  return result;
}

Image warp_image(const Image& image, const Homography& h, int out_h, int out_w) {
  const Homography inv = h.inverse();
  Image out(out_h, out_w, image.channels);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double sx, sy;
      inv.apply(static_cast<double>(x), static_cast<double>(y), sx, sy);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < image.channels; ++c) {
        auto sample = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= image.height || xx < 0 || xx >= image.width) return 0.0;
          return image.at(yy, xx, c);
        };
        const double top = sample(y0, x0) + fx * (sample(y0, x0 + 1) - sample(y0, x0));
        const double bot = sample(y0 + 1, x0) + fx * (sample(y0 + 1, x0 + 1) - sample(y0 + 1, x0));
        out.at(y, x, c) = top + fy * (bot - top);
      }
    }
  }
  return out;
}

RgbImage warp_image(const RgbImage& image, const Homography& h, int out_h, int out_w) {
  Image warped = warp_image(image.as_image(), h, out_h, out_w);
  RgbImage out(out_h, out_w, image.bit_depth);
  out.values = warped.values.max(0.0).min(1.0);
  return out;
}

std::vector<Correspondence> load_correspondences(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("correspondences: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    throw IoError("correspondences: expected a JSON array in " + path);
  }
  std::vector<Correspondence> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 4) {
      throw IoError("correspondences: each entry must be [x1,y1,x2,y2] in " + path);
    }
    out.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>()});
  }
  return out;
}

}  // namespace jdm
