#include "jdm/metrics.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

namespace jdm {

namespace {

void check_same_dims(const RgbImage& a, const RgbImage& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(op) + ": image dimensions differ, " + std::to_string(a.height) +
                     "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width));
  }
}

// D65 sRGB matrix; white point is the matrix row sums so (1,1,1) maps to
// exactly L*=100, a*=b*=0.
constexpr double kM[3][3] = {{0.412456, 0.357576, 0.180437},
                             {0.212673, 0.715152, 0.072175},
                             {0.019334, 0.119192, 0.950304}};
constexpr double kXn = kM[0][0] + kM[0][1] + kM[0][2];
constexpr double kYn = kM[1][0] + kM[1][1] + kM[1][2];
constexpr double kZn = kM[2][0] + kM[2][1] + kM[2][2];

double inv_gamma(double c) {
  c = std::clamp(c, 0.0, 1.0);
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t)
                                   : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

double psnr(const RgbImage& a, const RgbImage& b, bool* infinite) {
  check_same_dims(a, b, "psnr");
  const double mse = (a.values - b.values).square().mean();
  if (infinite) *infinite = mse == 0.0;
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const RgbImage& a, const RgbImage& b) {
  check_same_dims(a, b, "ssim");
  constexpr int kWin = 11;
  if (a.height < kWin || a.width < kWin) {
    throw ShapeError("ssim: image smaller than the 11x11 window");
  }
  double window[kWin][kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    for (int j = 0; j < kWin; ++j) {
      const double dy = i - 5.0, dx = j - 5.0;
      window[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
      wsum += window[i][j];
    }
  }
  for (auto& row : window)
    for (double& w : row) w /= wsum;

  constexpr double c1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0.0;
    std::int64_t count = 0;
    for (int y = 0; y + kWin <= a.height; ++y) {
      for (int x = 0; x + kWin <= a.width; ++x) {
        double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
        for (int i = 0; i < kWin; ++i) {
          for (int j = 0; j < kWin; ++j) {
            const double w = window[i][j];
            const double pa = a.at(y + i, x + j, ch);
            const double pb = b.at(y + i, x + j, ch);
            ma += w * pa;
            mb += w * pb;
            va += w * pa * pa;
            vb += w * pb * pb;
            cov += w * pa * pb;
          }
        }
        va -= ma * ma;
        vb -= mb * mb;
        cov -= ma * mb;
        const double num = (2 * ma * mb + c1) * (2 * cov + c2);
        const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        acc += num / den;
        ++count;
      }
    }
    total += acc / static_cast<double>(count);
  }
  return total / 3.0;
}

void srgb_to_lab(double r, double g, double b, double& L, double& a_out, double& b_out) {
  const double rl = inv_gamma(r), gl = inv_gamma(g), bl = inv_gamma(b);
  const double x = kM[0][0] * rl + kM[0][1] * gl + kM[0][2] * bl;
  const double y = kM[1][0] * rl + kM[1][1] * gl + kM[1][2] * bl;
  const double z = kM[2][0] * rl + kM[2][1] * gl + kM[2][2] * bl;
  const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
  L = 116.0 * fy - 16.0;
  a_out = 500.0 * (fx - fy);
  b_out = 200.0 * (fy - fz);
}

double delta_e(const RgbImage& a, const RgbImage& b) {
  check_same_dims(a, b, "delta_e");
  double acc = 0.0;
  const std::int64_t n = static_cast<std::int64_t>(a.height) * a.width;
  for (std::int64_t p = 0; p < n; ++p) {
    double la, aa, ba, lb, ab, bb;
    srgb_to_lab(a.values[p * 3], a.values[p * 3 + 1], a.values[p * 3 + 2], la, aa, ba);
    srgb_to_lab(b.values[p * 3], b.values[p * 3 + 1], b.values[p * 3 + 2], lb, ab, bb);
    const double dl = la - lb, da = aa - ab, db = ba - bb;
    acc += std::sqrt(dl * dl + da * da + db * db);
  }
  return acc / static_cast<double>(n);
}

EvalReport miou(const MaterialSegmentation& pred, const MaterialSegmentation& gt,
                int n_classes) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("miou: segmentation dimensions differ");
  }
  std::vector<std::int64_t> tp(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::int64_t> fp(static_cast<std::size_t>(n_classes), 0);
  std::vector<std::int64_t> fn(static_cast<std::size_t>(n_classes), 0);
  for (std::int64_t i = 0; i < pred.labels.size(); ++i) {
    const int p = pred.labels[i], g = gt.labels[i];
    if (p < 0 || p >= n_classes || g < 0 || g >= n_classes) {
      throw ValueError("miou: label out of range: " + std::to_string(p < 0 || p >= n_classes ? p : g));
    }
    if (p == g) {
      tp[static_cast<std::size_t>(p)]++;
    } else {
      fp[static_cast<std::size_t>(p)]++;
      fn[static_cast<std::size_t>(g)]++;
    }
  }
  EvalReport rep;
  double acc = 0.0;
  int valid = 0;
  for (int c = 0; c < n_classes; ++c) {
    const std::int64_t denom = tp[static_cast<std::size_t>(c)] + fp[static_cast<std::size_t>(c)] +
                               fn[static_cast<std::size_t>(c)];
    if (denom == 0) {
      rep.per_class_iou.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double iou = static_cast<double>(tp[static_cast<std::size_t>(c)]) /
                       static_cast<double>(denom);
    rep.per_class_iou.push_back(iou);
    acc += iou;
    ++valid;
  }
  rep.miou = valid > 0 ? acc / valid : 0.0;
  return rep;
}

EvalReport evaluate(const RgbImage& pred, const RgbImage& target,
                    const MaterialSegmentation* pred_seg, const MaterialSegmentation* gt_seg,
                    int n_classes) {
  EvalReport rep;
  rep.psnr_db = psnr(pred, target, &rep.psnr_infinite);
  rep.ssim = ssim(pred, target);
  rep.delta_e = delta_e(pred, target);
  if (pred_seg && gt_seg) {
    EvalReport seg = miou(*pred_seg, *gt_seg, n_classes);
    rep.per_class_iou = seg.per_class_iou;
    rep.miou = seg.miou;
  }
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  if (psnr_infinite) {
    j["psnr_db"] = nullptr;
  } else {
    j["psnr_db"] = psnr_db;
  }
  j["psnr_infinite"] = psnr_infinite;
  j["ssim"] = ssim;
  j["delta_e"] = delta_e;
  if (!per_class_iou.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (double v : per_class_iou) {
      if (std::isnan(v)) arr.push_back(nullptr);
      else arr.push_back(v);
    }
    j["per_class_iou"] = arr;
    j["miou"] = miou;
  }
  return j.dump(2);
}

}  // namespace jdm
