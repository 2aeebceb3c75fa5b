#pragma once

#include <string>
#include <vector>

#include "jdm/image.hpp"

namespace jdm {

struct EvalReport {
  double psnr_db = 0.0;
  bool psnr_infinite = false;
  double ssim = 0.0;
  double delta_e = 0.0;
  std::vector<double> per_class_iou;  // NaN for classes absent from both maps
  double miou = 0.0;

  std::string to_json() const;
};

/// 10*log10(1 / MSE) over all channels of [0,1] images; identical images are
/// flagged infinite.
double psnr(const RgbImage& a, const RgbImage& b, bool* infinite = nullptr);

/// Mean local SSIM: 11x11 Gaussian window (std 1.5), K1=0.01, K2=0.03,
/// dynamic range 1, valid windows only, averaged over channels.
double ssim(const RgbImage& a, const RgbImage& b);

/// IEC 61966-2-1 inverse gamma, D65 linear-RGB -> XYZ, XYZ -> CIELAB.
void srgb_to_lab(double r, double g, double b, double& L, double& a_out, double& b_out);

/// Mean per-pixel CIE76 distance in Lab.
double delta_e(const RgbImage& a, const RgbImage& b);

/// Per-class IoU and mean; classes absent from both maps are excluded.
EvalReport miou(const MaterialSegmentation& pred, const MaterialSegmentation& gt,
                int n_classes);

/// Full report for an image pair plus optional segmentations.
EvalReport evaluate(const RgbImage& pred, const RgbImage& target,
                    const MaterialSegmentation* pred_seg = nullptr,
                    const MaterialSegmentation* gt_seg = nullptr,
                    int n_classes = kNumMaterialClasses);

}  // namespace jdm
