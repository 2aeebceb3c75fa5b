#pragma once

#include "jdm/checkpoint.hpp"
#include "jdm/spectral.hpp"

namespace jdm {

/// Shading quantized to 8 brightness levels over equal-width bins on [0,1].
struct ShadingClassMap {
  int height = 0;
  int width = 0;
  int levels = 8;
  Eigen::ArrayXi labels;           // h*w in {0..levels-1}
  std::vector<double> bin_edges;   // levels+1 ascending edges
};

/// Per-pixel mean over channels with wavelength in [850, 1000] nm,
/// max-normalized, floored at 1e-4.
ShadingMap estimate_shading_nir(const SpectralCube& cube);

ShadingClassMap quantize_shading(const ShadingMap& s, int levels = kNumShadingLevels);
ShadingMap dequantize_shading(const ShadingClassMap& c);

/// image / max(shading, eps), per channel.
Image retinex_reflectance(const Image& image, const ShadingMap& s, double eps = 1e-4);
LrMsi retinex_reflectance(const LrMsi& msi, const ShadingMap& s, double eps = 1e-4);

/// Pearson correlation between the luminance-histogram count vectors
/// (0.299R + 0.587G + 0.114B, `bins` equal bins over [0,1]).
double histogram_pearson(const RgbImage& a, const RgbImage& b, int bins = 256);

struct DecompConfig {
  int msi_bands = 10;
  int base_channels = 8;     // encoder widths base -> 2x -> 4x
  std::uint64_t seed = 1;
  double lr = 1e-4;
  int steps = 200;
  int batch = 4;
  bool use_msi = true;       // false zeroes the spectral feature branch
};

/// Toy joint RGB-Spectral decomposition network: two 3-level strided conv
/// encoders, concatenated features, two mirrored transposed-conv decoders
/// with material (6) and shading (8) logit heads at input resolution.
class DecompNet {
 public:
  explicit DecompNet(const DecompConfig& config);

  /// msi is bilinearly resized to the rgb resolution before encoding.
  /// Returns (material logits (1,6,H,W), shading logits (1,8,H,W)).
  std::pair<Tensor, Tensor> forward(const RgbImage& rgb, const LrMsi& msi) const;

  /// Tensor-level entry: x_rgb (1,3,H,W), x_msi (1,B,h,w) before the resize.
  std::pair<Tensor, Tensor> forward_tensors(const Tensor& x_rgb, const Tensor& x_msi) const;

  MaterialSegmentation predict_material(const RgbImage& rgb, const LrMsi& msi) const;
  ShadingClassMap predict_shading(const RgbImage& rgb, const LrMsi& msi) const;

  ParamMap named_params() const;
  std::vector<Tensor> param_list() const;
  const DecompConfig& config() const { return config_; }

 private:
  struct ConvBlock {
    Tensor w, b;
  };
  std::vector<ConvBlock> enc_rgb_, enc_spec_, dec_m_, dec_s_;
  ConvBlock head_m_, head_s_;
  DecompConfig config_;

  // all three encoder levels, shallow to deep
  std::vector<Tensor> encode(const std::vector<ConvBlock>& enc, const Tensor& x) const;
  // FCN-style decoding with encoder features concatenated at matching scales
  Tensor decode(const std::vector<ConvBlock>& dec, const ConvBlock& head,
                const std::vector<Tensor>& f_rgb, const std::vector<Tensor>& f_spec) const;
};

struct DecompSample {
  RgbImage rgb;
  LrMsi msi;
  MaterialSegmentation material_truth;
  ShadingClassMap shading_truth;
};

/// Mean pixel-wise cross-entropy of logits (1,C,H,W) against labels.
Tensor cross_entropy_mean(const Tensor& logits, const Eigen::ArrayXi& labels);

struct DecompTrainStats {
  std::vector<double> losses;
};

/// Minimizes the equally weighted sum of the two cross-entropies with Adam.
DecompNet train_decomposition(const std::vector<DecompSample>& dataset,
                              const DecompConfig& config,
                              DecompTrainStats* stats = nullptr);

/// Training-pixel accuracy of both heads on one sample.
std::pair<double, double> decomposition_accuracy(const DecompNet& net,
                                                 const DecompSample& sample);

}  // namespace jdm
