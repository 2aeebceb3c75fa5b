#pragma once

#include "jdm/bilateral_grid.hpp"
#include "jdm/checkpoint.hpp"
#include "jdm/decomposition.hpp"
#include "jdm/spectral.hpp"

namespace jdm {

struct EnhanceConfig {
  int full = 64;    // full-resolution crop
  int lowres = 32;  // low-resolution stream input
  int grid_h = 8, grid_w = 8, depth = 8;
  int n_experts = 6;  // 1, 2, 4 or 6 semantic grid experts
  int base_channels = 8;
  int msi_bands = 10;
  int msi_hw = 16;
  double msi_window_lo = 400.0, msi_window_hi = 1000.0;  // spectral-range filter
  bool use_s = true, use_r = true, use_m = true;
  std::uint64_t seed = 1;
  double lr = 1e-3;
  int steps = 400;
  int batch = 4;

  int levels() const;  // strided stages from lowres down to grid resolution

  static EnhanceConfig paper();      // 512 / 256 / 16x16x8, lr 1e-4
  static EnhanceConfig toy();        // 64 / 32 / 8x8x8
  static EnhanceConfig gradcheck();  // 32 / 16 / 4x4x4, tiny widths
};

/// Category -> expert index for the 1/2/4/6-expert groupings.
std::array<int, kNumMaterialClasses> expert_grouping(int n_experts);

/// Area fraction of each expert's categories, normalized to sum 1.
std::vector<double> expert_weights(const MaterialSegmentation& m, int n_experts);

/// Cell-wise convex combination of equally sized grids.
BilateralGrid expert_mixture(const std::vector<BilateralGrid>& grids,
                             const std::vector<double>& weights);

struct ConvParam {
  Tensor w, b;
};

/// Q/K/V projections (depthwise 3x3 then pointwise 1x1), residual output
/// convs, and the learnable attention scale.
struct SpsaParams {
  ConvParam w3q, w1q, w3k, w1k, w3v, w1v;
  ConvParam w3hat_msi, w3_msi;
  ConvParam w3hat_rgb, w3_rgb;
  Tensor sigma;
};

/// Optional Eq.-7 style feature modulation applied to the Q and K branches.
struct SpsaModulation {
  Tensor alpha_q, beta_q, alpha_k, beta_k;  // (1,C,h,w) fields
};

struct SpsaResult {
  Tensor f_msi, f_rgb;
  Tensor attention;  // (C, C), rows sum to 1
};

/// One spectral perception self-attention block over a feature-map pair.
SpsaResult spsa_forward(const Tensor& f_msi, const Tensor& f_rgb, const SpsaParams& p,
                        const SpsaModulation* mod = nullptr);

struct EnhanceOutput {
  Tensor s_hat;      // (1,1,H,W)
  Tensor o_r;        // (1,3,H,W) before recomposition
  Tensor guidance;   // (1,1,H,W)
  Tensor attention;  // last spectral perception map of the forward
  std::vector<Tensor> attention_maps;
  std::vector<double> weights;  // expert mixture weights
  Tensor final;      // (1,3,H,W) == clamp(o_r * s_hat, 0, 1)
};

struct EnhanceSample {
  RgbImage input16;
  LrMsi msi;
  ShadingMap shading;
  MaterialSegmentation seg;
  RgbImage target8;
};

class EnhanceNet {
 public:
  explicit EnhanceNet(const EnhanceConfig& config);

  EnhanceOutput forward(const RgbImage& rgb16, const LrMsi& msi, const ShadingMap& s,
                        const MaterialSegmentation& m) const;

  /// Forces the mixture onto one expert (weight 1), bypassing Eq.-8 gating.
  EnhanceOutput forward_single_expert(const RgbImage& rgb16, const LrMsi& msi,
                                      const ShadingMap& s, const MaterialSegmentation& m,
                                      int expert) const;

  /// Localized brightness adaptation: S_hat = max(softplus(z + net(s)), 1e-4)
  /// where z is the inverse softplus of s; identity at initialization.
  Tensor brightness_adapt(const Tensor& s) const;

  /// Reconfigures every grid head to emit the identity affine transform.
  void set_identity_grid_heads();

  ParamMap named_params() const;
  std::vector<Tensor> param_list() const;
  const EnhanceConfig& config() const { return config_; }

 private:
  struct ModulationGen {
    ConvParam map1, map2, map3, map4;        // psi mapping: conv,conv,deconv,deconv
    ConvParam q_hidden, q_alpha, q_beta;     // alpha/beta generators (zero-init heads)
    ConvParam k_hidden, k_alpha, k_beta;
  };
  struct Level {
    ConvParam conv_msi, conv_rgb;
    SpsaParams spsa;
    std::vector<ModulationGen> experts;
  };

  EnhanceConfig config_;
  ConvParam adapt_c1_, adapt_c2_, adapt_d1_, adapt_d2_;
  Tensor adapt_gain_;  // scalar on the inverse-softplus skip; 1 at init
  std::vector<Level> levels_;
  ConvParam fuse_;
  std::vector<ConvParam> grid_heads_;
  ConvParam guide_ccm_;
  Tensor guide_knots_;
  ConvParam guide_mix_;

  Tensor guidance(const Tensor& r_rgb_full) const;
  SpsaModulation make_modulation(const ModulationGen& gen, const Tensor& m_binary,
                                 int h, int w, int channels) const;
  Tensor expert_grid(const Tensor& r_msi_low, const Tensor& r_rgb_low,
                     const Tensor& m_binary, int expert,
                     std::vector<Tensor>* attention_sink) const;
  EnhanceOutput forward_impl(const RgbImage& rgb16, const LrMsi& msi, const ShadingMap& s,
                             const MaterialSegmentation& m, int forced_expert) const;
};

struct EnhanceTrainStats {
  std::vector<double> losses;
};

EnhanceNet train_enhancement(const std::vector<EnhanceSample>& dataset,
                             const EnhanceConfig& config,
                             EnhanceTrainStats* stats = nullptr);

/// Mean held-out PSNR of the network over `samples`.
double evaluate_psnr(const EnhanceNet& net, const std::vector<EnhanceSample>& samples);

}  // namespace jdm
