#include "jdm/enhancement.hpp"

#include <algorithm>
#include <cmath>

#include "jdm/metrics.hpp"
#include "jdm/optim.hpp"

namespace jdm {

int EnhanceConfig::levels() const {
  int n = 0;
  int r = lowres;
  while (r > grid_h) {
    if (r % 2 != 0) throw ValueError("enhancement: lowres must halve down to the grid size");
    r /= 2;
    ++n;
  }
  if (r != grid_h) throw ValueError("enhancement: lowres / grid must be a power of two");
  return n;
}

EnhanceConfig EnhanceConfig::paper() {
  EnhanceConfig c;
  c.full = 512;
  c.lowres = 256;
  c.grid_h = c.grid_w = 16;
  c.depth = 8;
  c.n_experts = 6;
  c.base_channels = 8;
  c.lr = 1e-4;
  c.batch = 4;
  c.steps = 20000;
  return c;
}

EnhanceConfig EnhanceConfig::toy() { return EnhanceConfig{}; }

EnhanceConfig EnhanceConfig::gradcheck() {
  EnhanceConfig c;
  c.full = 32;
  c.lowres = 16;
  c.grid_h = c.grid_w = 4;
  c.depth = 4;
  c.n_experts = 1;
  c.base_channels = 2;
  c.msi_hw = 8;
  return c;
}

std::array<int, kNumMaterialClasses> expert_grouping(int n_experts) {
  // categories: 0=building 1=plant 2=sky 3=trunk 4=road 5=others
  switch (n_experts) {
    case 1:
      return {0, 0, 0, 0, 0, 0};
    case 2:
      // {sky, plant, trunk} vs {building, road, others}
      return {1, 0, 0, 0, 1, 1};
    case 4:
      // {plant, trunk}, {building, road}, {sky}, {others}
      return {1, 0, 2, 0, 1, 3};
    case 6:
      return {0, 1, 2, 3, 4, 5};
    default:
      throw ValueError("expert_grouping: n_experts must be one of 1, 2, 4, 6");
  }
}

std::vector<double> expert_weights(const MaterialSegmentation& m, int n_experts) {
  if (m.labels.size() == 0) throw ValueError("expert_weights: empty segmentation");
  const auto group = expert_grouping(n_experts);
  std::vector<double> w(static_cast<std::size_t>(n_experts), 0.0);
  for (std::int64_t p = 0; p < m.labels.size(); ++p) {
    const int cat = m.labels[p];
    if (cat < 0 || cat >= kNumMaterialClasses) {
      throw ValueError("expert_weights: label " + std::to_string(cat) + " out of range");
    }
    w[static_cast<std::size_t>(group[static_cast<std::size_t>(cat)])] += 1.0;
  }
  const double total = static_cast<double>(m.labels.size());
  for (double& v : w) v /= total;
  return w;
}

BilateralGrid expert_mixture(const std::vector<BilateralGrid>& grids,
                             const std::vector<double>& weights) {
  if (grids.empty() || grids.size() != weights.size()) {
    throw ShapeError("expert_mixture: grid count " + std::to_string(grids.size()) +
                     " != weight count " + std::to_string(weights.size()));
  }
  BilateralGrid out(grids[0].grid_h, grids[0].grid_w, grids[0].depth);
  for (std::size_t i = 0; i < grids.size(); ++i) {
    if (grids[i].grid_h != out.grid_h || grids[i].grid_w != out.grid_w ||
        grids[i].depth != out.depth) {
      throw ShapeError("expert_mixture: grid dimensions differ at expert " + std::to_string(i));
    }
    out.cells += weights[i] * grids[i].cells;
  }
  return out;
}

// ---------------------------------------------------------------------------
// SPSA
// ---------------------------------------------------------------------------

SpsaResult spsa_forward(const Tensor& f_msi, const Tensor& f_rgb, const SpsaParams& p,
                        const SpsaModulation* mod) {
  if (f_msi.dim(2) != f_rgb.dim(2) || f_msi.dim(3) != f_rgb.dim(3)) {
    throw ShapeError("spsa_forward: feature maps must share spatial dimensions, got " +
                     shape_str(f_msi.shape()) + " vs " + shape_str(f_rgb.shape()));
  }
  Tensor f_r = concat({f_msi, f_rgb}, 1);
  const int C = f_r.dim(1), h = f_r.dim(2), w = f_r.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;

  // depthwise 3x3 first, then pointwise 1x1
  Tensor q = conv2d(conv2d(f_r, p.w3q.w, p.w3q.b, 1, 1, C), p.w1q.w, p.w1q.b, 1, 0);
  Tensor k = conv2d(conv2d(f_r, p.w3k.w, p.w3k.b, 1, 1, C), p.w1k.w, p.w1k.b, 1, 0);
  Tensor v = conv2d(conv2d(f_r, p.w3v.w, p.w3v.b, 1, 1, C), p.w1v.w, p.w1v.b, 1, 0);

  if (mod) {
    q = add(mul(add(Tensor::scalar(1.0), mod->alpha_q), q), mod->beta_q);
    k = add(mul(add(Tensor::scalar(1.0), mod->alpha_k), k), mod->beta_k);
  }

  Tensor q2 = reshape(q, {C, static_cast<int>(hw)});
  Tensor k2 = reshape(k, {C, static_cast<int>(hw)});
  Tensor v2 = reshape(v, {C, static_cast<int>(hw)});

  Tensor a = softmax(mul(matmul(k2, q2, false, true), p.sigma), -1);
  // row-stochastic contract, checked on every forward
  for (int r = 0; r < C; ++r) {
    double s = 0.0;
    for (int c = 0; c < C; ++c) s += a.data()[r * C + c];
    if (std::abs(s - 1.0) > 1e-6) {
      throw ValueError("spsa_forward: attention row " + std::to_string(r) +
                       " is not stochastic (sum " + std::to_string(s) + ")");
    }
  }

  // (V^ . A)^T = A^T V^T, kept channel-major for the conv that follows
  Tensor attn = reshape(matmul(a, v2, true, false), {1, C, h, w});

  SpsaResult out;
  out.attention = a;
  out.f_msi = add(conv2d(attn, p.w3hat_msi.w, p.w3hat_msi.b, 1, 1),
                  conv2d(f_msi, p.w3_msi.w, p.w3_msi.b, 1, 1));
  out.f_rgb = add(conv2d(attn, p.w3hat_rgb.w, p.w3hat_rgb.b, 1, 1),
                  conv2d(f_rgb, p.w3_rgb.w, p.w3_rgb.b, 1, 1));
  return out;
}

// ---------------------------------------------------------------------------
// EnhanceNet
// ---------------------------------------------------------------------------

namespace {

Tensor msi_tensor(const LrMsi& msi) {
  const int B = msi.bands();
  Array d(static_cast<std::int64_t>(msi.height) * msi.width * B);
  for (int b = 0; b < B; ++b) {
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(msi.height) * msi.width; ++p) {
      d[b * static_cast<std::int64_t>(msi.height) * msi.width + p] = msi.values[p * B + b];
    }
  }
  return Tensor::from_array({1, B, msi.height, msi.width}, std::move(d));
}

ConvParam make_conv(int out, int in, int k, RandomStream& rng) {
  ConvParam p;
  p.w = glorot_uniform({out, in, k, k}, in * k * k, out * k * k, rng);
  p.b = Tensor::zeros({out}, true);
  return p;
}

ConvParam make_tconv(int in, int out, int k, RandomStream& rng) {
  ConvParam p;
  p.w = glorot_uniform({in, out, k, k}, in * k * k, out * k * k, rng);
  p.b = Tensor::zeros({out}, true);
  return p;
}

ConvParam make_zero_conv(int out, int in, int k) {
  ConvParam p;
  p.w = Tensor::zeros({out, in, k, k}, true);
  p.b = Tensor::zeros({out}, true);
  return p;
}

ConvParam make_zero_tconv(int in, int out, int k) {
  ConvParam p;
  p.w = Tensor::zeros({in, out, k, k}, true);
  p.b = Tensor::zeros({out}, true);
  return p;
}

ConvParam make_depthwise(int channels, RandomStream& rng) {
  ConvParam p;
  p.w = glorot_uniform({channels, 1, 3, 3}, 9, 9, rng);
  p.b = Tensor::zeros({channels}, true);
  return p;
}

Array inv_softplus(const Array& s) {
  Array z(s.size());
  for (std::int64_t i = 0; i < s.size(); ++i) {
    z[i] = std::log(std::expm1(std::max(s[i], 1e-6)));
  }
  return z;
}

}  // namespace

EnhanceNet::EnhanceNet(const EnhanceConfig& config) : config_(config) {
  RandomStream rng(config.seed);
  const int n_levels = config.levels();
  const int adapt_ch = std::max(4, config.base_channels);

  adapt_c1_ = make_conv(adapt_ch, 1, 3, rng);
  adapt_c2_ = make_conv(adapt_ch, adapt_ch, 3, rng);
  adapt_d1_ = make_tconv(adapt_ch, adapt_ch, 4, rng);
  adapt_d2_ = make_zero_tconv(adapt_ch, 1, 4);  // identity at init via the softplus skip
  adapt_gain_ = Tensor::scalar(1.0, true);      // global exponent-like control

  const int n_experts = config.use_m ? config.n_experts : 1;
  int in_msi = config.msi_bands, in_rgb = 3;
  for (int l = 0; l < n_levels; ++l) {
    Level level;
    const int c = config.base_channels << l;
    const int C = 2 * c;
    level.conv_msi = make_conv(c, in_msi, 3, rng);
    level.conv_rgb = make_conv(c, in_rgb, 3, rng);
    level.spsa.w3q = make_depthwise(C, rng);
    level.spsa.w1q = make_conv(C, C, 1, rng);
    level.spsa.w3k = make_depthwise(C, rng);
    level.spsa.w1k = make_conv(C, C, 1, rng);
    level.spsa.w3v = make_depthwise(C, rng);
    level.spsa.w1v = make_conv(C, C, 1, rng);
    level.spsa.w3hat_msi = make_zero_conv(c, C, 3);
    level.spsa.w3_msi = make_conv(c, c, 3, rng);
    level.spsa.w3hat_rgb = make_zero_conv(c, C, 3);
    level.spsa.w3_rgb = make_conv(c, c, 3, rng);
    level.spsa.sigma = Tensor::scalar(1.0 / std::sqrt(static_cast<double>(C)), true);
    for (int e = 0; e < n_experts; ++e) {
      ModulationGen gen;
      gen.map1 = make_conv(4, 1, 3, rng);
      gen.map2 = make_conv(4, 4, 3, rng);
      gen.map3 = make_tconv(4, 4, 4, rng);
      gen.map4 = make_tconv(4, 1, 4, rng);
      gen.q_hidden = make_conv(C, 1, 3, rng);
      gen.q_alpha = make_zero_conv(C, C, 3);
      gen.q_beta = make_zero_conv(C, C, 3);
      gen.k_hidden = make_conv(C, 1, 3, rng);
      gen.k_alpha = make_zero_conv(C, C, 3);
      gen.k_beta = make_zero_conv(C, C, 3);
      level.experts.push_back(std::move(gen));
    }
    levels_.push_back(std::move(level));
    in_msi = c;
    in_rgb = c;
  }

  const int c_last = config.base_channels << (n_levels - 1);
  const int fused_ch = 2 * c_last;
  fuse_ = make_conv(fused_ch, 2 * c_last, 1, rng);
  for (int e = 0; e < n_experts; ++e) {
    grid_heads_.push_back(make_zero_conv(12 * config.depth, fused_ch, 1));
  }
  set_identity_grid_heads();

  guide_ccm_ = make_zero_conv(3, 3, 1);
  for (int i = 0; i < 3; ++i) guide_ccm_.w.raw()[i * 3 + i] = 1.0;
  guide_knots_ = Tensor::zeros({3, 16}, true);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 16; ++k) guide_knots_.raw()[c * 16 + k] = k / 15.0;
  guide_mix_ = make_zero_conv(1, 3, 1);
  for (int i = 0; i < 3; ++i) guide_mix_.w.raw()[i] = 1.0 / 3.0;
}

void EnhanceNet::set_identity_grid_heads() {
  for (auto& head : grid_heads_) {
    head.w.raw().setZero();
    head.b.raw().setZero();
    for (int m : {0, 5, 10}) {
      for (int z = 0; z < config_.depth; ++z) head.b.raw()[m * config_.depth + z] = 1.0;
    }
  }
}

Tensor EnhanceNet::brightness_adapt(const Tensor& s) const {
  Tensor z = Tensor::from_array(s.shape(), inv_softplus(s.data()));
  Tensor h = relu(conv2d(s, adapt_c1_.w, adapt_c1_.b, 2, 1));
  h = relu(conv2d(h, adapt_c2_.w, adapt_c2_.b, 2, 1));
  h = relu(conv_transpose2d(h, adapt_d1_.w, adapt_d1_.b, 2, 1));
  Tensor r = conv_transpose2d(h, adapt_d2_.w, adapt_d2_.b, 2, 1);
  return max_with(softplus(add(mul(z, adapt_gain_), r)), 1e-4);
}

Tensor EnhanceNet::guidance(const Tensor& r_rgb_full) const {
  Tensor v = conv2d(r_rgb_full, guide_ccm_.w, guide_ccm_.b, 1, 0);
  Tensor curves = op_pwl(v, guide_knots_);
  Tensor g = conv2d(curves, guide_mix_.w, guide_mix_.b, 1, 0);
  return clamp01(g);
}

SpsaModulation EnhanceNet::make_modulation(const ModulationGen& gen, const Tensor& m_binary,
                                           int h, int w, int channels) const {
  (void)channels;
  Tensor m = resize_nearest(m_binary, h, w);
  Tensor t = relu(conv2d(m, gen.map1.w, gen.map1.b, 2, 1));
  t = relu(conv2d(t, gen.map2.w, gen.map2.b, 2, 1));
  t = relu(conv_transpose2d(t, gen.map3.w, gen.map3.b, 2, 1));
  Tensor psi = sigmoid(conv_transpose2d(t, gen.map4.w, gen.map4.b, 2, 1));

  SpsaModulation mod;
  Tensor qh = relu(conv2d(psi, gen.q_hidden.w, gen.q_hidden.b, 1, 1));
  mod.alpha_q = conv2d(qh, gen.q_alpha.w, gen.q_alpha.b, 1, 1);
  mod.beta_q = conv2d(qh, gen.q_beta.w, gen.q_beta.b, 1, 1);
  Tensor kh = relu(conv2d(psi, gen.k_hidden.w, gen.k_hidden.b, 1, 1));
  mod.alpha_k = conv2d(kh, gen.k_alpha.w, gen.k_alpha.b, 1, 1);
  mod.beta_k = conv2d(kh, gen.k_beta.w, gen.k_beta.b, 1, 1);
  return mod;
}

Tensor EnhanceNet::expert_grid(const Tensor& r_msi_low, const Tensor& r_rgb_low,
                               const Tensor& m_binary, int expert,
                               std::vector<Tensor>* attention_sink) const {
  Tensor s_msi = r_msi_low;
  Tensor s_rgb = r_rgb_low;
  for (const auto& level : levels_) {
    Tensor f_msi = relu(conv2d(s_msi, level.conv_msi.w, level.conv_msi.b, 2, 1));
    Tensor f_rgb = relu(conv2d(s_rgb, level.conv_rgb.w, level.conv_rgb.b, 2, 1));
    const int h = f_msi.dim(2), w = f_msi.dim(3), C = f_msi.dim(1) + f_rgb.dim(1);
    SpsaModulation mod =
        make_modulation(level.experts[static_cast<std::size_t>(expert)], m_binary, h, w, C);
    SpsaResult res = spsa_forward(f_msi, f_rgb, level.spsa, &mod);
    if (attention_sink) attention_sink->push_back(res.attention);
    s_msi = res.f_msi;
    s_rgb = res.f_rgb;
  }
  Tensor fused = relu(conv2d(concat({s_msi, s_rgb}, 1), fuse_.w, fuse_.b, 1, 0));
  const ConvParam& head = grid_heads_[static_cast<std::size_t>(expert)];
  Tensor raw = conv2d(fused, head.w, head.b, 1, 0);
  return reshape(raw, {12, config_.depth, config_.grid_h, config_.grid_w});
}

EnhanceOutput EnhanceNet::forward(const RgbImage& rgb16, const LrMsi& msi,
                                  const ShadingMap& s, const MaterialSegmentation& m) const {
  return forward_impl(rgb16, msi, s, m, -1);
}

EnhanceOutput EnhanceNet::forward_single_expert(const RgbImage& rgb16, const LrMsi& msi,
                                                const ShadingMap& s,
                                                const MaterialSegmentation& m,
                                                int expert) const {
  return forward_impl(rgb16, msi, s, m, expert);
}

EnhanceOutput EnhanceNet::forward_impl(const RgbImage& rgb16, const LrMsi& msi,
                                       const ShadingMap& s, const MaterialSegmentation& m,
                                       int forced_expert) const {
  if (rgb16.height != s.height || rgb16.width != s.width || rgb16.height != m.height ||
      rgb16.width != m.width) {
    throw ShapeError("jdm_forward: inputs are not spatially registered");
  }
  if (rgb16.height != config_.full || rgb16.width != config_.full) {
    throw ShapeError("jdm_forward: input is " + std::to_string(rgb16.height) + "x" +
                     std::to_string(rgb16.width) + " but the configured crop is " +
                     std::to_string(config_.full));
  }
  const int H = rgb16.height, W = rgb16.width;
  EnhanceOutput out;

  Tensor s_hat;
  if (config_.use_s) {
    s_hat = brightness_adapt(shading_to_tensor(s));
  } else {
    s_hat = Tensor::full({1, 1, H, W}, 1.0);
  }
  out.s_hat = s_hat;

  Tensor input = rgb_to_tensor(rgb16);
  Tensor r_rgb_full = div(input, s_hat);
  out.guidance = guidance(r_rgb_full);

  Tensor r_rgb_low = resize_bilinear(r_rgb_full, config_.lowres, config_.lowres);
  Tensor msi_low = resize_bilinear(msi_tensor(msi), config_.lowres, config_.lowres);
  if (!config_.use_r) {
    msi_low = mul(msi_low, Tensor::scalar(0.0));
  }
  Tensor r_msi_low = config_.use_s
                         ? div(msi_low, resize_bilinear(s_hat, config_.lowres, config_.lowres))
                         : msi_low;

  const int n_experts = config_.use_m ? config_.n_experts : 1;
  out.weights = expert_weights(m, n_experts);
  if (forced_expert >= 0) {
    for (int e = 0; e < n_experts; ++e) {
      out.weights[static_cast<std::size_t>(e)] = e == forced_expert ? 1.0 : 0.0;
    }
  }
  const auto group = expert_grouping(n_experts);

  Tensor mixture;
  for (int e = 0; e < n_experts; ++e) {
    if (out.weights[static_cast<std::size_t>(e)] == 0.0) continue;  // zero mixture weight
    Array bin(static_cast<std::int64_t>(H) * W);
    for (std::int64_t p = 0; p < bin.size(); ++p) {
      bin[p] = group[static_cast<std::size_t>(m.labels[p])] == e ? 1.0 : 0.0;
    }
    Tensor m_binary = Tensor::from_array({1, 1, H, W}, std::move(bin));
    Tensor grid = expert_grid(r_msi_low, r_rgb_low, m_binary, e, &out.attention_maps);
    Tensor weighted = mul(grid, Tensor::scalar(out.weights[static_cast<std::size_t>(e)]));
    mixture = mixture.defined() ? add(mixture, weighted) : weighted;
  }
  if (!out.attention_maps.empty()) out.attention = out.attention_maps.back();

  Tensor coeffs = op_slice_grid(mixture, out.guidance);
  out.o_r = op_apply_affine(r_rgb_full, coeffs);
  out.final = clamp01(mul(out.o_r, s_hat));

  // recomposition identity: final == clamp(O_R * S_hat), asserted every forward
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  for (std::int64_t i = 0; i < out.final.size(); ++i) {
    const double expect = std::clamp(out.o_r.data()[i] * s_hat.data()[i % hw], 0.0, 1.0);
    if (std::abs(out.final.data()[i] - expect) > 1e-12) {
      throw ValueError("jdm_forward: recomposition identity violated");
    }
  }
  return out;
}

ParamMap EnhanceNet::named_params() const {
  ParamMap out;
  auto put = [&out](const std::string& name, const ConvParam& p) {
    out.emplace(name + ".weight", p.w);
    out.emplace(name + ".bias", p.b);
  };
  put("adapt.c1", adapt_c1_);
  put("adapt.c2", adapt_c2_);
  put("adapt.d1", adapt_d1_);
  put("adapt.d2", adapt_d2_);
  out.emplace("adapt.gain", adapt_gain_);
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const std::string lp = "level" + std::to_string(l) + ".";
    const Level& lv = levels_[l];
    put(lp + "conv_msi", lv.conv_msi);
    put(lp + "conv_rgb", lv.conv_rgb);
    put(lp + "spsa.w3q", lv.spsa.w3q);
    put(lp + "spsa.w1q", lv.spsa.w1q);
    put(lp + "spsa.w3k", lv.spsa.w3k);
    put(lp + "spsa.w1k", lv.spsa.w1k);
    put(lp + "spsa.w3v", lv.spsa.w3v);
    put(lp + "spsa.w1v", lv.spsa.w1v);
    put(lp + "spsa.w3hat_msi", lv.spsa.w3hat_msi);
    put(lp + "spsa.w3_msi", lv.spsa.w3_msi);
    put(lp + "spsa.w3hat_rgb", lv.spsa.w3hat_rgb);
    put(lp + "spsa.w3_rgb", lv.spsa.w3_rgb);
    out.emplace(lp + "spsa.sigma", lv.spsa.sigma);
    for (std::size_t e = 0; e < lv.experts.size(); ++e) {
      const std::string ep = lp + "expert" + std::to_string(e) + ".";
      const ModulationGen& g = lv.experts[e];
      put(ep + "map1", g.map1);
      put(ep + "map2", g.map2);
      put(ep + "map3", g.map3);
      put(ep + "map4", g.map4);
      put(ep + "q_hidden", g.q_hidden);
      put(ep + "q_alpha", g.q_alpha);
      put(ep + "q_beta", g.q_beta);
      put(ep + "k_hidden", g.k_hidden);
      put(ep + "k_alpha", g.k_alpha);
      put(ep + "k_beta", g.k_beta);
    }
  }
  put("fuse", fuse_);
  for (std::size_t e = 0; e < grid_heads_.size(); ++e) {
    put("grid_head" + std::to_string(e), grid_heads_[e]);
  }
  put("guide.ccm", guide_ccm_);
  out.emplace("guide.knots", guide_knots_);
  put("guide.mix", guide_mix_);
  return out;
}

std::vector<Tensor> EnhanceNet::param_list() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

EnhanceNet train_enhancement(const std::vector<EnhanceSample>& dataset,
                             const EnhanceConfig& config, EnhanceTrainStats* stats) {
  if (dataset.empty()) throw ValueError("train_enhancement: empty dataset");
  EnhanceNet net(config);
  std::vector<Tensor> params = net.param_list();
  OptimState state;
  RandomStream order_rng(config.seed ^ 0x5ca1ab1e0ffULL);

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = 0;

  for (int step = 0; step < config.steps; ++step) {
    std::vector<Tensor> losses;
    for (int k = 0; k < config.batch; ++k) {
      if (cursor == 0) order_rng.shuffle(order);
      const EnhanceSample& s = dataset[order[cursor]];
      cursor = (cursor + 1) % order.size();
      EnhanceOutput out = net.forward(s.input16, s.msi, s.shading, s.seg);
      Tensor target = rgb_to_tensor(s.target8);
      Tensor diff = sub(out.final, target);
      losses.push_back(mean(mul(diff, diff)));
    }
    Tensor loss = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) loss = add(loss, losses[i]);
    loss = mul(loss, Tensor::scalar(1.0 / static_cast<double>(losses.size())));
    for (auto& p : params) p.zero_grad();
    backward(loss);
    adam_step(params, state, config.lr);
    if (stats) stats->losses.push_back(loss.value());
  }
  return net;
}

double evaluate_psnr(const EnhanceNet& net, const std::vector<EnhanceSample>& samples) {
  double acc = 0.0;
  for (const auto& s : samples) {
    EnhanceOutput out = net.forward(s.input16, s.msi, s.shading, s.seg);
    RgbImage pred = tensor_to_rgb(out.final, 8);
    acc += psnr(pred, s.target8);
  }
  return acc / static_cast<double>(samples.size());
}

}  // namespace jdm
