#include "jdm/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "jdm/optim.hpp"

namespace jdm {

ShadingMap estimate_shading_nir(const SpectralCube& cube) {
  std::vector<int> nir;
  for (int c = 0; c < cube.channels(); ++c) {
    if (cube.wavelengths_nm[c] >= 850.0 && cube.wavelengths_nm[c] <= 1000.0) nir.push_back(c);
  }
  if (nir.empty()) {
    throw ValueError("estimate_shading_nir: cube has no channels in 850-1000 nm");
  }
  ShadingMap s(cube.height, cube.width);
  const int C = cube.channels();
  for (std::int64_t p = 0; p < s.values.size(); ++p) {
    double acc = 0.0;
    for (int c : nir) acc += cube.values[p * C + c];
    s.values[p] = acc / static_cast<double>(nir.size());
  }
  const double mx = s.values.maxCoeff();
  if (mx > 0.0) s.values /= mx;
  s.values = s.values.max(1e-4);
  return s;
}

ShadingClassMap quantize_shading(const ShadingMap& s, int levels) {
  if (levels < 2) throw ValueError("quantize_shading: need at least 2 levels");
  ShadingClassMap c;
  c.height = s.height;
  c.width = s.width;
  c.levels = levels;
  for (int i = 0; i <= levels; ++i) {
    c.bin_edges.push_back(static_cast<double>(i) / levels);
  }
  c.labels.resize(s.values.size());
  for (std::int64_t p = 0; p < s.values.size(); ++p) {
    const int k = static_cast<int>(std::floor(s.values[p] * levels));
    c.labels[p] = std::clamp(k, 0, levels - 1);
  }
  return c;
}

ShadingMap dequantize_shading(const ShadingClassMap& c) {
  ShadingMap s(c.height, c.width);
  for (std::int64_t p = 0; p < c.labels.size(); ++p) {
    s.values[p] = (c.labels[p] + 0.5) / static_cast<double>(c.levels);
  }
  return s;
}

Image retinex_reflectance(const Image& image, const ShadingMap& s, double eps) {
  if (image.height != s.height || image.width != s.width) {
    throw ShapeError("retinex_reflectance: image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " vs shading " + std::to_string(s.height) +
                     "x" + std::to_string(s.width));
  }
  Image out(image.height, image.width, image.channels);
  for (std::int64_t p = 0; p < s.values.size(); ++p) {
    const double d = std::max(s.values[p], eps);
    for (int c = 0; c < image.channels; ++c) {
      out.values[p * image.channels + c] = image.values[p * image.channels + c] / d;
    }
  }
  return out;
}

LrMsi retinex_reflectance(const LrMsi& msi, const ShadingMap& s, double eps) {
  if (msi.height != s.height || msi.width != s.width) {
    throw ShapeError("retinex_reflectance: msi dims do not match shading dims");
  }
  LrMsi out = msi;
  const int B = msi.bands();
  for (std::int64_t p = 0; p < s.values.size(); ++p) {
    const double d = std::max(s.values[p], eps);
    for (int b = 0; b < B; ++b) out.values[p * B + b] = msi.values[p * B + b] / d;
  }
  return out;
}

double histogram_pearson(const RgbImage& a, const RgbImage& b, int bins) {
  if (a.height == 0 || b.height == 0) throw ValueError("histogram_pearson: empty image");
  auto histogram = [bins](const RgbImage& im) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(bins);
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(im.height) * im.width; ++p) {
      const double lum = 0.299 * im.values[p * 3] + 0.587 * im.values[p * 3 + 1] +
                         0.114 * im.values[p * 3 + 2];
      const int k = std::clamp(static_cast<int>(std::floor(lum * bins)), 0, bins - 1);
      h[k] += 1.0;
    }
    return h;
  };
  Eigen::VectorXd ha = histogram(a), hb = histogram(b);
  const double ma = ha.mean(), mb = hb.mean();
  Eigen::VectorXd da = ha.array() - ma, db = hb.array() - mb;
  const double va = da.squaredNorm(), vb = db.squaredNorm();
  if (va <= 0.0 || vb <= 0.0) {
    throw ValueError("histogram_pearson: degenerate zero-variance histogram");
  }
  return da.dot(db) / std::sqrt(va * vb);
}

// ---------------------------------------------------------------------------
// joint decomposition network
// ---------------------------------------------------------------------------

namespace {

Tensor msi_to_tensor(const LrMsi& msi) {
  const int B = msi.bands();
  Array d(static_cast<std::int64_t>(msi.height) * msi.width * B);
  for (int b = 0; b < B; ++b) {
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(msi.height) * msi.width; ++p) {
      d[b * static_cast<std::int64_t>(msi.height) * msi.width + p] = msi.values[p * B + b];
    }
  }
  return Tensor::from_array({1, B, msi.height, msi.width}, std::move(d));
}

}  // namespace

DecompNet::DecompNet(const DecompConfig& config) : config_(config) {
  RandomStream rng(config.seed);
  const int c1 = config.base_channels, c2 = 2 * c1, c3 = 4 * c1;
  auto conv = [&rng](int out, int in, int k) {
    ConvBlock b;
    b.w = glorot_uniform({out, in, k, k}, in * k * k, out * k * k, rng);
    b.b = Tensor::zeros({out}, true);
    return b;
  };
  auto tconv = [&rng](int in, int out, int k) {
    ConvBlock b;
    b.w = glorot_uniform({in, out, k, k}, in * k * k, out * k * k, rng);
    b.b = Tensor::zeros({out}, true);
    return b;
  };
  enc_rgb_ = {conv(c1, 3, 3), conv(c2, c1, 3), conv(c3, c2, 3)};
  enc_spec_ = {conv(c1, config.msi_bands, 3), conv(c2, c1, 3), conv(c3, c2, 3)};
  // decoder inputs carry the skip concatenation of both encoders' features
  dec_m_ = {tconv(2 * c3, c2, 4), tconv(c2 + 2 * c2, c1, 4), tconv(c1 + 2 * c1, c1, 4)};
  dec_s_ = {tconv(2 * c3, c2, 4), tconv(c2 + 2 * c2, c1, 4), tconv(c1 + 2 * c1, c1, 4)};
  head_m_ = conv(kNumMaterialClasses, c1, 1);
  head_s_ = conv(kNumShadingLevels, c1, 1);
}

std::vector<Tensor> DecompNet::encode(const std::vector<ConvBlock>& enc, const Tensor& x) const {
  std::vector<Tensor> features;
  Tensor h = x;
  for (const auto& block : enc) {
    h = relu(conv2d(h, block.w, block.b, 2, 1));
    features.push_back(h);
  }
  return features;
}

Tensor DecompNet::decode(const std::vector<ConvBlock>& dec, const ConvBlock& head,
                         const std::vector<Tensor>& f_rgb,
                         const std::vector<Tensor>& f_spec) const {
  Tensor h = relu(conv_transpose2d(concat({f_rgb[2], f_spec[2]}, 1), dec[0].w, dec[0].b, 2, 1));
  h = concat({h, f_rgb[1], f_spec[1]}, 1);
  h = relu(conv_transpose2d(h, dec[1].w, dec[1].b, 2, 1));
  h = concat({h, f_rgb[0], f_spec[0]}, 1);
  h = relu(conv_transpose2d(h, dec[2].w, dec[2].b, 2, 1));
  return conv2d(h, head.w, head.b, 1, 0);
}

std::pair<Tensor, Tensor> DecompNet::forward(const RgbImage& rgb, const LrMsi& msi) const {
  return forward_tensors(rgb_to_tensor(rgb), msi_to_tensor(msi));
}

std::pair<Tensor, Tensor> DecompNet::forward_tensors(const Tensor& x_rgb,
                                                     const Tensor& x_msi_raw) const {
  Tensor x_msi = resize_bilinear(x_msi_raw, x_rgb.dim(2), x_rgb.dim(3));
  if (x_msi.dim(2) != x_rgb.dim(2) || x_msi.dim(3) != x_rgb.dim(3)) {
    throw ShapeError("decomposition: msi resolution mismatch after resize");
  }
  std::vector<Tensor> f_rgb = encode(enc_rgb_, x_rgb);
  std::vector<Tensor> f_spec = encode(enc_spec_, x_msi);
  if (!config_.use_msi) {
    for (auto& f : f_spec) f = mul(f, Tensor::scalar(0.0));
  }
  Tensor logits_m = decode(dec_m_, head_m_, f_rgb, f_spec);
  Tensor logits_s = decode(dec_s_, head_s_, f_rgb, f_spec);
  return {logits_m, logits_s};
}

namespace {

Eigen::ArrayXi argmax_channels(const Tensor& logits) {
  const int C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  Eigen::ArrayXi out(static_cast<std::int64_t>(H) * W);
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(H) * W; ++p) {
    int best = 0;
    double bv = logits.data()[p];
    for (int c = 1; c < C; ++c) {
      const double v = logits.data()[c * static_cast<std::int64_t>(H) * W + p];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out[p] = best;
  }
  return out;
}

}  // namespace

MaterialSegmentation DecompNet::predict_material(const RgbImage& rgb, const LrMsi& msi) const {
  auto [logits_m, logits_s] = forward(rgb, msi);
  MaterialSegmentation seg(rgb.height, rgb.width);
  seg.labels = argmax_channels(logits_m);
  return seg;
}

ShadingClassMap DecompNet::predict_shading(const RgbImage& rgb, const LrMsi& msi) const {
  auto [logits_m, logits_s] = forward(rgb, msi);
  ShadingMap dummy(rgb.height, rgb.width);
  dummy.values = Array::Constant(dummy.values.size(), 0.5);
  ShadingClassMap c = quantize_shading(dummy);  // fills dims/edges
  c.labels = argmax_channels(logits_s);
  return c;
}

ParamMap DecompNet::named_params() const {
  ParamMap out;
  auto put = [&out](const std::string& prefix, const std::vector<ConvBlock>& blocks) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      out.emplace(prefix + std::to_string(i) + ".weight", blocks[i].w);
      out.emplace(prefix + std::to_string(i) + ".bias", blocks[i].b);
    }
  };
  put("enc_rgb.", enc_rgb_);
  put("enc_spec.", enc_spec_);
  put("dec_m.", dec_m_);
  put("dec_s.", dec_s_);
  out.emplace("head_m.weight", head_m_.w);
  out.emplace("head_m.bias", head_m_.b);
  out.emplace("head_s.weight", head_s_.w);
  out.emplace("head_s.bias", head_s_.b);
  return out;
}

std::vector<Tensor> DecompNet::param_list() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

Tensor cross_entropy_mean(const Tensor& logits, const Eigen::ArrayXi& labels) {
  const int C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  if (labels.size() != static_cast<std::int64_t>(H) * W) {
    throw ShapeError("cross_entropy_mean: label count " + std::to_string(labels.size()) +
                     " != pixel count " + std::to_string(static_cast<std::int64_t>(H) * W));
  }
  Tensor onehot = Tensor::zeros({1, C, H, W});
  for (std::int64_t p = 0; p < labels.size(); ++p) {
    onehot.raw()[labels[p] * static_cast<std::int64_t>(H) * W + p] = 1.0;
  }
  // floor keeps log finite when a class probability underflows
  Tensor p = max_with(softmax(logits, 1), 1e-300);
  Tensor picked = sum(mul(onehot, log(p)));
  return mul(picked, Tensor::scalar(-1.0 / (static_cast<double>(H) * W)));
}

DecompNet train_decomposition(const std::vector<DecompSample>& dataset,
                              const DecompConfig& config, DecompTrainStats* stats) {
  if (dataset.empty()) throw ValueError("train_decomposition: empty dataset");
  DecompNet net(config);
  std::vector<Tensor> params = net.param_list();
  OptimState state;
  RandomStream order_rng(config.seed ^ 0xabcdef12345ULL);

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = 0;

  for (int step = 0; step < config.steps; ++step) {
    std::vector<Tensor> losses;
    for (int k = 0; k < config.batch; ++k) {
      if (cursor == 0) order_rng.shuffle(order);
      const DecompSample& s = dataset[order[cursor]];
      cursor = (cursor + 1) % order.size();
      auto [logits_m, logits_s] = net.forward(s.rgb, s.msi);
      Tensor ce = add(cross_entropy_mean(logits_m, s.material_truth.labels),
                      cross_entropy_mean(logits_s, s.shading_truth.labels));
      losses.push_back(mul(ce, Tensor::scalar(0.5)));
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

std::pair<double, double> decomposition_accuracy(const DecompNet& net,
                                                 const DecompSample& sample) {
  auto [logits_m, logits_s] = net.forward(sample.rgb, sample.msi);
  Eigen::ArrayXi pm = argmax_channels(logits_m);
  Eigen::ArrayXi ps = argmax_channels(logits_s);
  double am = 0, as = 0;
  for (std::int64_t p = 0; p < pm.size(); ++p) {
    am += pm[p] == sample.material_truth.labels[p] ? 1.0 : 0.0;
    as += ps[p] == sample.shading_truth.labels[p] ? 1.0 : 0.0;
  }
  return {am / static_cast<double>(pm.size()), as / static_cast<double>(ps.size())};
}

}  // namespace jdm
