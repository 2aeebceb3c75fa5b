#include <doctest.h>

#include <cmath>

#include "jdm/dataset.hpp"
#include "jdm/enhancement.hpp"
#include "oracles.hpp"

using namespace jdm;

namespace {

Tensor random_tensor(Shape shape, RandomStream& rng, bool requires_grad = false,
                     double lo = -1.0, double hi = 1.0) {
  Array d(numel(shape));
  for (std::int64_t i = 0; i < d.size(); ++i) d[i] = rng.uniform(lo, hi);
  return Tensor::from_array(std::move(shape), std::move(d), requires_grad);
}

SpsaParams random_spsa(int C, int c, RandomStream& rng, bool zero_hat) {
  auto conv = [&rng](int out, int in, int k) {
    ConvParam p;
    p.w = glorot_uniform({out, in, k, k}, in * k * k, out * k * k, rng);
    p.b = glorot_uniform({out}, out, out, rng);
    return p;
  };
  SpsaParams p;
  p.w3q = conv(C, 1, 3);
  p.w1q = conv(C, C, 1);
  p.w3k = conv(C, 1, 3);
  p.w1k = conv(C, C, 1);
  p.w3v = conv(C, 1, 3);
  p.w1v = conv(C, C, 1);
  p.w3hat_msi = conv(c, C, 3);
  p.w3_msi = conv(c, c, 3);
  p.w3hat_rgb = conv(c, C, 3);
  p.w3_rgb = conv(c, c, 3);
  if (zero_hat) {
    p.w3hat_msi.w.raw().setZero();
    p.w3hat_msi.b.raw().setZero();
    p.w3hat_rgb.w.raw().setZero();
    p.w3hat_rgb.b.raw().setZero();
  }
  p.sigma = Tensor::scalar(1.0 / std::sqrt(static_cast<double>(C)), true);
  return p;
}

// scalar-loop SPSA built from the independent conv/matmul/softmax oracles
std::pair<Array, Array> spsa_oracle(const Array& f_msi, const Array& f_rgb, int c, int h,
                                    int w, const SpsaParams& p) {
  const int C = 2 * c;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Array f_r(C * hw);
  std::copy(f_msi.data(), f_msi.data() + c * hw, f_r.data());
  std::copy(f_rgb.data(), f_rgb.data() + c * hw, f_r.data() + c * hw);

  auto add_bias = [hw](Array a, const Array& b) {
    for (std::int64_t ch = 0; ch < b.size(); ++ch) {
      for (std::int64_t i = 0; i < hw; ++i) a[ch * hw + i] += b[ch];
    }
    return a;
  };
  auto project = [&](const ConvParam& w3, const ConvParam& w1) {
    Array t = add_bias(oracle::conv2d_loops(f_r, 1, C, h, w, w3.w.data(), C, 3, 3, 1, 1, C),
                       w3.b.data());
    return add_bias(oracle::conv2d_loops(t, 1, C, h, w, w1.w.data(), C, 1, 1, 1, 0, 1),
                    w1.b.data());
  };
  Array q = project(p.w3q, p.w1q);
  Array k = project(p.w3k, p.w1k);
  Array v = project(p.w3v, p.w1v);

  // A = row softmax of sigma * K^ . Q^, where K^ is (C, hw) and Q^ is (hw, C)
  Array a(C * C);
  const double sigma = p.sigma.value();
  for (int r = 0; r < C; ++r) {
    std::vector<double> row(static_cast<std::size_t>(C));
    for (int cc = 0; cc < C; ++cc) {
      double dot = 0;
      for (std::int64_t i = 0; i < hw; ++i) dot += k[r * hw + i] * q[cc * hw + i];
      row[static_cast<std::size_t>(cc)] = sigma * dot;
    }
    auto sm = oracle::softmax_vec(row);
    for (int cc = 0; cc < C; ++cc) a[r * C + cc] = sm[static_cast<std::size_t>(cc)];
  }
  // attn(ch, p) = sum_j A[j][ch] * v[j][p]
  Array attn = Array::Zero(C * hw);
  for (int ch = 0; ch < C; ++ch)
    for (int j = 0; j < C; ++j)
      for (std::int64_t i = 0; i < hw; ++i) attn[ch * hw + i] += a[j * C + ch] * v[j * hw + i];

  Array out_msi =
      add_bias(oracle::conv2d_loops(attn, 1, C, h, w, p.w3hat_msi.w.data(), c, 3, 3, 1, 1, 1),
               p.w3hat_msi.b.data()) +
      add_bias(oracle::conv2d_loops(f_msi, 1, c, h, w, p.w3_msi.w.data(), c, 3, 3, 1, 1, 1),
               p.w3_msi.b.data());
  Array out_rgb =
      add_bias(oracle::conv2d_loops(attn, 1, C, h, w, p.w3hat_rgb.w.data(), c, 3, 3, 1, 1, 1),
               p.w3hat_rgb.b.data()) +
      add_bias(oracle::conv2d_loops(f_rgb, 1, c, h, w, p.w3_rgb.w.data(), c, 3, 3, 1, 1, 1),
               p.w3_rgb.b.data());
  return {out_msi, out_rgb};
}

EnhanceSample sample_for(const EnhanceConfig& cfg, std::uint64_t seed) {
  SyntheticOptions opts;
  opts.hw = cfg.full;
  opts.channels = 21;
  opts.msi_hw = cfg.msi_hw;
  opts.msi_bands = cfg.msi_bands;
  return to_enhance_sample(make_scene_bundle(seed, opts));
}

}  // namespace

TEST_CASE("expert grouping and weights") {
  SUBCASE("groupings cover all categories") {
    for (int n : {1, 2, 4, 6}) {
      auto g = expert_grouping(n);
      for (int cat = 0; cat < kNumMaterialClasses; ++cat) {
        CHECK(g[static_cast<std::size_t>(cat)] >= 0);
        CHECK(g[static_cast<std::size_t>(cat)] < n);
      }
    }
    CHECK_THROWS_AS(expert_grouping(3), ValueError);
  }
  SUBCASE("single-category image gives one-hot weights") {
    MaterialSegmentation m(8, 8);
    m.labels.setConstant(2);  // sky
    auto w = expert_weights(m, 6);
    CHECK(w[2] == 1.0);
    CHECK(w[0] + w[1] + w[3] + w[4] + w[5] == 0.0);
  }
  SUBCASE("half/half split") {
    MaterialSegmentation m(2, 8);
    for (int i = 0; i < 16; ++i) m.labels[i] = i < 8 ? 0 : 1;
    auto w = expert_weights(m, 6);
    CHECK(w[0] == doctest::Approx(0.5));
    CHECK(w[1] == doctest::Approx(0.5));
  }
  SUBCASE("random segmentation matches a counting oracle") {
    RandomStream rng(501);
    MaterialSegmentation m(16, 16);
    for (std::int64_t i = 0; i < 256; ++i) m.labels[i] = static_cast<int>(rng.index(6));
    for (int n : {1, 2, 4, 6}) {
      auto w = expert_weights(m, n);
      auto g = expert_grouping(n);
      std::vector<double> expect(static_cast<std::size_t>(n), 0.0);
      for (std::int64_t i = 0; i < 256; ++i) expect[static_cast<std::size_t>(g[static_cast<std::size_t>(m.labels[i])])] += 1.0 / 256.0;
      double total = 0;
      for (int e = 0; e < n; ++e) {
        CHECK(std::abs(w[static_cast<std::size_t>(e)] - expect[static_cast<std::size_t>(e)]) < 1e-12);
        total += w[static_cast<std::size_t>(e)];
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
  SUBCASE("empty segmentation rejected") {
    MaterialSegmentation m;
    CHECK_THROWS_AS(expert_weights(m, 6), ValueError);
  }
}

TEST_CASE("expert_mixture") {
  RandomStream rng(503);
  auto random_grid = [&rng](int gh, int gw, int d) {
    BilateralGrid g(gh, gw, d);
    for (std::int64_t i = 0; i < g.cells.size(); ++i) g.cells[i] = rng.uniform(-1, 1);
    return g;
  };
  SUBCASE("one-hot weights select a single expert") {
    std::vector<BilateralGrid> grids = {random_grid(4, 4, 4), random_grid(4, 4, 4),
                                        random_grid(4, 4, 4)};
    BilateralGrid out = expert_mixture(grids, {0.0, 1.0, 0.0});
    CHECK((out.cells - grids[1].cells).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("equal weights over identical grids") {
    BilateralGrid g = random_grid(3, 3, 8);
    std::vector<BilateralGrid> grids = {g, g, g, g};
    BilateralGrid out = expert_mixture(grids, {0.25, 0.25, 0.25, 0.25});
    CHECK((out.cells - g.cells).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("random mixture matches a per-cell loop") {
    std::vector<BilateralGrid> grids = {random_grid(2, 3, 4), random_grid(2, 3, 4)};
    std::vector<double> w = {0.3, 0.7};
    BilateralGrid out = expert_mixture(grids, w);
    for (std::int64_t i = 0; i < out.cells.size(); ++i) {
      CHECK(std::abs(out.cells[i] - (0.3 * grids[0].cells[i] + 0.7 * grids[1].cells[i])) < 1e-12);
    }
  }
  SUBCASE("mismatched sizes rejected") {
    std::vector<BilateralGrid> grids = {random_grid(2, 3, 4), random_grid(2, 3, 5)};
    CHECK_THROWS_AS(expert_mixture(grids, {0.5, 0.5}), ShapeError);
  }
}

TEST_CASE("spsa_forward") {
  RandomStream rng(505);
  const int c = 4, C = 8, h = 4, w = 4;
  Tensor f_msi = random_tensor({1, c, h, w}, rng, true);
  Tensor f_rgb = random_tensor({1, c, h, w}, rng, true);

  SUBCASE("attention rows are stochastic") {
    SpsaParams p = random_spsa(C, c, rng, false);
    SpsaResult r = spsa_forward(f_msi, f_rgb, p);
    CHECK(r.attention.shape() == Shape{C, C});
    for (int row = 0; row < C; ++row) {
      double s = 0;
      for (int col = 0; col < C; ++col) s += r.attention[row * C + col];
      CHECK(std::abs(s - 1.0) < 1e-6);
      for (int col = 0; col < C; ++col) CHECK(r.attention[row * C + col] >= 0.0);
    }
  }
  SUBCASE("zero-initialized residual branch is the identity path") {
    SpsaParams p = random_spsa(C, c, rng, true);
    SpsaResult r = spsa_forward(f_msi, f_rgb, p);
    Tensor plain = conv2d(f_msi, p.w3_msi.w, p.w3_msi.b, 1, 1);
    CHECK((r.f_msi.data() - plain.data()).abs().maxCoeff() == 0.0);
  }
  SUBCASE("full block matches the composed-primitive scalar oracle") {
    SpsaParams p = random_spsa(C, c, rng, false);
    SpsaResult r = spsa_forward(f_msi, f_rgb, p);
    auto [o_msi, o_rgb] = spsa_oracle(f_msi.data(), f_rgb.data(), c, h, w, p);
    CHECK((r.f_msi.data() - o_msi).abs().maxCoeff() < 1e-9);
    CHECK((r.f_rgb.data() - o_rgb).abs().maxCoeff() < 1e-9);
  }
  SUBCASE("zero alpha/beta modulation is exactly neutral") {
    SpsaParams p = random_spsa(C, c, rng, false);
    SpsaModulation mod;
    mod.alpha_q = Tensor::zeros({1, C, h, w});
    mod.beta_q = Tensor::zeros({1, C, h, w});
    mod.alpha_k = Tensor::zeros({1, C, h, w});
    mod.beta_k = Tensor::zeros({1, C, h, w});
    SpsaResult with_mod = spsa_forward(f_msi, f_rgb, p, &mod);
    SpsaResult without = spsa_forward(f_msi, f_rgb, p);
    CHECK((with_mod.f_msi.data() - without.f_msi.data()).abs().maxCoeff() == 0.0);
    CHECK((with_mod.f_rgb.data() - without.f_rgb.data()).abs().maxCoeff() == 0.0);
    CHECK((with_mod.attention.data() - without.attention.data()).abs().maxCoeff() == 0.0);
  }
  SUBCASE("gradients through the block") {
    SpsaParams p = random_spsa(C, c, rng, false);
    const double err = grad_check(
        [&p](const std::vector<Tensor>& in) {
          SpsaParams local = p;
          local.sigma = in[2];
          local.w1q.w = in[3];
          local.w3hat_msi.w = in[4];
          SpsaResult r = spsa_forward(in[0], in[1], local);
          return add(mean(mul(r.f_msi, r.f_msi)), mean(mul(r.f_rgb, r.f_rgb)));
        },
        {f_msi, f_rgb, p.sigma, p.w1q.w, p.w3hat_msi.w});
    CHECK(err < 1e-4);
  }
  SUBCASE("spatial mismatch rejected") {
    SpsaParams p = random_spsa(C, c, rng, false);
    Tensor bad = random_tensor({1, c, h, w + 1}, rng);
    CHECK_THROWS_AS(spsa_forward(f_msi, bad, p), ShapeError);
  }
}

TEST_CASE("brightness_adapt") {
  EnhanceConfig cfg = EnhanceConfig::gradcheck();
  EnhanceNet net(cfg);
  RandomStream rng(507);
  SUBCASE("output floor and identity at init") {
    Array sv(16 * 16);
    for (std::int64_t i = 0; i < sv.size(); ++i) sv[i] = rng.uniform(1e-4, 1.0);
    Tensor s = Tensor::from_array({1, 1, 16, 16}, sv);
    Tensor out = net.brightness_adapt(s);
    CHECK(out.data().minCoeff() >= 1e-4);
    CHECK((out.data() - sv).abs().maxCoeff() < 1e-6);  // identity-initialized stack
  }
  SUBCASE("strictly positive for arbitrary finite input") {
    Array sv(16 * 16);
    for (std::int64_t i = 0; i < sv.size(); ++i) sv[i] = rng.uniform(-3.0, 3.0);
    Tensor out = net.brightness_adapt(Tensor::from_array({1, 1, 16, 16}, sv.abs() + 1e-4));
    CHECK(out.data().minCoeff() >= 1e-4);
  }
  SUBCASE("gradients through the adaptation stack") {
    ParamMap params = net.named_params();
    Array sv(16 * 16);
    for (std::int64_t i = 0; i < sv.size(); ++i) sv[i] = rng.uniform(0.1, 1.0);
    Tensor s = Tensor::from_array({1, 1, 16, 16}, sv);
    const double err = grad_check(
        [&net, &s](const std::vector<Tensor>& in) {
          (void)in;
          Tensor out = net.brightness_adapt(s);
          return mean(mul(out, out));
        },
        {params.at("adapt.c1.weight"), params.at("adapt.d2.weight"),
         params.at("adapt.d1.bias")});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("jdm_forward") {
  EnhanceConfig cfg = EnhanceConfig::gradcheck();
  cfg.n_experts = 6;
  cfg.seed = 9;
  EnhanceSample s = sample_for(cfg, 81);

  SUBCASE("identity-configured grid heads reproduce the clamped input") {
    EnhanceConfig idc = cfg;
    idc.use_s = false;
    EnhanceNet net(idc);  // grid heads are identity-initialized
    EnhanceOutput out = net.forward(s.input16, s.msi, s.shading, s.seg);
    Tensor input = rgb_to_tensor(s.input16);
    CHECK((out.final.data() - input.data().max(0.0).min(1.0)).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("shape and range contract") {
    EnhanceNet net(cfg);
    EnhanceOutput out = net.forward(s.input16, s.msi, s.shading, s.seg);
    CHECK(out.final.shape() == Shape{1, 3, cfg.full, cfg.full});
    CHECK(out.final.data().minCoeff() >= 0.0);
    CHECK(out.final.data().maxCoeff() <= 1.0);
    CHECK(out.s_hat.data().minCoeff() >= 1e-4);
    CHECK(out.guidance.data().minCoeff() >= 0.0);
    CHECK(out.guidance.data().maxCoeff() <= 1.0);
    double wsum = 0;
    for (double w : out.weights) {
      CHECK(w >= 0.0);
      wsum += w;
    }
    CHECK(std::abs(wsum - 1.0) < 1e-9);
    for (const Tensor& a : out.attention_maps) {
      const int C = a.dim(0);
      for (int r = 0; r < C; ++r) {
        double rs = 0;
        for (int c2 = 0; c2 < C; ++c2) rs += a[r * C + c2];
        CHECK(std::abs(rs - 1.0) < 1e-6);
      }
    }
  }
  SUBCASE("one-hot expert weights reproduce the single-expert output") {
    EnhanceNet net(cfg);
    MaterialSegmentation single(cfg.full, cfg.full);
    single.labels.setConstant(2);  // sky only -> expert 2 under the 6-way grouping
    EnhanceOutput mixture = net.forward(s.input16, s.msi, s.shading, single);
    EnhanceOutput solo = net.forward_single_expert(s.input16, s.msi, s.shading, single, 2);
    CHECK(mixture.weights[2] == 1.0);
    CHECK((mixture.final.data() - solo.final.data()).abs().maxCoeff() <= 1e-12);
  }
  SUBCASE("unregistered inputs rejected") {
    EnhanceNet net(cfg);
    ShadingMap bad(cfg.full / 2, cfg.full);
    CHECK_THROWS_AS(net.forward(s.input16, s.msi, bad, s.seg), ShapeError);
  }
}

TEST_CASE("enhancement training") {
  EnhanceConfig cfg = EnhanceConfig::gradcheck();
  cfg.n_experts = 2;
  cfg.use_m = true;

  SUBCASE("identity pipeline on identical input/target has zero loss") {
    EnhanceConfig idc = cfg;
    idc.use_s = false;
    EnhanceNet net(idc);
    EnhanceSample s = sample_for(idc, 91);
    s.target8.values = s.input16.values;  // identical pair
    EnhanceOutput out = net.forward(s.input16, s.msi, s.shading, s.seg);
    Tensor target = rgb_to_tensor(s.target8);
    const double mse = (out.final.data() - target.data()).square().mean();
    CHECK(mse < 1e-20);
  }
  SUBCASE("overfits 16 synthetic pairs by 10x in 500 steps") {
    std::vector<EnhanceSample> data;
    for (int i = 0; i < 16; ++i) data.push_back(sample_for(cfg, 300 + i));
    EnhanceConfig tc = cfg;
    tc.steps = 500;
    tc.batch = 4;
    tc.lr = 2e-3;
    tc.seed = 3;
    EnhanceTrainStats stats;
    train_enhancement(data, tc, &stats);
    const double first = stats.losses.front();
    double tail = 0;
    for (int i = 0; i < 10; ++i) tail += stats.losses[stats.losses.size() - 1 - i];
    tail /= 10.0;
    CHECK(tail * 10.0 <= first);
  }
  SUBCASE("empty dataset rejected") {
    CHECK_THROWS_AS(train_enhancement({}, cfg), ValueError);
  }
}
