#include <doctest.h>

#include <cmath>

#include "jdm/metrics.hpp"

using namespace jdm;

namespace {

RgbImage constant_image(int h, int w, double r, double g, double b) {
  RgbImage im(h, w, 8);
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p) {
    im.values[p * 3] = r;
    im.values[p * 3 + 1] = g;
    im.values[p * 3 + 2] = b;
  }
  return im;
}

RgbImage random_image(int h, int w, RandomStream& rng) {
  RgbImage im(h, w, 8);
  for (std::int64_t i = 0; i < im.values.size(); ++i) im.values[i] = rng.uniform(0.0, 1.0);
  return im;
}

// test-side Lab pipeline, written out step by step
void lab_oracle(double r, double g, double b, double& L, double& A, double& B) {
  auto lin = [](double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  const double rl = lin(r), gl = lin(g), bl = lin(b);
  const double x = 0.412456 * rl + 0.357576 * gl + 0.180437 * bl;
  const double y = 0.212673 * rl + 0.715152 * gl + 0.072175 * bl;
  const double z = 0.019334 * rl + 0.119192 * gl + 0.950304 * bl;
  const double xn = 0.412456 + 0.357576 + 0.180437;
  const double yn = 0.212673 + 0.715152 + 0.072175;
  const double zn = 0.019334 + 0.119192 + 0.950304;
  auto f = [](double t) {
    const double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
  };
  L = 116.0 * f(y / yn) - 16.0;
  A = 500.0 * (f(x / xn) - f(y / yn));
  B = 200.0 * (f(y / yn) - f(z / zn));
}

}  // namespace

TEST_CASE("psnr") {
  RandomStream rng(201);
  RgbImage a = random_image(16, 16, rng);
  SUBCASE("identical images are flagged infinite") {
    bool inf = false;
    const double v = psnr(a, a, &inf);
    CHECK(inf);
    CHECK(std::isinf(v));
  }
  SUBCASE("uniform error of 10/255") {
    RgbImage base = constant_image(16, 16, 0.5, 0.5, 0.5);
    RgbImage off = base;
    off.values += 10.0 / 255.0;
    const double v = psnr(base, off);
    CHECK(std::abs(v - 20.0 * std::log10(255.0 / 10.0)) < 1e-3);
    CHECK(v == doctest::Approx(28.1308).epsilon(1e-4));
  }
  SUBCASE("random pair matches the scalar-loop oracle") {
    RgbImage b = random_image(16, 16, rng);
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.values.size(); ++i) {
      const double d = a.values[i] - b.values[i];
      acc += d * d;
    }
    const double expect = 10.0 * std::log10(1.0 / (acc / static_cast<double>(a.values.size())));
    CHECK(std::abs(psnr(a, b) - expect) < 1e-10);
  }
  SUBCASE("symmetry and monotonicity") {
    RgbImage b = random_image(16, 16, rng);
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-12));
    RgbImage base = constant_image(16, 16, 0.5, 0.5, 0.5);
    double prev = 1e9;
    for (double amp : {0.01, 0.05, 0.2}) {
      RgbImage noisy = base;
      RandomStream nrng(7);
      for (std::int64_t i = 0; i < noisy.values.size(); ++i) {
        noisy.values[i] = std::clamp(noisy.values[i] + nrng.uniform(-amp, amp), 0.0, 1.0);
      }
      const double v = psnr(base, noisy);
      CHECK(v < prev);
      prev = v;
    }
  }
  SUBCASE("dimension mismatch") {
    RgbImage b = random_image(8, 16, rng);
    CHECK_THROWS_AS(psnr(a, b), ShapeError);
  }
}

TEST_CASE("ssim") {
  RandomStream rng(203);
  RgbImage a = random_image(20, 20, rng);
  SUBCASE("identical images score 1") {
    CHECK(std::abs(ssim(a, a) - 1.0) < 1e-12);
  }
  SUBCASE("anti-structured image scores negative") {
    RgbImage base(16, 16, 8);
    RgbImage neg(16, 16, 8);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) {
          const double v = 0.5 + 0.5 * (((x + y) % 2) ? 1 : -1);
          base.at(y, x, c) = v;
          neg.at(y, x, c) = 1.0 - v;
        }
    CHECK(ssim(base, neg) < 0.0);
  }
  SUBCASE("random pair matches a per-window double-loop oracle") {
    RgbImage b = random_image(14, 15, rng);
    RgbImage a2 = random_image(14, 15, rng);
    // oracle: direct windowed statistics with the same Gaussian taps
    double window[11][11];
    double wsum = 0;
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) {
        window[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
        wsum += window[i][j];
      }
    for (auto& row : window)
      for (double& w : row) w /= wsum;
    double total = 0;
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      int count = 0;
      for (int y = 0; y + 11 <= 14; ++y)
        for (int x = 0; x + 11 <= 15; ++x) {
          double ma = 0, mb = 0, qa = 0, qb = 0, qab = 0;
          for (int i = 0; i < 11; ++i)
            for (int j = 0; j < 11; ++j) {
              const double w = window[i][j];
              ma += w * a2.at(y + i, x + j, c);
              mb += w * b.at(y + i, x + j, c);
              qa += w * a2.at(y + i, x + j, c) * a2.at(y + i, x + j, c);
              qb += w * b.at(y + i, x + j, c) * b.at(y + i, x + j, c);
              qab += w * a2.at(y + i, x + j, c) * b.at(y + i, x + j, c);
            }
          const double va = qa - ma * ma, vb = qb - mb * mb, cov = qab - ma * mb;
          acc += ((2 * ma * mb + 1e-4) * (2 * cov + 9e-4)) /
                 ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
          ++count;
        }
      total += acc / count;
    }
    CHECK(std::abs(ssim(a2, b) - total / 3.0) < 1e-9);
  }
  SUBCASE("too-small image rejected") {
    RgbImage small = random_image(8, 8, rng);
    CHECK_THROWS_AS(ssim(small, small), ShapeError);
  }
}

TEST_CASE("srgb_to_lab") {
  double L, A, B;
  SUBCASE("white point") {
    srgb_to_lab(1, 1, 1, L, A, B);
    CHECK(std::abs(L - 100.0) < 0.01);
    CHECK(std::abs(A) < 0.01);
    CHECK(std::abs(B) < 0.01);
  }
  SUBCASE("black") {
    srgb_to_lab(0, 0, 0, L, A, B);
    CHECK(std::abs(L) < 1e-9);
    CHECK(std::abs(A) < 1e-9);
    CHECK(std::abs(B) < 1e-9);
  }
  SUBCASE("mid-gray matches the hand-evaluated pipeline") {
    srgb_to_lab(0.5, 0.5, 0.5, L, A, B);
    double Lo, Ao, Bo;
    lab_oracle(0.5, 0.5, 0.5, Lo, Ao, Bo);
    CHECK(std::abs(L - Lo) < 1e-6);
    CHECK(std::abs(A - Ao) < 1e-6);
    CHECK(std::abs(B - Bo) < 1e-6);
  }
  SUBCASE("random colors match the oracle") {
    RandomStream rng(205);
    for (int i = 0; i < 20; ++i) {
      const double r = rng.uniform(0, 1), g = rng.uniform(0, 1), b = rng.uniform(0, 1);
      srgb_to_lab(r, g, b, L, A, B);
      double Lo, Ao, Bo;
      lab_oracle(r, g, b, Lo, Ao, Bo);
      CHECK(std::abs(L - Lo) < 1e-6);
      CHECK(std::abs(A - Ao) < 1e-6);
      CHECK(std::abs(B - Bo) < 1e-6);
    }
  }
}

TEST_CASE("delta_e") {
  RandomStream rng(207);
  SUBCASE("identical images give zero") {
    RgbImage a = random_image(12, 12, rng);
    CHECK(delta_e(a, a) == 0.0);
  }
  SUBCASE("white against black is 100 per pixel") {
    RgbImage w = constant_image(8, 8, 1, 1, 1);
    RgbImage b = constant_image(8, 8, 0, 0, 0);
    CHECK(std::abs(delta_e(w, b) - 100.0) < 0.01);
  }
  SUBCASE("random pair matches the per-pixel loop oracle") {
    RgbImage a = random_image(10, 10, rng);
    RgbImage b = random_image(10, 10, rng);
    double acc = 0;
    for (std::int64_t p = 0; p < 100; ++p) {
      double la, aa, ba, lb, ab, bb;
      lab_oracle(a.values[p * 3], a.values[p * 3 + 1], a.values[p * 3 + 2], la, aa, ba);
      lab_oracle(b.values[p * 3], b.values[p * 3 + 1], b.values[p * 3 + 2], lb, ab, bb);
      acc += std::sqrt((la - lb) * (la - lb) + (aa - ab) * (aa - ab) + (ba - bb) * (ba - bb));
    }
    CHECK(std::abs(delta_e(a, b) - acc / 100.0) < 1e-9);
    CHECK(delta_e(a, b) == doctest::Approx(delta_e(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("miou") {
  SUBCASE("perfect prediction") {
    MaterialSegmentation seg(8, 8);
    for (std::int64_t i = 0; i < 64; ++i) seg.labels[i] = static_cast<int>(i % 5);
    EvalReport r = miou(seg, seg, 6);
    CHECK(r.miou == 1.0);
  }
  SUBCASE("hand-counted half/half case") {
    MaterialSegmentation pred(4, 4), gt(4, 4);
    pred.labels.setZero();
    for (std::int64_t i = 0; i < 16; ++i) gt.labels[i] = i < 8 ? 0 : 1;
    EvalReport r = miou(pred, gt, 6);
    CHECK(r.per_class_iou[0] == doctest::Approx(0.5));
    CHECK(r.per_class_iou[1] == doctest::Approx(0.0));
    CHECK(r.miou == doctest::Approx(0.25));
  }
  SUBCASE("random maps match a confusion-matrix oracle") {
    RandomStream rng(209);
    for (int rep = 0; rep < 50; ++rep) {
      MaterialSegmentation pred(6, 6), gt(6, 6);
      for (std::int64_t i = 0; i < 36; ++i) {
        pred.labels[i] = static_cast<int>(rng.index(4));
        gt.labels[i] = static_cast<int>(rng.index(4));
      }
      // oracle: full confusion matrix
      std::int64_t conf[4][4] = {};
      for (std::int64_t i = 0; i < 36; ++i) conf[gt.labels[i]][pred.labels[i]]++;
      double acc = 0;
      int valid = 0;
      std::vector<double> ious;
      for (int c = 0; c < 4; ++c) {
        std::int64_t tp = conf[c][c], fn = 0, fp = 0;
        for (int j = 0; j < 4; ++j) {
          if (j != c) {
            fn += conf[c][j];
            fp += conf[j][c];
          }
        }
        if (tp + fp + fn == 0) continue;
        acc += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        ++valid;
      }
      EvalReport r = miou(pred, gt, 4);
      CHECK(std::abs(r.miou - acc / valid) < 1e-12);
    }
  }
  SUBCASE("label out of range") {
    MaterialSegmentation pred(2, 2), gt(2, 2);
    pred.labels << 0, 1, 2, 9;
    gt.labels.setZero();
    CHECK_THROWS_AS(miou(pred, gt, 6), ValueError);
  }
}
