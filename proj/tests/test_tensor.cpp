#include <doctest.h>

#include "jdm/optim.hpp"
#include "jdm/tensor.hpp"
#include "oracles.hpp"

using namespace jdm;

namespace {

Tensor random_tensor(Shape shape, RandomStream& rng, bool requires_grad = false,
                     double lo = -1.0, double hi = 1.0) {
  Array d(numel(shape));
  for (std::int64_t i = 0; i < d.size(); ++i) d[i] = rng.uniform(lo, hi);
  return Tensor::from_array(std::move(shape), std::move(d), requires_grad);
}

double max_abs_diff(const Array& a, const Array& b) {
  return (a - b).abs().maxCoeff();
}

}  // namespace

TEST_CASE("conv2d basic values") {
  SUBCASE("all-ones 3x3 against 3x3 kernel gives 9") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y = conv2d(x, k, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.value() == doctest::Approx(9.0));
  }
  SUBCASE("identity 1x1 kernel preserves input") {
    RandomStream rng(3);
    Tensor x = random_tensor({1, 1, 5, 4}, rng);
    Tensor k = Tensor::full({1, 1, 1, 1}, 1.0);
    Tensor y = conv2d(x, k, 1, 0);
    CHECK(max_abs_diff(y.data(), x.data()) == 0.0);
  }
  SUBCASE("strided padded conv matches nested-loop oracle") {
    RandomStream rng(7);
    Tensor x = random_tensor({2, 4, 8, 8}, rng);
    Tensor k = random_tensor({6, 4, 3, 3}, rng);
    Tensor y = conv2d(x, k, 2, 1);
    Array ref = oracle::conv2d_loops(x.data(), 2, 4, 8, 8, k.data(), 6, 3, 3, 2, 1, 1);
    CHECK(max_abs_diff(y.data(), ref) < 1e-10);
  }
  SUBCASE("shape errors name the offending dimension") {
    Tensor x = Tensor::full({1, 4, 8, 8}, 1.0);
    Tensor k = Tensor::full({6, 3, 3, 3}, 1.0);
    CHECK_THROWS_AS(conv2d(x, k, 1, 1), ShapeError);
    CHECK_THROWS_AS(conv2d(x, k, 1, 1, 3), ShapeError);
  }
}

TEST_CASE("depthwise conv equals per-channel independent convolution") {
  RandomStream rng(11);
  const int C = 5;
  Tensor x = random_tensor({1, C, 6, 6}, rng);
  Tensor k = random_tensor({C, 1, 3, 3}, rng);
  Tensor y = conv2d(x, k, 1, 1, C);
  for (int c = 0; c < C; ++c) {
    Array xc(36), kc(9);
    for (int i = 0; i < 36; ++i) xc[i] = x.data()[c * 36 + i];
    for (int i = 0; i < 9; ++i) kc[i] = k.data()[c * 9 + i];
    Array ref = oracle::conv2d_loops(xc, 1, 1, 6, 6, kc, 1, 3, 3, 1, 1, 1);
    for (int i = 0; i < 36; ++i) {
      CHECK(std::abs(y.data()[c * 36 + i] - ref[i]) < 1e-12);
    }
  }
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  // <conv(x,k), y> == <x, conv_T(y, k)> for matching geometry
  RandomStream rng(13);
  Tensor x = random_tensor({1, 3, 7, 7}, rng);
  Tensor k = random_tensor({4, 3, 3, 3}, rng);
  Tensor cx = conv2d(x, k, 2, 1);
  Tensor y = random_tensor(cx.shape(), rng);
  // the OIHW conv kernel reads as IOHW for the adjoint direction
  Tensor ty = conv_transpose2d(y, Tensor::from_array({4, 3, 3, 3}, k.data()), 2, 1);
  REQUIRE(ty.shape() == x.shape());
  const double lhs = (cx.data() * y.data()).sum();
  const double rhs = (x.data() * ty.data()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("matmul values") {
  SUBCASE("identity times operand") {
    RandomStream rng(17);
    Tensor eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor b = random_tensor({3, 5}, rng);
    Tensor y = matmul(eye, b);
    CHECK(max_abs_diff(y.data(), b.data()) == 0.0);
  }
  SUBCASE("hand arithmetic 1x2 by 2x1") {
    Tensor a = Tensor::from_values({1, 2}, {1, 2});
    Tensor b = Tensor::from_values({2, 1}, {3, 4});
    CHECK(matmul(a, b).value() == doctest::Approx(11.0));
  }
  SUBCASE("random against triple-loop oracle") {
    RandomStream rng(19);
    Tensor a = random_tensor({5, 7}, rng);
    Tensor b = random_tensor({7, 4}, rng);
    Array ref = oracle::matmul_loops(a.data(), 5, 7, b.data(), 4);
    CHECK(max_abs_diff(matmul(a, b).data(), ref) < 1e-12);
  }
  SUBCASE("transpose flags agree with explicit transposition") {
    RandomStream rng(23);
    Tensor a = random_tensor({7, 5}, rng);
    Tensor b = random_tensor({7, 4}, rng);
    Array at(a.size());
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 5; ++j) at[j * 7 + i] = a.data()[i * 5 + j];
    Array ref = oracle::matmul_loops(at, 5, 7, b.data(), 4);
    CHECK(max_abs_diff(matmul(a, b, true, false).data(), ref) < 1e-12);
  }
  SUBCASE("inner dimension mismatch throws") {
    Tensor a = Tensor::full({2, 3}, 1.0);
    Tensor b = Tensor::full({4, 2}, 1.0);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
  }
}

TEST_CASE("softmax values and stability") {
  SUBCASE("uniform logits") {
    Tensor y = softmax(Tensor::from_values({3}, {0, 0, 0}), 0);
    for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("extreme logits stay finite") {
    Tensor y = softmax(Tensor::from_values({2}, {1000, 0}), 0);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] < 1e-300);
    CHECK(std::isfinite(y[0]));
  }
  SUBCASE("random vector matches exp/sum oracle") {
    RandomStream rng(29);
    std::vector<double> v(4);
    for (auto& x : v) x = rng.uniform(-2, 2);
    Tensor y = softmax(Tensor::from_values({4}, {v[0], v[1], v[2], v[3]}), 0);
    auto ref = oracle::softmax_vec(v);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-12);
  }
  SUBCASE("slices sum to one across magnitudes") {
    RandomStream rng(31);
    for (double mag : {1e-3, 1.0, 1e3}) {
      Tensor x = random_tensor({3, 6, 2}, rng, false, -mag, mag);
      Tensor y = softmax(x, 1);
      for (int o = 0; o < 3; ++o)
        for (int in = 0; in < 2; ++in) {
          double s = 0.0;
          for (int k = 0; k < 6; ++k) s += y[(o * 6 + k) * 2 + in];
          CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
  }
}

TEST_CASE("backward basics") {
  SUBCASE("grad of sum is ones") {
    Tensor x = Tensor::full({2, 3}, 0.5, true);
    backward(sum(x));
    for (int i = 0; i < 6; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));
  }
  SUBCASE("grad of sum of squares") {
    Tensor x = Tensor::from_values({3}, {1, 2, 3}, true);
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
    CHECK(x.grad()[2] == doctest::Approx(6.0));
  }
  SUBCASE("non-scalar loss rejected") {
    Tensor x = Tensor::full({2}, 1.0, true);
    CHECK_THROWS_AS(backward(x), ShapeError);
  }
  SUBCASE("unreachable leaves get zero from gradients()") {
    Tensor x = Tensor::full({2}, 1.0, true);
    Tensor z = Tensor::full({2}, 1.0, true);
    auto g = gradients(sum(x), {x, z});
    CHECK(g[0][0] == doctest::Approx(1.0));
    CHECK(g[1][0] == 0.0);
    CHECK(g[1][1] == 0.0);
  }
  SUBCASE("accumulation is linear over two paths") {
    RandomStream rng(37);
    Tensor x = random_tensor({4}, rng, true);
    Tensor a = mul(x, Tensor::scalar(2.0));
    Tensor b = mul(x, x);
    auto g_joint = gradients(add(sum(a), sum(b)), {x});
    auto g_a = gradients(sum(mul(x, Tensor::scalar(2.0))), {x});
    auto g_b = gradients(sum(mul(x, x)), {x});
    for (int i = 0; i < 4; ++i) {
      CHECK(g_joint[0][i] == doctest::Approx(g_a[0][i] + g_b[0][i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("grad_check on representative graphs") {
  RandomStream rng(41);
  SUBCASE("linear map is near-exact") {
    Tensor w = random_tensor({3, 3}, rng, true);
    double err = grad_check(
        [](const std::vector<Tensor>& in) {
          return sum(matmul(in[0], Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6})));
        },
        {w});
    CHECK(err < 1e-9);
  }
  SUBCASE("softmax cross-entropy") {
    Tensor logits = random_tensor({4, 6}, rng, true);
    Tensor onehot = Tensor::zeros({4, 6});
    for (int r = 0; r < 4; ++r) onehot.raw()[r * 6 + (r * 2) % 6] = 1.0;
    double err = grad_check(
        [onehot](const std::vector<Tensor>& in) {
          Tensor p = softmax(in[0], 1);
          return mul(mean(mul(onehot, log(p))), Tensor::scalar(-6.0));
        },
        {logits});
    CHECK(err < 1e-5);
  }
  SUBCASE("composite conv -> softmax -> matmul -> sum") {
    Tensor x = random_tensor({1, 2, 4, 4}, rng, true);
    Tensor k = random_tensor({3, 2, 3, 3}, rng, true);
    double err = grad_check(
        [](const std::vector<Tensor>& in) {
          Tensor y = conv2d(in[0], in[1], 1, 1);
          Tensor s = softmax(reshape(y, {3, 16}), 1);
          Tensor m = matmul(s, s, false, true);
          return sum(m);
        },
        {x, k});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("every differentiable operation passes grad_check at random shapes") {
  RandomStream rng(43);
  auto check = [&](const char* name,
                   const std::function<Tensor(const std::vector<Tensor>&)>& f,
                   std::vector<Tensor> inputs, double tol = 1e-4) {
    INFO(name);
    CHECK(grad_check(f, std::move(inputs)) < tol);
  };
  for (int rep = 0; rep < 3; ++rep) {
    const int h = 3 + rep, w = 4 - rep % 2;
    Tensor a = random_tensor({2, h, w}, rng, true);
    Tensor b = random_tensor({2, h, w}, rng, true);
    Tensor pos = random_tensor({2, h, w}, rng, true, 0.5, 2.0);
    check("add", [](const std::vector<Tensor>& in) { return sum(add(in[0], in[1])); }, {a, b});
    check("sub", [](const std::vector<Tensor>& in) { return mean(sub(in[0], in[1])); }, {a, b});
    check("mul", [](const std::vector<Tensor>& in) { return sum(mul(in[0], in[1])); }, {a, b});
    check("div", [](const std::vector<Tensor>& in) { return sum(div(in[0], in[1])); }, {a, pos});
    check("mul broadcast",
          [](const std::vector<Tensor>& in) { return sum(mul(in[0], in[1])); },
          {random_tensor({2, h, w}, rng, true), random_tensor({1, 1, w}, rng, true)});
    check("div broadcast",
          [](const std::vector<Tensor>& in) { return sum(div(in[0], in[1])); },
          {random_tensor({2, h, w}, rng, true), random_tensor({h, 1}, rng, true, 0.5, 2.0)});
    check("relu offset",  // keep coordinates away from the kink
          [](const std::vector<Tensor>& in) { return sum(relu(add(in[0], Tensor::scalar(0.01)))); },
          {random_tensor({2, h, w}, rng, true, 0.2, 1.0)});
    check("sigmoid", [](const std::vector<Tensor>& in) { return sum(sigmoid(in[0])); }, {a});
    check("log", [](const std::vector<Tensor>& in) { return sum(log(in[0])); }, {pos});
    check("softplus", [](const std::vector<Tensor>& in) { return sum(softplus(in[0])); }, {b});
    check("softmax", [](const std::vector<Tensor>& in) { return sum(mul(softmax(in[0], 1), in[1])); },
          {a, b});
    check("matmul",
          [](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1], true, true)); },
          {random_tensor({3, 2 + rep}, rng, true), random_tensor({4, 3}, rng, true)});
    check("conv2d",
          [](const std::vector<Tensor>& in) { return sum(conv2d(in[0], in[1], in[2], 2, 1)); },
          {random_tensor({1, 2, 5, 6}, rng, true), random_tensor({4, 2, 3, 3}, rng, true),
           random_tensor({4}, rng, true)});
    check("conv2d grouped",
          [](const std::vector<Tensor>& in) { return sum(conv2d(in[0], in[1], Tensor(), 1, 1, 2)); },
          {random_tensor({1, 4, 4, 4}, rng, true), random_tensor({4, 2, 3, 3}, rng, true)});
    check("conv_transpose2d",
          [](const std::vector<Tensor>& in) {
            return sum(conv_transpose2d(in[0], in[1], in[2], 2, 1));
          },
          {random_tensor({1, 3, 4, 4}, rng, true), random_tensor({3, 2, 4, 4}, rng, true),
           random_tensor({2}, rng, true)});
    check("mean", [](const std::vector<Tensor>& in) { return mean(mul(in[0], in[0])); }, {a});
    check("reshape",
          [h, w](const std::vector<Tensor>& in) {
            return sum(mul(reshape(in[0], {h * w, 2}), Tensor::scalar(0.5)));
          },
          {a});
    check("concat",
          [](const std::vector<Tensor>& in) {
            return sum(mul(concat({in[0], in[1]}, 1), Tensor::scalar(1.5)));
          },
          {a, b});
    check("resize_bilinear",
          [](const std::vector<Tensor>& in) { return sum(resize_bilinear(in[0], 7, 5)); },
          {random_tensor({1, 2, 4, 4}, rng, true)});
    check("resize_nearest",
          [](const std::vector<Tensor>& in) { return sum(resize_nearest(in[0], 2, 6)); },
          {random_tensor({1, 2, 4, 4}, rng, true)});
  }
}

TEST_CASE("resize semantics") {
  SUBCASE("bilinear preserves constants exactly") {
    Tensor x = Tensor::full({1, 1, 3, 5}, 0.7);
    Tensor y = resize_bilinear(x, 9, 4);
    CHECK((y.data() == 0.7).all());
  }
  SUBCASE("nearest upsample by integer factor replicates") {
    Tensor x = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor y = resize_nearest(x, 4, 4);
    CHECK(y.data()[0] == 1.0);
    CHECK(y.data()[3] == 2.0);
    CHECK(y.data()[15] == 4.0);
  }
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::from_values({2}, {0.3, -0.4}, true);
    p.zero_grad();
    std::vector<Tensor> params = {p};
    OptimState st;
    adam_step(params, st, 1e-2);
    CHECK(p.data()[0] == doctest::Approx(0.3));
    CHECK(p.data()[1] == doctest::Approx(-0.4));
    CHECK(st.step_count == 1);
  }
  SUBCASE("one step with unit gradient moves by about lr") {
    Tensor p = Tensor::scalar(1.0, true);
    p.zero_grad();
    p.node()->grad[0] = 1.0;
    p.node()->grad_alloc = true;
    std::vector<Tensor> params = {p};
    OptimState st;
    adam_step(params, st, 1e-4);
    // bias-corrected first step: delta = lr * 1 / (1 + eps)
    CHECK(p.value() == doctest::Approx(1.0 - 1e-4).epsilon(1e-6));
  }
  SUBCASE("100 steps on f(x)=x^2 from x=1 converge") {
    Tensor x = Tensor::scalar(1.0, true);
    std::vector<Tensor> params = {x};
    OptimState st;
    std::vector<double> window_means;
    double acc = 0.0;
    for (int i = 0; i < 100; ++i) {
      x.zero_grad();
      Tensor loss = mul(x, x);
      backward(loss);
      adam_step(params, st, 2e-2);
      acc += x.value() * x.value();
      if ((i + 1) % 20 == 0) {
        window_means.push_back(acc / 20.0);
        acc = 0.0;
      }
    }
    CHECK(std::abs(x.value()) < 0.9);
    // monotone in trend: 20-step window means of f decrease
    for (std::size_t i = 1; i < window_means.size(); ++i) {
      CHECK(window_means[i] <= window_means[i - 1] + 1e-9);
    }
    CHECK(window_means.back() < 0.05 * window_means.front());
  }
}
