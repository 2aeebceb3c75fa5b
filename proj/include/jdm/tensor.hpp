#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "jdm/common.hpp"

namespace jdm {

namespace detail {
struct Node;
}

/// N-dimensional 64-bit float array with reverse-mode gradient tracking.
/// Copies are shallow handles onto the same node; data is immutable after
/// construction except through raw() (used by the optimizer on leaves).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_array(Shape shape, Array data, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::initializer_list<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const { return shape()[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return numel(shape()); }

  const Array& data() const;
  Array& raw();  // leaf mutation only (optimizer updates)
  double value() const;  // scalar tensors
  double operator[](std::int64_t i) const;

  bool requires_grad() const;
  bool has_grad() const;
  const Array& grad() const;
  void zero_grad();

  detail::Node* node() const { return node_.get(); }
  std::shared_ptr<detail::Node> handle() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape shape, Array data, std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backprop);
};

namespace detail {
struct Node {
  Shape shape;
  Array data;
  Array grad;
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void accumulate(const Array& g);
};
}  // namespace detail

/// Builds a graph node. `backprop` reads node.grad and accumulates into the
/// parents; it is dropped when no parent requires gradients.
Tensor make_op(Shape shape, Array data, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop);

// ---- element-wise (NumPy-style right-aligned broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, Tensor::scalar(s)); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor operator-(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }

// ---- activations ----
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

/// softplus composed as -log(sigmoid(-x)).
Tensor softplus(const Tensor& x);
/// max(x, c) composed as relu(x - c) + c.
Tensor max_with(const Tensor& x, double c);
/// clamp(x, 0, 1) composed from two relu's.
Tensor clamp01(const Tensor& x);

// ---- linear algebra ----
/// 2-D product of op(a) and op(b) where op transposes when the flag is set.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
              bool trans_b = false);

// ---- convolution (NCHW activations, OIHW kernels) ----
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding, int groups = 1);
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride,
              int padding, int groups = 1);
/// Transposed convolution; kernel layout (in, out, kh, kw), groups == 1.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel,
                        const Tensor& bias, int stride, int padding);
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride,
                        int padding);

// ---- reductions / structure ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);

// ---- resampling (NCHW, half-pixel centers, edge clamp) ----
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor resize_nearest(const Tensor& x, int out_h, int out_w);

// ---- autodiff driver ----
/// Runs reverse-mode accumulation from a scalar loss. Every requires_grad
/// leaf reachable from the loss receives a gradient.
void backward(const Tensor& loss);

/// Gradients of `loss` w.r.t. `params`; unreachable parameters get zeros.
std::vector<Array> gradients(const Tensor& loss, const std::vector<Tensor>& params);

/// Max relative error between analytic gradients and central differences:
/// max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& forward,
                  std::vector<Tensor> inputs, double eps = 1e-5);

/// Glorot-style uniform init in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, RandomStream& rng);

}  // namespace jdm
