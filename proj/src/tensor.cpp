#include "jdm/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace jdm {

using detail::Node;

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapConstRow = Eigen::Map<const RowMat>;

std::shared_ptr<Node> new_node(Shape shape, Array data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  if (numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  }
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_str(shape));
  }
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

struct Strides {
  std::vector<std::int64_t> s;
};

Strides row_major_strides(const Shape& shape) {
  Strides st;
  st.s.assign(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    st.s[static_cast<std::size_t>(i)] =
        st.s[static_cast<std::size_t>(i + 1)] * shape[static_cast<std::size_t>(i + 1)];
  }
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t ra = a.size(), rb = b.size();
  const std::size_t r = std::max(ra, rb);
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const int da = i < r - ra ? 1 : a[i - (r - ra)];
    const int db = i < r - rb ? 1 : b[i - (r - rb)];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": dimension " + std::to_string(i) +
                       " mismatch between " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` viewed through the broadcast output shape (0 where broadcast).
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t r = out.size(), ri = in.size();
  Strides nat = row_major_strides(in);
  std::vector<std::int64_t> st(r, 0);
  for (std::size_t i = 0; i < ri; ++i) {
    const std::size_t oi = i + (r - ri);
    st[oi] = (in[i] == 1 && out[oi] != 1) ? 0 : nat.s[i];
  }
  return st;
}

// Sum `g` (shaped like `out`) down to `in`'s shape.
Array reduce_to_shape(const Array& g, const Shape& out, const Shape& in) {
  if (out == in) return g;
  Array res = Array::Zero(numel(in));
  const auto st = broadcast_strides(in, out);
  const std::size_t r = out.size();
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t src_pos = 0;
  const std::int64_t total = numel(out);
  for (std::int64_t flat = 0; flat < total; ++flat) {
    res[src_pos] += g[flat];
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      const auto ud = static_cast<std::size_t>(d);
      idx[ud]++;
      src_pos += st[ud];
      if (idx[ud] < out[ud]) break;
      src_pos -= st[ud] * out[ud];
      idx[ud] = 0;
    }
  }
  return res;
}

enum class BinOp { Add, Sub, Mul, Div };

Array broadcast_eval(const Array& a, const Shape& sa, const Array& b, const Shape& sb,
                     const Shape& out, BinOp op) {
  const std::int64_t total = numel(out);
  Array res(total);
  if (sa == sb) {
    switch (op) {
      case BinOp::Add: res = a + b; break;
      case BinOp::Sub: res = a - b; break;
      case BinOp::Mul: res = a * b; break;
      case BinOp::Div: res = a / b; break;
    }
    return res;
  }
  if (a.size() == 1 || b.size() == 1) {
    if (a.size() == 1) {
      const double s = a[0];
      switch (op) {
        case BinOp::Add: res = s + b; break;
        case BinOp::Sub: res = s - b; break;
        case BinOp::Mul: res = s * b; break;
        case BinOp::Div: res = s / b; break;
      }
    } else {
      const double s = b[0];
      switch (op) {
        case BinOp::Add: res = a + s; break;
        case BinOp::Sub: res = a - s; break;
        case BinOp::Mul: res = a * s; break;
        case BinOp::Div: res = a / s; break;
      }
    }
    return res;
  }
  const auto sta = broadcast_strides(sa, out);
  const auto stb = broadcast_strides(sb, out);
  const std::size_t r = out.size();
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t pa = 0, pb = 0;
  for (std::int64_t flat = 0; flat < total; ++flat) {
    const double x = a[pa], y = b[pb];
    switch (op) {
      case BinOp::Add: res[flat] = x + y; break;
      case BinOp::Sub: res[flat] = x - y; break;
      case BinOp::Mul: res[flat] = x * y; break;
      case BinOp::Div: res[flat] = x / y; break;
    }
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      const auto ud = static_cast<std::size_t>(d);
      idx[ud]++;
      pa += sta[ud];
      pb += stb[ud];
      if (idx[ud] < out[ud]) break;
      pa -= sta[ud] * out[ud];
      pb -= stb[ud] * out[ud];
      idx[ud] = 0;
    }
  }
  return res;
}

// Evaluate `other ∘ g` elementwise over the broadcast (for div/mul grads).
Array broadcast_combine(const Array& g, const Array& v, const Shape& sv, const Shape& out,
                        const std::function<double(double, double)>& f) {
  const std::int64_t total = numel(out);
  Array res(total);
  if (sv == out) {
    for (std::int64_t i = 0; i < total; ++i) res[i] = f(g[i], v[i]);
    return res;
  }
  const auto st = broadcast_strides(sv, out);
  const std::size_t r = out.size();
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t pv = 0;
  for (std::int64_t flat = 0; flat < total; ++flat) {
    res[flat] = f(g[flat], v[pv]);
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      const auto ud = static_cast<std::size_t>(d);
      idx[ud]++;
      pv += st[ud];
      if (idx[ud] < out[ud]) break;
      pv -= st[ud] * out[ud];
      idx[ud] = 0;
    }
  }
  return res;
}

int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return axis;
}

}  // namespace

void Node::accumulate(const Array& g) {
  if (!grad_alloc) {
    grad = Array::Zero(data.size());
    grad_alloc = true;
  }
  grad += g;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Array d = Array::Zero(numel(shape));
  return Tensor(new_node(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Array d = Array::Constant(numel(shape), value);
  return Tensor(new_node(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::from_array(Shape shape, Array data, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values,
                           bool requires_grad) {
  Array d(static_cast<std::int64_t>(values.size()));
  std::int64_t i = 0;
  for (double v : values) d[i++] = v;
  return Tensor(new_node(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
const Array& Tensor::data() const { return node_->data; }
Array& Tensor::raw() { return node_->data; }

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value(): tensor is not scalar, shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::operator[](std::int64_t i) const { return node_->data[i]; }

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return node_->grad_alloc; }

const Array& Tensor::grad() const {
  if (!node_->grad_alloc) {
    node_->grad = Array::Zero(node_->data.size());
    node_->grad_alloc = true;
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad = Array::Zero(node_->data.size());
  node_->grad_alloc = true;
}

Tensor make_op(Shape shape, Array data, std::vector<Tensor> parents,
               std::function<void(Node&)> backprop) {
  auto n = new_node(std::move(shape), std::move(data), false);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.handle());
    n->backprop = std::move(backprop);
  }
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// element-wise
// ---------------------------------------------------------------------------

namespace {

Tensor binop(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const Shape out = broadcast_shape(a.shape(), b.shape(), name);
  Array data = broadcast_eval(a.data(), a.shape(), b.data(), b.shape(), out, op);
  const Shape sa = a.shape(), sb = b.shape();
  return make_op(out, std::move(data), {a, b}, [=](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    switch (op) {
      case BinOp::Add:
        if (pa->requires_grad) pa->accumulate(reduce_to_shape(n.grad, n.shape, sa));
        if (pb->requires_grad) pb->accumulate(reduce_to_shape(n.grad, n.shape, sb));
        break;
      case BinOp::Sub:
        if (pa->requires_grad) pa->accumulate(reduce_to_shape(n.grad, n.shape, sa));
        if (pb->requires_grad) pb->accumulate(reduce_to_shape(-n.grad, n.shape, sb));
        break;
      case BinOp::Mul:
        if (pa->requires_grad) {
          Array ga = broadcast_combine(n.grad, pb->data, sb, n.shape,
                                       [](double g, double v) { return g * v; });
          pa->accumulate(reduce_to_shape(ga, n.shape, sa));
        }
        if (pb->requires_grad) {
          Array gb = broadcast_combine(n.grad, pa->data, sa, n.shape,
                                       [](double g, double v) { return g * v; });
          pb->accumulate(reduce_to_shape(gb, n.shape, sb));
        }
        break;
      case BinOp::Div:
        if (pa->requires_grad) {
          Array ga = broadcast_combine(n.grad, pb->data, sb, n.shape,
                                       [](double g, double v) { return g / v; });
          pa->accumulate(reduce_to_shape(ga, n.shape, sa));
        }
        if (pb->requires_grad) {
          // d(a/b)/db = -a/b^2 = -out/b
          Array gout = broadcast_combine(n.grad, pb->data, sb, n.shape,
                                         [](double g, double v) { return g / v; });
          Array gb = Array(-gout * n.data);
          pb->accumulate(reduce_to_shape(gb, n.shape, sb));
        }
        break;
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binop(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binop(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binop(a, b, BinOp::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binop(a, b, BinOp::Div, "div"); }

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  Array d = x.data().max(0.0);
  return make_op(x.shape(), std::move(d), {x}, [](Node& n) {
    Node* p = n.parents[0].get();
    if (!p->requires_grad) return;
    Array g = (p->data > 0.0).select(n.grad, Array::Zero(n.grad.size()));
    p->accumulate(g);
  });
}

Tensor sigmoid(const Tensor& x) {
  const Array& v = x.data();
  Array d(v.size());
  for (std::int64_t i = 0; i < v.size(); ++i) {
    const double t = v[i];
    d[i] = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
  }
  return make_op(x.shape(), std::move(d), {x}, [](Node& n) {
    Node* p = n.parents[0].get();
    if (!p->requires_grad) return;
    Array g = n.grad * n.data * (1.0 - n.data);
    p->accumulate(g);
  });
}

Tensor log(const Tensor& x) {
  Array d = x.data().log();
  return make_op(x.shape(), std::move(d), {x}, [](Node& n) {
    Node* p = n.parents[0].get();
    if (!p->requires_grad) return;
    Array g = n.grad / p->data;
    p->accumulate(g);
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank(), "softmax");
  const Shape& s = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = ax + 1; i < x.rank(); ++i) inner *= s[static_cast<std::size_t>(i)];
  const std::int64_t n = s[static_cast<std::size_t>(ax)];
  const Array& v = x.data();
  Array d(v.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      double mx = v[base];
      for (std::int64_t k = 1; k < n; ++k) mx = std::max(mx, v[base + k * inner]);
      double denom = 0.0;
      for (std::int64_t k = 0; k < n; ++k) {
        const double e = std::exp(v[base + k * inner] - mx);
        d[base + k * inner] = e;
        denom += e;
      }
      for (std::int64_t k = 0; k < n; ++k) d[base + k * inner] /= denom;
    }
  }
  return make_op(s, std::move(d), {x}, [outer, inner, n](Node& nd) {
    Node* p = nd.parents[0].get();
    if (!p->requires_grad) return;
    Array g(nd.data.size());
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::int64_t k = 0; k < n; ++k) {
          dot += nd.grad[base + k * inner] * nd.data[base + k * inner];
        }
        for (std::int64_t k = 0; k < n; ++k) {
          const std::int64_t i = base + k * inner;
          g[i] = nd.data[i] * (nd.grad[i] - dot);
        }
      }
    }
    p->accumulate(g);
  });
}

Tensor softplus(const Tensor& x) {
  return mul(log(sigmoid(mul(x, Tensor::scalar(-1.0)))), Tensor::scalar(-1.0));
}

Tensor max_with(const Tensor& x, double c) {
  return add(relu(sub(x, Tensor::scalar(c))), Tensor::scalar(c));
}

Tensor clamp01(const Tensor& x) {
  return sub(Tensor::scalar(1.0), relu(sub(Tensor::scalar(1.0), relu(x))));
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: operands must be rank-2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const int m = trans_a ? a.dim(1) : a.dim(0);
  const int ka = trans_a ? a.dim(0) : a.dim(1);
  const int kb = trans_b ? b.dim(1) : b.dim(0);
  const int n = trans_b ? b.dim(0) : b.dim(1);
  if (ka != kb) {
    throw ShapeError("matmul: inner dimension mismatch, " + std::to_string(ka) + " vs " +
                     std::to_string(kb));
  }
  MapConstRow ma(a.data().data(), a.dim(0), a.dim(1));
  MapConstRow mb(b.data().data(), b.dim(0), b.dim(1));
  Array out(static_cast<std::int64_t>(m) * n);
  MapRow mo(out.data(), m, n);
  if (!trans_a && !trans_b) mo.noalias() = ma * mb;
  else if (trans_a && !trans_b) mo.noalias() = ma.transpose() * mb;
  else if (!trans_a && trans_b) mo.noalias() = ma * mb.transpose();
  else mo.noalias() = ma.transpose() * mb.transpose();

  return make_op({m, n}, std::move(out), {a, b}, [=](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    MapConstRow g(nd.grad.data(), m, n);
    MapConstRow va(pa->data.data(), pa->shape[0], pa->shape[1]);
    MapConstRow vb(pb->data.data(), pb->shape[0], pb->shape[1]);
    if (pa->requires_grad) {
      Array ga(pa->data.size());
      MapRow mga(ga.data(), pa->shape[0], pa->shape[1]);
      // grad wrt op_a(A) is G * op_b(B)^T; transpose back if needed
      if (!trans_a) {
        if (!trans_b) mga.noalias() = g * vb.transpose();
        else mga.noalias() = g * vb;
      } else {
        if (!trans_b) mga.noalias() = vb * g.transpose();
        else mga.noalias() = vb.transpose() * g.transpose();
      }
      pa->accumulate(ga);
    }
    if (pb->requires_grad) {
      Array gb(pb->data.size());
      MapRow mgb(gb.data(), pb->shape[0], pb->shape[1]);
      if (!trans_b) {
        if (!trans_a) mgb.noalias() = va.transpose() * g;
        else mgb.noalias() = va * g;
      } else {
        if (!trans_a) mgb.noalias() = g.transpose() * va;
        else mgb.noalias() = g.transpose() * va.transpose();
      }
      pb->accumulate(gb);
    }
  });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {

// col(r, j) = src[c, yd*stride - pad + ky, xd*stride - pad + kx], r = (c,ky,kx), j = (yd,xd)
void im2col(const double* src, int C, int H, int W, int kh, int kw, int stride, int pad,
            int OH, int OW, Eigen::MatrixXd& col) {
  col.resize(static_cast<Eigen::Index>(C) * kh * kw, static_cast<Eigen::Index>(OH) * OW);
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const Eigen::Index r = (static_cast<Eigen::Index>(c) * kh + ky) * kw + kx;
        for (int oy = 0; oy < OH; ++oy) {
          const int y = oy * stride - pad + ky;
          const bool yin = y >= 0 && y < H;
          for (int ox = 0; ox < OW; ++ox) {
            const int x = ox * stride - pad + kx;
            col(r, static_cast<Eigen::Index>(oy) * OW + ox) =
                (yin && x >= 0 && x < W) ? src[(static_cast<std::int64_t>(c) * H + y) * W + x]
                                         : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: dst[c, yd*stride - pad + ky, ...] += col(r, j)
void col2im(const Eigen::MatrixXd& col, int C, int H, int W, int kh, int kw, int stride,
            int pad, int OH, int OW, double* dst) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const Eigen::Index r = (static_cast<Eigen::Index>(c) * kh + ky) * kw + kx;
        for (int oy = 0; oy < OH; ++oy) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= H) continue;
          for (int ox = 0; ox < OW; ++ox) {
            const int x = ox * stride - pad + kx;
            if (x < 0 || x >= W) continue;
            dst[(static_cast<std::int64_t>(c) * H + y) * W + x] +=
                col(r, static_cast<Eigen::Index>(oy) * OW + ox);
          }
        }
      }
    }
  }
}

void check_rank4(const Tensor& t, const char* what, const char* op) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(op) + ": " + what + " must be rank-4, got " +
                     shape_str(t.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding, int groups) {
  check_rank4(input, "input", "conv2d");
  check_rank4(kernel, "kernel", "conv2d");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int O = kernel.dim(0), CK = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (groups < 1 || C % groups != 0 || O % groups != 0) {
    throw ShapeError("conv2d: groups " + std::to_string(groups) +
                     " must divide input channels " + std::to_string(C) +
                     " and output channels " + std::to_string(O));
  }
  const int Cg = C / groups, Og = O / groups;
  if (CK != Cg) {
    throw ShapeError("conv2d: kernel channel dimension " + std::to_string(CK) +
                     " != input channels / groups = " + std::to_string(Cg));
  }
  if (bias.defined() && bias.size() != O) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) +
                     " != output channels " + std::to_string(O));
  }
  const int OH = (H + 2 * padding - kh) / stride + 1;
  const int OW = (W + 2 * padding - kw) / stride + 1;
  if (OH <= 0 || OW <= 0) {
    throw ShapeError("conv2d: non-positive output spatial size for input " +
                     shape_str(input.shape()) + " kernel " + shape_str(kernel.shape()));
  }

  Array out(static_cast<std::int64_t>(N) * O * OH * OW);
  Eigen::MatrixXd col;
  MapConstRow wmap(kernel.data().data(), O, static_cast<Eigen::Index>(Cg) * kh * kw);
  for (int n = 0; n < N; ++n) {
    for (int g = 0; g < groups; ++g) {
      const double* src =
          input.data().data() + (static_cast<std::int64_t>(n) * C + g * Cg) * H * W;
      im2col(src, Cg, H, W, kh, kw, stride, padding, OH, OW, col);
      MapRow omap(out.data() + (static_cast<std::int64_t>(n) * O + g * Og) * OH * OW, Og,
                  static_cast<Eigen::Index>(OH) * OW);
      omap.noalias() = wmap.middleRows(g * Og, Og) * col;
      if (bias.defined()) {
        omap.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.data().data() + g * Og, Og);
      }
    }
  }

  std::vector<Tensor> parents = {input, kernel};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op(
      {N, O, OH, OW}, std::move(out), std::move(parents),
      [=](Node& nd) {
        Node* px = nd.parents[0].get();
        Node* pw = nd.parents[1].get();
        Node* pb = has_bias ? nd.parents[2].get() : nullptr;
        MapConstRow wv(pw->data.data(), O, static_cast<Eigen::Index>(Cg) * kh * kw);
        Array gw = Array::Zero(pw->data.size());
        MapRow gwmap(gw.data(), O, static_cast<Eigen::Index>(Cg) * kh * kw);
        Array gx;
        if (px->requires_grad) gx = Array::Zero(px->data.size());
        Array gb;
        if (pb && pb->requires_grad) gb = Array::Zero(O);
        Eigen::MatrixXd colbuf, dcol;
        for (int n = 0; n < N; ++n) {
          for (int g = 0; g < groups; ++g) {
            MapConstRow gmap(nd.grad.data() + (static_cast<std::int64_t>(n) * O + g * Og) * OH * OW,
                             Og, static_cast<Eigen::Index>(OH) * OW);
            if (pw->requires_grad) {
              const double* src =
                  px->data.data() + (static_cast<std::int64_t>(n) * C + g * Cg) * H * W;
              im2col(src, Cg, H, W, kh, kw, stride, padding, OH, OW, colbuf);
              gwmap.middleRows(g * Og, Og).noalias() += gmap * colbuf.transpose();
            }
            if (px->requires_grad) {
              dcol.noalias() = wv.middleRows(g * Og, Og).transpose() * gmap;
              col2im(dcol, Cg, H, W, kh, kw, stride, padding, OH, OW,
                     gx.data() + (static_cast<std::int64_t>(n) * C + g * Cg) * H * W);
            }
            if (pb && pb->requires_grad) {
              for (int o = 0; o < Og; ++o) gb[g * Og + o] += gmap.row(o).sum();
            }
          }
        }
        if (px->requires_grad) px->accumulate(gx);
        if (pw->requires_grad) pw->accumulate(gw);
        if (pb && pb->requires_grad) pb->accumulate(gb);
      });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding, int groups) {
  return conv2d(input, kernel, Tensor(), stride, padding, groups);
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride, int padding) {
  check_rank4(input, "input", "conv_transpose2d");
  check_rank4(kernel, "kernel", "conv_transpose2d");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int CI = kernel.dim(0), O = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (CI != C) {
    throw ShapeError("conv_transpose2d: kernel input-channel dimension " + std::to_string(CI) +
                     " != input channels " + std::to_string(C));
  }
  if (bias.defined() && bias.size() != O) {
    throw ShapeError("conv_transpose2d: bias length " + std::to_string(bias.size()) +
                     " != output channels " + std::to_string(O));
  }
  const int OH = (H - 1) * stride - 2 * padding + kh;
  const int OW = (W - 1) * stride - 2 * padding + kw;
  if (OH <= 0 || OW <= 0) {
    throw ShapeError("conv_transpose2d: non-positive output spatial size");
  }

  Array out = Array::Zero(static_cast<std::int64_t>(N) * O * OH * OW);
  MapConstRow wmap(kernel.data().data(), C, static_cast<Eigen::Index>(O) * kh * kw);
  Eigen::MatrixXd col;
  for (int n = 0; n < N; ++n) {
    MapConstRow xmap(input.data().data() + static_cast<std::int64_t>(n) * C * H * W, C,
                     static_cast<Eigen::Index>(H) * W);
    col.noalias() = wmap.transpose() * xmap;  // (O*kh*kw) x (H*W)
    col2im(col, O, OH, OW, kh, kw, stride, padding, H, W,
           out.data() + static_cast<std::int64_t>(n) * O * OH * OW);
    if (bias.defined()) {
      MapRow omap(out.data() + static_cast<std::int64_t>(n) * O * OH * OW, O,
                  static_cast<Eigen::Index>(OH) * OW);
      omap.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.data().data(), O);
    }
  }

  std::vector<Tensor> parents = {input, kernel};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op(
      {N, O, OH, OW}, std::move(out), std::move(parents),
      [=](Node& nd) {
        Node* px = nd.parents[0].get();
        Node* pw = nd.parents[1].get();
        Node* pb = has_bias ? nd.parents[2].get() : nullptr;
        MapConstRow wv(pw->data.data(), C, static_cast<Eigen::Index>(O) * kh * kw);
        Array gw = Array::Zero(pw->data.size());
        MapRow gwmap(gw.data(), C, static_cast<Eigen::Index>(O) * kh * kw);
        Array gx;
        if (px->requires_grad) gx = Array::Zero(px->data.size());
        Array gb;
        if (pb && pb->requires_grad) gb = Array::Zero(O);
        Eigen::MatrixXd colbuf;
        for (int n = 0; n < N; ++n) {
          // dOut gathered at the conv-transpose geometry plays the conv role
          im2col(nd.grad.data() + static_cast<std::int64_t>(n) * O * OH * OW, O, OH, OW, kh, kw,
                 stride, padding, H, W, colbuf);
          if (px->requires_grad) {
            MapRow gxmap(gx.data() + static_cast<std::int64_t>(n) * C * H * W, C,
                         static_cast<Eigen::Index>(H) * W);
            gxmap.noalias() += wv * colbuf;
          }
          if (pw->requires_grad) {
            MapConstRow xv(px->data.data() + static_cast<std::int64_t>(n) * C * H * W, C,
                           static_cast<Eigen::Index>(H) * W);
            gwmap.noalias() += xv * colbuf.transpose();
          }
          if (pb && pb->requires_grad) {
            MapConstRow gmap(nd.grad.data() + static_cast<std::int64_t>(n) * O * OH * OW, O,
                             static_cast<Eigen::Index>(OH) * OW);
            for (int o = 0; o < O; ++o) gb[o] += gmap.row(o).sum();
          }
        }
        if (px->requires_grad) px->accumulate(gx);
        if (pw->requires_grad) pw->accumulate(gw);
        if (pb && pb->requires_grad) pb->accumulate(gb);
      });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  return conv_transpose2d(input, kernel, Tensor(), stride, padding);
}

// ---------------------------------------------------------------------------
// reductions / structure
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  Array d(1);
  d[0] = x.data().sum();
  return make_op({1}, std::move(d), {x}, [](Node& n) {
    Node* p = n.parents[0].get();
    if (!p->requires_grad) return;
    p->accumulate(Array::Constant(p->data.size(), n.grad[0]));
  });
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  Array d(1);
  d[0] = x.data().sum() * inv;
  return make_op({1}, std::move(d), {x}, [inv](Node& n) {
    Node* p = n.parents[0].get();
    if (!p->requires_grad) return;
    p->accumulate(Array::Constant(p->data.size(), n.grad[0] * inv));
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Array d = x.data();
  return make_op(std::move(shape), std::move(d), {x}, [](Node& n) {
    Node* p = n.parents[0].get();
    if (!p->requires_grad) return;
    p->accumulate(n.grad);
  });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: empty input list");
  const int rank = xs[0].rank();
  const int ax = normalize_axis(axis, rank, "concat");
  Shape out = xs[0].shape();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i].rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d == ax) continue;
      if (xs[i].dim(d) != out[static_cast<std::size_t>(d)]) {
        throw ShapeError("concat: dimension " + std::to_string(d) + " mismatch, " +
                         shape_str(xs[i].shape()) + " vs " + shape_str(xs[0].shape()));
      }
    }
    out[static_cast<std::size_t>(ax)] += xs[i].dim(ax);
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= out[static_cast<std::size_t>(i)];
  for (int i = ax + 1; i < rank; ++i) inner *= out[static_cast<std::size_t>(i)];
  const std::int64_t total_ax = out[static_cast<std::size_t>(ax)];

  Array d(numel(out));
  std::vector<std::int64_t> sizes, offsets;
  std::int64_t off = 0;
  for (const auto& x : xs) {
    sizes.push_back(x.dim(ax));
    offsets.push_back(off);
    off += x.dim(ax);
  }
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Array& src = xs[k].data();
    const std::int64_t nk = sizes[k];
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* sp = src.data() + o * nk * inner;
      double* dp = d.data() + (o * total_ax + offsets[k]) * inner;
      std::copy(sp, sp + nk * inner, dp);
    }
  }
  return make_op(out, std::move(d), xs, [=](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      Node* p = n.parents[k].get();
      if (!p->requires_grad) continue;
      Array g(p->data.size());
      const std::int64_t nk = sizes[k];
      for (std::int64_t o = 0; o < outer; ++o) {
        const double* sp = n.grad.data() + (o * total_ax + offsets[k]) * inner;
        std::copy(sp, sp + nk * inner, g.data() + o * nk * inner);
      }
      p->accumulate(g);
    }
  });
}

// ---------------------------------------------------------------------------
// resize
// ---------------------------------------------------------------------------

namespace {

struct LinearTap {
  int i0, i1;
  double f;  // weight of i1
};

std::vector<LinearTap> bilinear_taps(int in, int out) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    double fl = std::floor(s);
    double f = s - fl;
    int i0 = static_cast<int>(fl);
    int i1 = i0 + 1;
    i0 = std::clamp(i0, 0, in - 1);
    i1 = std::clamp(i1, 0, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, f};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  check_rank4(x, "input", "resize_bilinear");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto ty = bilinear_taps(H, out_h);
  const auto tx = bilinear_taps(W, out_w);
  Array d(static_cast<std::int64_t>(N) * C * out_h * out_w);
  const double* src = x.data().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const double* plane = src + static_cast<std::int64_t>(nc) * H * W;
    double* dst = d.data() + static_cast<std::int64_t>(nc) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& vy = ty[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& vx = tx[static_cast<std::size_t>(ox)];
        const double top = plane[vy.i0 * W + vx.i0] +
                           vx.f * (plane[vy.i0 * W + vx.i1] - plane[vy.i0 * W + vx.i0]);
        const double bot = plane[vy.i1 * W + vx.i0] +
                           vx.f * (plane[vy.i1 * W + vx.i1] - plane[vy.i1 * W + vx.i0]);
        dst[oy * out_w + ox] = top + vy.f * (bot - top);
      }
    }
  }
  return make_op({N, C, out_h, out_w}, std::move(d), {x}, [=](Node& n) {
    Node* p = n.parents[0].get();
    if (!p->requires_grad) return;
    Array g = Array::Zero(p->data.size());
    for (int nc = 0; nc < N * C; ++nc) {
      const double* gp = n.grad.data() + static_cast<std::int64_t>(nc) * out_h * out_w;
      double* dp = g.data() + static_cast<std::int64_t>(nc) * H * W;
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& vy = ty[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& vx = tx[static_cast<std::size_t>(ox)];
          const double gv = gp[oy * out_w + ox];
          dp[vy.i0 * W + vx.i0] += gv * (1.0 - vy.f) * (1.0 - vx.f);
          dp[vy.i0 * W + vx.i1] += gv * (1.0 - vy.f) * vx.f;
          dp[vy.i1 * W + vx.i0] += gv * vy.f * (1.0 - vx.f);
          dp[vy.i1 * W + vx.i1] += gv * vy.f * vx.f;
        }
      }
    }
    p->accumulate(g);
  });
}

Tensor resize_nearest(const Tensor& x, int out_h, int out_w) {
  check_rank4(x, "input", "resize_nearest");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<int> my(static_cast<std::size_t>(out_h)), mx(static_cast<std::size_t>(out_w));
  const double sy = static_cast<double>(H) / out_h, sx = static_cast<double>(W) / out_w;
  for (int o = 0; o < out_h; ++o) {
    my[static_cast<std::size_t>(o)] = std::clamp(static_cast<int>(std::floor((o + 0.5) * sy)), 0, H - 1);
  }
  for (int o = 0; o < out_w; ++o) {
    mx[static_cast<std::size_t>(o)] = std::clamp(static_cast<int>(std::floor((o + 0.5) * sx)), 0, W - 1);
  }
  Array d(static_cast<std::int64_t>(N) * C * out_h * out_w);
  for (int nc = 0; nc < N * C; ++nc) {
    const double* plane = x.data().data() + static_cast<std::int64_t>(nc) * H * W;
    double* dst = d.data() + static_cast<std::int64_t>(nc) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        dst[oy * out_w + ox] = plane[my[static_cast<std::size_t>(oy)] * W + mx[static_cast<std::size_t>(ox)]];
      }
    }
  }
  return make_op({N, C, out_h, out_w}, std::move(d), {x}, [=](Node& n) {
    Node* p = n.parents[0].get();
    if (!p->requires_grad) return;
    Array g = Array::Zero(p->data.size());
    for (int nc = 0; nc < N * C; ++nc) {
      const double* gp = n.grad.data() + static_cast<std::int64_t>(nc) * out_h * out_w;
      double* dp = g.data() + static_cast<std::int64_t>(nc) * H * W;
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          dp[my[static_cast<std::size_t>(oy)] * W + mx[static_cast<std::size_t>(ox)]] += gp[oy * out_w + ox];
        }
      }
    }
    p->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// autodiff driver
// ---------------------------------------------------------------------------

namespace {

void topo_visit(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
  if (seen.count(n)) return;
  seen.insert(n);
  for (const auto& p : n->parents) {
    if (p->requires_grad) topo_visit(p.get(), seen, order);
  }
  order.push_back(n);
}

}  // namespace

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  std::unordered_set<Node*> seen;
  std::vector<Node*> order;
  topo_visit(loss.node(), seen, order);
  loss.node()->accumulate(Array::Constant(1, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad_alloc) n->backprop(*n);
  }
}

std::vector<Array> gradients(const Tensor& loss, const std::vector<Tensor>& params) {
  for (const auto& p : params) p.node()->grad_alloc = false;
  backward(loss);
  std::vector<Array> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back(p.has_grad() ? p.grad() : Array(Array::Zero(p.size())));
  }
  return out;
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& forward,
                  std::vector<Tensor> inputs, double eps) {
  Tensor loss = forward(inputs);
  if (loss.size() != 1) throw ShapeError("grad_check: forward must produce a scalar");
  std::vector<Array> analytic = gradients(loss, inputs);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Array& data = inputs[k].raw();
    for (std::int64_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = forward(inputs).value();
      data[i] = saved - eps;
      const double dn = forward(inputs).value();
      data[i] = saved;
      const double numeric = (up - dn) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, RandomStream& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Array d(numel(shape));
  for (std::int64_t i = 0; i < d.size(); ++i) d[i] = rng.uniform(-bound, bound);
  return Tensor::from_array(std::move(shape), std::move(d), true);
}

}  // namespace jdm
