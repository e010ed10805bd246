// Copyright 2026 The CIF-T Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cift/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace cift {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape");
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

NodePtr make_node(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  n->alloc_data(shape_numel(n->shape));
  return n;
}

// Output node of an op: requires_grad if any parent does; parents and the
// backward rule are recorded only in that case.
NodePtr make_op_node(std::vector<int> shape, std::vector<NodePtr> parents,
                     std::function<void(TensorNode&)> backward_fn) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto n = make_node(std::move(shape), rg);
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void ensure_grad(TensorNode& n) {
  if (n.grad.empty()) n.alloc_grad();
}

// Broadcast classification for binary ops: returns the output node shape
// and flags telling which side repeats. The smaller operand must be a
// scalar or a trailing suffix of the larger shape.
struct BroadcastPlan {
  std::vector<int> out_shape;
  std::size_t out_n = 0;
  std::size_t a_n = 0, b_n = 0;  // operand sizes; index via i % n
};

BroadcastPlan plan_broadcast(const Tensor& a, const Tensor& b,
                             const char* opname) {
  BroadcastPlan p;
  p.a_n = a.size();
  p.b_n = b.size();
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto is_suffix = [](const std::vector<int>& big, const std::vector<int>& s) {
    if (s.size() > big.size()) return false;
    return std::equal(s.rbegin(), s.rend(), big.rbegin());
  };
  if (sa == sb) {
    p.out_shape = sa;
  } else if (p.b_n == 1) {
    p.out_shape = sa;
  } else if (p.a_n == 1) {
    p.out_shape = sb;
  } else if (p.a_n >= p.b_n && is_suffix(sa, sb)) {
    p.out_shape = sa;
  } else if (p.b_n > p.a_n && is_suffix(sb, sa)) {
    p.out_shape = sb;
  } else {
    throw DimensionError(std::string(opname) + ": shapes " + shape_str(sa) +
                         " and " + shape_str(sb) + " are not broadcastable");
  }
  p.out_n = shape_numel(p.out_shape);
  if (p.out_n % p.a_n != 0 || p.out_n % p.b_n != 0)
    throw DimensionError(std::string(opname) + ": shapes " + shape_str(sa) +
                         " and " + shape_str(sb) + " are not broadcastable");
  return p;
}

// Generic broadcasting binary op. fwd(x, y) gives the value; bwd gives
// (d/dx, d/dy) at a point. Gradients for a repeated operand sum over the
// repeats naturally via the modulo index.
template <class F, class DX, class DY>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F fwd,
                 DX dfdx, DY dfdy) {
  BroadcastPlan p = plan_broadcast(a, b, name);
  auto an = a.node();
  auto bn = b.node();
  auto out = make_op_node(
      p.out_shape, {an, bn}, [an, bn, p, dfdx, dfdy](TensorNode& self) {
        const bool need_a = an->requires_grad;
        const bool need_b = bn->requires_grad;
        if (need_a) ensure_grad(*an);
        if (need_b) ensure_grad(*bn);
        for (std::size_t i = 0; i < p.out_n; ++i) {
          const double g = self.grad[i];
          const double x = an->data[i % p.a_n];
          const double y = bn->data[i % p.b_n];
          if (need_a) an->grad[i % p.a_n] += g * dfdx(x, y);
          if (need_b) bn->grad[i % p.b_n] += g * dfdy(x, y);
        }
      });
  for (std::size_t i = 0; i < p.out_n; ++i)
    out->data[i] = fwd(a[i % p.a_n], b[i % p.b_n]);
  return Tensor(out);
}

template <class F, class D>
Tensor unary_op(const Tensor& x, F fwd, D dfdx) {
  auto xn = x.node();
  auto out = make_op_node(xn->shape, {xn}, [xn, dfdx](TensorNode& self) {
    ensure_grad(*xn);
    for (std::size_t i = 0; i < self.data.size(); ++i)
      xn->grad[i] += self.grad[i] * dfdx(xn->data[i], self.data[i]);
  });
  for (std::size_t i = 0; i < x.size(); ++i) out->data[i] = fwd(x[i]);
  return Tensor(out);
}

// Splits a shape at `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const std::vector<int>& shape, int axis) {
  if (axis < 0) axis += static_cast<int>(shape.size());
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw DimensionError("axis out of range for shape " + shape_str(shape));
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::int64_t MemTracker::live = 0;
std::int64_t MemTracker::peak = 0;
void MemTracker::add(std::int64_t b) {
  live += b;
  peak = std::max(peak, live);
}
void MemTracker::sub(std::int64_t b) { live -= b; }
void MemTracker::reset_peak() { peak = live; }

TensorNode::~TensorNode() {
  MemTracker::sub(static_cast<std::int64_t>((data.size() + grad.size()) *
                                            sizeof(double)));
}

void TensorNode::alloc_data(std::size_t n) {
  data.assign(n, 0.0);
  MemTracker::add(static_cast<std::int64_t>(n * sizeof(double)));
}

void TensorNode::alloc_grad() {
  grad.assign(data.size(), 0.0);
  MemTracker::add(static_cast<std::int64_t>(grad.size() * sizeof(double)));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = make_node(std::move(shape), requires_grad);
  if (requires_grad) n->alloc_grad();
  return Tensor(n);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.mutable_data().begin(), t.mutable_data().end(), value);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data,
                    bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw DimensionError("from: data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  Tensor t = zeros(std::move(shape), requires_grad);
  std::copy(data.begin(), data.end(), t.mutable_data().begin());
  return t;
}

double Tensor::value() const {
  if (size() != 1) throw DimensionError("value(): tensor is not scalar");
  return node_->data[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty())
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

int Rng::uniform_int(int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  return d(gen_);
}

Tensor randn(std::vector<int> shape, Rng& rng, double scale,
             bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.mutable_data()) v = scale * rng.normal();
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        // stable for large |v|
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor absval(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& x) {
  auto xn = x.node();
  auto out = make_op_node({1}, {xn}, [xn](TensorNode& self) {
    ensure_grad(*xn);
    const double g = self.grad[0];
    for (double& gi : xn->grad) gi += g;
  });
  out->data[0] = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  return Tensor(out);
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor softmax(const Tensor& x, int axis) {
  AxisSplit s = split_axis(x.shape(), axis);
  auto xn = x.node();
  auto out = make_op_node(x.shape(), {xn}, [xn, s](TensorNode& self) {
    ensure_grad(*xn);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        double dot = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          std::size_t idx = (o * s.extent + e) * s.inner + i;
          dot += self.grad[idx] * self.data[idx];
        }
        for (std::size_t e = 0; e < s.extent; ++e) {
          std::size_t idx = (o * s.extent + e) * s.inner + i;
          xn->grad[idx] += self.data[idx] * (self.grad[idx] - dot);
        }
      }
  });
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e)
        mx = std::max(mx, x[(o * s.extent + e) * s.inner + i]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        std::size_t idx = (o * s.extent + e) * s.inner + i;
        out->data[idx] = std::exp(x[idx] - mx);
        z += out->data[idx];
      }
      for (std::size_t e = 0; e < s.extent; ++e)
        out->data[(o * s.extent + e) * s.inner + i] /= z;
    }
  return Tensor(out);
}

Tensor log_softmax(const Tensor& x, int axis) {
  AxisSplit s = split_axis(x.shape(), axis);
  auto xn = x.node();
  auto out = make_op_node(x.shape(), {xn}, [xn, s](TensorNode& self) {
    ensure_grad(*xn);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        double gsum = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e)
          gsum += self.grad[(o * s.extent + e) * s.inner + i];
        for (std::size_t e = 0; e < s.extent; ++e) {
          std::size_t idx = (o * s.extent + e) * s.inner + i;
          xn->grad[idx] += self.grad[idx] - std::exp(self.data[idx]) * gsum;
        }
      }
  });
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e)
        mx = std::max(mx, x[(o * s.extent + e) * s.inner + i]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e)
        z += std::exp(x[(o * s.extent + e) * s.inner + i] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t e = 0; e < s.extent; ++e) {
        std::size_t idx = (o * s.extent + e) * s.inner + i;
        out->data[idx] = x[idx] - lz;
      }
    }
  return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() != 2) throw DimensionError("layer_norm: x must be 2-D");
  const int n = x.shape()[0], d = x.shape()[1];
  if (gamma.rank() != 1 || gamma.shape()[0] != d || beta.rank() != 1 ||
      beta.shape()[0] != d)
    throw DimensionError("layer_norm: gamma/beta must be [d]");
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  // keep normalized rows + inverse stddev for backward
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto istd = std::make_shared<std::vector<double>>(n);
  auto out = make_op_node(
      x.shape(), {xn, gn, bn}, [=](TensorNode& self) {
        if (xn->requires_grad) ensure_grad(*xn);
        if (gn->requires_grad) ensure_grad(*gn);
        if (bn->requires_grad) ensure_grad(*bn);
        for (int r = 0; r < n; ++r) {
          const double is = (*istd)[r];
          double gdot = 0.0, gxdot = 0.0;
          for (int c = 0; c < d; ++c) {
            std::size_t idx = static_cast<std::size_t>(r) * d + c;
            const double gy = self.grad[idx] * gn->data[c];
            gdot += gy;
            gxdot += gy * (*xhat)[idx];
          }
          for (int c = 0; c < d; ++c) {
            std::size_t idx = static_cast<std::size_t>(r) * d + c;
            const double gy = self.grad[idx] * gn->data[c];
            if (xn->requires_grad)
              xn->grad[idx] +=
                  is * (gy - (gdot + (*xhat)[idx] * gxdot) / d);
            if (gn->requires_grad)
              gn->grad[c] += self.grad[idx] * (*xhat)[idx];
            if (bn->requires_grad) bn->grad[c] += self.grad[idx];
          }
        }
      });
  for (int r = 0; r < n; ++r) {
    double m = 0.0;
    for (int c = 0; c < d; ++c) m += x[static_cast<std::size_t>(r) * d + c];
    m /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      double dv = x[static_cast<std::size_t>(r) * d + c] - m;
      var += dv * dv;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*istd)[r] = is;
    for (int c = 0; c < d; ++c) {
      std::size_t idx = static_cast<std::size_t>(r) * d + c;
      (*xhat)[idx] = (x[idx] - m) * is;
      out->data[idx] = (*xhat)[idx] * gamma[c] + beta[c];
    }
  }
  return Tensor(out);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2)
    throw DimensionError("matmul: need a rank>=2 and b rank 2, got " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int k = a.shape().back();
  const int k2 = b.shape()[0];
  const int nc = b.shape()[1];
  if (k != k2)
    throw DimensionError("matmul: inner extents differ: " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int m = static_cast<int>(a.size()) / k;
  std::vector<int> out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(nc);
  auto an = a.node();
  auto bn = b.node();
  auto out = make_op_node(out_shape, {an, bn}, [an, bn, m, k, nc](
                                                   TensorNode& self) {
    ConstMapMat A(an->data.data(), m, k);
    ConstMapMat B(bn->data.data(), k, nc);
    ConstMapMat G(self.grad.data(), m, nc);
    if (an->requires_grad) {
      ensure_grad(*an);
      MapMat dA(an->grad.data(), m, k);
      dA.noalias() += G * B.transpose();
    }
    if (bn->requires_grad) {
      ensure_grad(*bn);
      MapMat dB(bn->grad.data(), k, nc);
      dB.noalias() += A.transpose() * G;
    }
  });
  ConstMapMat A(an->data.data(), m, k);
  ConstMapMat B(bn->data.data(), k, nc);
  MapMat C(out->data.data(), m, nc);
  C.noalias() = A * B;
  return Tensor(out);
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose: 2-D only");
  const int r = x.shape()[0], c = x.shape()[1];
  auto xn = x.node();
  auto out = make_op_node({c, r}, {xn}, [xn, r, c](TensorNode& self) {
    ensure_grad(*xn);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        xn->grad[static_cast<std::size_t>(i) * c + j] +=
            self.grad[static_cast<std::size_t>(j) * r + i];
  });
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->data[static_cast<std::size_t>(j) * r + i] =
          x[static_cast<std::size_t>(i) * c + j];
  return Tensor(out);
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, int stride) {
  if (x.rank() != 2 || kernel.rank() != 3)
    throw DimensionError("conv1d: x must be [T x d_in], kernel [k x d_in x d_out]");
  const int t_in = x.shape()[0], d_in = x.shape()[1];
  const int kw = kernel.shape()[0], kd = kernel.shape()[1],
            d_out = kernel.shape()[2];
  if (kw % 2 == 0)
    throw ConfigError("conv1d: kernel width must be odd, got " +
                      std::to_string(kw));
  if (kd != d_in)
    throw DimensionError("conv1d: kernel d_in " + std::to_string(kd) +
                         " != input d_in " + std::to_string(d_in));
  if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
  const int t_out = (t_in - 1) / stride + 1;  // ceil(T/stride), same padding
  const int half = kw / 2;
  auto xn = x.node();
  auto kn = kernel.node();
  auto out = make_op_node(
      {t_out, d_out}, {xn, kn},
      [xn, kn, t_in, d_in, kw, d_out, stride, t_out, half](TensorNode& self) {
        if (xn->requires_grad) ensure_grad(*xn);
        if (kn->requires_grad) ensure_grad(*kn);
        for (int i = 0; i < t_out; ++i)
          for (int j = 0; j < kw; ++j) {
            const int src = i * stride + j - half;
            if (src < 0 || src >= t_in) continue;
            for (int c = 0; c < d_in; ++c) {
              const double xv = xn->data[static_cast<std::size_t>(src) * d_in + c];
              for (int o = 0; o < d_out; ++o) {
                const double g =
                    self.grad[static_cast<std::size_t>(i) * d_out + o];
                const std::size_t kidx =
                    (static_cast<std::size_t>(j) * d_in + c) * d_out + o;
                if (xn->requires_grad)
                  xn->grad[static_cast<std::size_t>(src) * d_in + c] +=
                      g * kn->data[kidx];
                if (kn->requires_grad) kn->grad[kidx] += g * xv;
              }
            }
          }
      });
  for (int i = 0; i < t_out; ++i)
    for (int o = 0; o < d_out; ++o) {
      double acc = 0.0;
      for (int j = 0; j < kw; ++j) {
        const int src = i * stride + j - half;
        if (src < 0 || src >= t_in) continue;
        for (int c = 0; c < d_in; ++c)
          acc += x[static_cast<std::size_t>(src) * d_in + c] *
                 kernel[(static_cast<std::size_t>(j) * d_in + c) * d_out + o];
      }
      out->data[static_cast<std::size_t>(i) * d_out + o] = acc;
    }
  return Tensor(out);
}

Tensor masked_fill(const Tensor& x, const Tensor& mask, double value) {
  if (x.shape() != mask.shape())
    throw DimensionError("masked_fill: mask shape " + shape_str(mask.shape()) +
                         " != input shape " + shape_str(x.shape()));
  auto xn = x.node();
  auto mn = mask.node();
  auto out = make_op_node(x.shape(), {xn}, [xn, mn](TensorNode& self) {
    ensure_grad(*xn);
    for (std::size_t i = 0; i < self.data.size(); ++i)
      if (mn->data[i] != 0.0) xn->grad[i] += self.grad[i];
  });
  for (std::size_t i = 0; i < x.size(); ++i)
    out->data[i] = mask[i] != 0.0 ? x[i] : value;
  return Tensor(out);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const Tensor* mask) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw DimensionError("attention: q,k,v must be 2-D");
  const int u = q.shape()[0], d = q.shape()[1];
  const int t = k.shape()[0];
  if (k.shape()[1] != d || v.shape()[0] != t)
    throw DimensionError("attention: incompatible q/k/v shapes");
  if (mask != nullptr &&
      (mask->rank() != 2 || mask->shape()[0] != u || mask->shape()[1] != t))
    throw DimensionError("attention: mask must be [U x T] = [" +
                         std::to_string(u) + " x " + std::to_string(t) + "]");
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(d)));
  if (mask != nullptr) scores = masked_fill(scores, *mask, -1e30);
  return matmul(softmax(scores, 1), v);
}

Tensor broadcast_outer_sum(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1])
    throw DimensionError("broadcast_outer_sum: need [T x d] and [U x d]");
  const int t = a.shape()[0], u = b.shape()[0], d = a.shape()[1];
  auto an = a.node();
  auto bn = b.node();
  auto out = make_op_node({t, u, d}, {an, bn}, [an, bn, t, u, d](
                                                   TensorNode& self) {
    if (an->requires_grad) ensure_grad(*an);
    if (bn->requires_grad) ensure_grad(*bn);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < u; ++j)
        for (int c = 0; c < d; ++c) {
          const double g =
              self.grad[(static_cast<std::size_t>(i) * u + j) * d + c];
          if (an->requires_grad)
            an->grad[static_cast<std::size_t>(i) * d + c] += g;
          if (bn->requires_grad)
            bn->grad[static_cast<std::size_t>(j) * d + c] += g;
        }
  });
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < u; ++j)
      for (int c = 0; c < d; ++c)
        out->data[(static_cast<std::size_t>(i) * u + j) * d + c] =
            a[static_cast<std::size_t>(i) * d + c] +
            b[static_cast<std::size_t>(j) * d + c];
  return Tensor(out);
}

Tensor element(const Tensor& x, std::size_t flat_index) {
  if (flat_index >= x.size())
    throw DimensionError("element: index out of bounds");
  auto xn = x.node();
  auto out = make_op_node({1}, {xn}, [xn, flat_index](TensorNode& self) {
    ensure_grad(*xn);
    xn->grad[flat_index] += self.grad[0];
  });
  out->data[0] = x[flat_index];
  return Tensor(out);
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (shape_numel(shape) != x.size())
    throw DimensionError("reshape: element count mismatch, " +
                         shape_str(x.shape()) + " -> " + shape_str(shape));
  auto xn = x.node();
  auto out = make_op_node(std::move(shape), {xn}, [xn](TensorNode& self) {
    ensure_grad(*xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i] += self.grad[i];
  });
  std::copy(x.data().begin(), x.data().end(), out->data.begin());
  return Tensor(out);
}

Tensor row(const Tensor& x, int i) {
  if (x.rank() != 2) throw DimensionError("row: 2-D only");
  const int n = x.shape()[0], d = x.shape()[1];
  if (i < 0 || i >= n) throw DimensionError("row: index out of bounds");
  auto xn = x.node();
  auto out = make_op_node({d}, {xn}, [xn, i, d](TensorNode& self) {
    ensure_grad(*xn);
    for (int c = 0; c < d; ++c)
      xn->grad[static_cast<std::size_t>(i) * d + c] += self.grad[c];
  });
  std::copy(x.data().begin() + static_cast<std::size_t>(i) * d,
            x.data().begin() + static_cast<std::size_t>(i + 1) * d,
            out->data.begin());
  return Tensor(out);
}

Tensor rows(const Tensor& x, int start, int count) {
  if (x.rank() != 2) throw DimensionError("rows: 2-D only");
  const int n = x.shape()[0], d = x.shape()[1];
  if (start < 0 || count < 0 || start + count > n)
    throw DimensionError("rows: range out of bounds");
  auto xn = x.node();
  auto out = make_op_node({count, d}, {xn}, [xn, start, d](TensorNode& self) {
    ensure_grad(*xn);
    for (std::size_t i = 0; i < self.data.size(); ++i)
      xn->grad[static_cast<std::size_t>(start) * d + i] += self.grad[i];
  });
  std::copy(x.data().begin() + static_cast<std::size_t>(start) * d,
            x.data().begin() + static_cast<std::size_t>(start + count) * d,
            out->data.begin());
  return Tensor(out);
}

Tensor cols(const Tensor& x, int start, int count) {
  if (x.rank() != 2) throw DimensionError("cols: 2-D only");
  const int n = x.shape()[0], d = x.shape()[1];
  if (start < 0 || count < 0 || start + count > d)
    throw DimensionError("cols: range out of bounds");
  auto xn = x.node();
  auto out =
      make_op_node({n, count}, {xn}, [xn, start, count, d](TensorNode& self) {
        ensure_grad(*xn);
        const int n_ = static_cast<int>(self.data.size()) / count;
        for (int r = 0; r < n_; ++r)
          for (int c = 0; c < count; ++c)
            xn->grad[static_cast<std::size_t>(r) * d + start + c] +=
                self.grad[static_cast<std::size_t>(r) * count + c];
      });
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < count; ++c)
      out->data[static_cast<std::size_t>(r) * count + c] =
          x[static_cast<std::size_t>(r) * d + start + c];
  return Tensor(out);
}

Tensor stack_rows(const std::vector<Tensor>& rows_in) {
  if (rows_in.empty()) throw DimensionError("stack_rows: empty input");
  const int d = static_cast<int>(rows_in[0].size());
  std::vector<NodePtr> parents;
  parents.reserve(rows_in.size());
  for (const auto& r : rows_in) {
    if (static_cast<int>(r.size()) != d)
      throw DimensionError("stack_rows: rows differ in length");
    parents.push_back(r.node());
  }
  auto out = make_op_node(
      {static_cast<int>(rows_in.size()), d}, parents, [d](TensorNode& self) {
        for (std::size_t r = 0; r < self.parents.size(); ++r) {
          auto& p = *self.parents[r];
          if (!p.requires_grad) continue;
          ensure_grad(p);
          for (int c = 0; c < d; ++c) p.grad[c] += self.grad[r * d + c];
        }
      });
  for (std::size_t r = 0; r < rows_in.size(); ++r)
    std::copy(rows_in[r].data().begin(), rows_in[r].data().end(),
              out->data.begin() + r * d);
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& pieces) {
  if (pieces.empty()) throw DimensionError("concat_cols: empty input");
  const int n = pieces[0].shape()[0];
  int total = 0;
  std::vector<NodePtr> parents;
  std::vector<int> widths;
  for (const auto& p : pieces) {
    if (p.rank() != 2 || p.shape()[0] != n)
      throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
    parents.push_back(p.node());
  }
  auto out = make_op_node(
      {n, total}, parents, [n, total, widths](TensorNode& self) {
        int off = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          auto& p = *self.parents[k];
          const int w = widths[k];
          if (p.requires_grad) {
            ensure_grad(p);
            for (int r = 0; r < n; ++r)
              for (int c = 0; c < w; ++c)
                p.grad[static_cast<std::size_t>(r) * w + c] +=
                    self.grad[static_cast<std::size_t>(r) * total + off + c];
          }
          off += w;
        }
      });
  int off = 0;
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const int w = widths[k];
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < w; ++c)
        out->data[static_cast<std::size_t>(r) * total + off + c] =
            pieces[k][static_cast<std::size_t>(r) * w + c];
    off += w;
  }
  return Tensor(out);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw DimensionError("embedding_lookup: table 2-D");
  const int n = table.shape()[0], d = table.shape()[1];
  for (int id : ids)
    if (id < 0 || id >= n)
      throw VocabError("embedding_lookup: id " + std::to_string(id) +
                       " outside table of " + std::to_string(n) + " rows");
  auto tn = table.node();
  auto ids_copy = ids;
  auto out = make_op_node({static_cast<int>(ids.size()), d}, {tn},
                          [tn, ids_copy, d](TensorNode& self) {
                            ensure_grad(*tn);
                            for (std::size_t r = 0; r < ids_copy.size(); ++r)
                              for (int c = 0; c < d; ++c)
                                tn->grad[static_cast<std::size_t>(ids_copy[r]) *
                                             d + c] += self.grad[r * d + c];
                          });
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy(table.data().begin() + static_cast<std::size_t>(ids[r]) * d,
              table.data().begin() + static_cast<std::size_t>(ids[r] + 1) * d,
              out->data.begin() + r * d);
  return Tensor(out);
}

Tensor nll_pick(const Tensor& logp, const std::vector<int>& targets) {
  if (logp.rank() != 2) throw DimensionError("nll_pick: logp must be 2-D");
  const int u = logp.shape()[0], v = logp.shape()[1];
  if (static_cast<int>(targets.size()) != u)
    throw DimensionError("nll_pick: target length " +
                         std::to_string(targets.size()) + " != rows " +
                         std::to_string(u));
  for (int id : targets)
    if (id < 0 || id >= v)
      throw VocabError("nll_pick: target id " + std::to_string(id) +
                       " outside vocab " + std::to_string(v));
  auto ln = logp.node();
  auto tcopy = targets;
  auto out = make_op_node({1}, {ln}, [ln, tcopy, v](TensorNode& self) {
    ensure_grad(*ln);
    const double g = self.grad[0] / static_cast<double>(tcopy.size());
    for (std::size_t r = 0; r < tcopy.size(); ++r)
      ln->grad[r * v + tcopy[r]] -= g;
  });
  double acc = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r)
    acc -= logp[r * v + targets[r]];
  out->data[0] = acc / static_cast<double>(targets.size());
  return Tensor(out);
}

void backward(const Tensor& loss) {
  auto root = loss.node();
  if (!root) throw NumericError("backward: undefined tensor");
  if (root->data.size() != 1)
    throw DimensionError("backward: loss must be scalar, got " +
                         shape_str(root->shape));
  if (root->backward_ran)
    throw NumericError("backward: called twice on the same graph");
  root->backward_ran = true;

  // iterative post-order DFS -> topological order
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  ensure_grad(*root);
  root->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

}  // namespace cift
