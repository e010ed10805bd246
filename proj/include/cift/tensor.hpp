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

#ifndef CIFT_TENSOR_HPP
#define CIFT_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cift/errors.hpp"

namespace cift {

// Byte accounting for every tensor data/grad buffer. Used by the
// memory benchmark; reset_peak() before a trial, read peak after.
struct MemTracker {
  static std::int64_t live;
  static std::int64_t peak;
  static void add(std::int64_t b);
  static void sub(std::int64_t b);
  static void reset_peak();
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the define-by-run graph. The graph is rebuilt on every
// forward pass; backward() walks parents in reverse topological order.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until needed; leaves allocate eagerly
  bool requires_grad = false;
  bool backward_ran = false;  // set on a node backward() was called on
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  TensorNode() = default;
  ~TensorNode();
  TensorNode(const TensorNode&) = delete;
  TensorNode& operator=(const TensorNode&) = delete;

  void alloc_data(std::size_t n);
  void alloc_grad();  // zero-filled, same size as data
  std::size_t size() const { return data.size(); }
};

// Value-semantics handle to a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> data,
                     bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->data.size(); }
  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double value() const;  // scalar tensors only
  double operator[](std::size_t i) const { return node_->data[i]; }

  void zero_grad();

  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// Deterministic RNG used everywhere (data generation, init, probes).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }
  int uniform_int(int lo, int hi);  // inclusive range
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

Tensor randn(std::vector<int> shape, Rng& rng, double scale = 1.0,
             bool requires_grad = false);

// ---- elementwise / arithmetic ----
// Binary ops broadcast when shapes are equal, one side is a scalar, or
// the smaller shape is a trailing suffix of the larger (leading-extent
// broadcast). Anything else throws DimensionError.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor scale(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor absval(const Tensor& x);  // subgradient 0 at the kink

// ---- reductions / normalization ----
Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);

// ---- linear algebra ----
// a: [... x k], b: [k x n] -> [... x n]; leading extents of a are
// treated as flattened rows.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);  // 2-D only, copies

// 1-D convolution over frames. x: [T x d_in], kernel: [k x d_in x d_out],
// zero same-padding, odd k required. stride > 1 keeps ceil(T/stride) frames.
Tensor conv1d(const Tensor& x, const Tensor& kernel, int stride = 1);

// Scaled dot-product attention. q: [U x d], k,v: [T x d].
// mask (optional): [U x T] validity (0 excludes a key); scores at excluded
// positions are pushed to -1e30 before the softmax.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const Tensor* mask = nullptr);

// Fills positions where mask == 0 with `value`; grad flows only through
// kept positions. mask is data, never differentiated.
Tensor masked_fill(const Tensor& x, const Tensor& mask, double value);

// a: [T x d], b: [U x d] -> [T x U x d] with out[t,u,:] = a[t,:] + b[u,:].
// This is the broadcast join of the baseline transducer.
Tensor broadcast_outer_sum(const Tensor& a, const Tensor& b);

// ---- indexing / assembly (slices copy) ----
Tensor element(const Tensor& x, std::size_t flat_index);  // -> scalar
Tensor reshape(const Tensor& x, std::vector<int> shape);  // same numel, copies
Tensor row(const Tensor& x, int i);                      // [n x d] -> [d]
Tensor rows(const Tensor& x, int start, int count);      // [n x d] -> [count x d]
Tensor cols(const Tensor& x, int start, int count);      // [n x d] -> [n x count]
Tensor stack_rows(const std::vector<Tensor>& rows);      // k x [d] -> [k x d]
Tensor concat_cols(const std::vector<Tensor>& pieces);   // [n x di] -> [n x sum di]

// table: [N x d], one output row per id; ids must be < N.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

// Mean of -logp[u, targets[u]] over rows. logp: [U x V].
Tensor nll_pick(const Tensor& logp, const std::vector<int>& targets);

// Reverse-mode sweep from a scalar loss. Accumulates into .grad of every
// requires_grad leaf reachable from `loss`. Calling twice on the same
// node throws.
void backward(const Tensor& loss);

}  // namespace cift

#endif  // CIFT_TENSOR_HPP
