// Copyright 2026 The stainfuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense 64-bit tensors with a reverse-mode tape.
//
// A Tensor is a shared handle: copying it aliases the same storage, which is
// what lets the tape route gradients back to parameters. Use clone() for an
// independent copy. Numeric ops are restricted to rank-2 tensors; a scalar is
// a 1x1 tensor and a vector is a 1xn row.
//
// Ops record a backward rule on the Tape they are given only when the tape is
// recording and at least one input requires a gradient. Every op output is
// checked for NaN/Inf and a DomainError is thrown if one appears.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stainfuse/rng.hpp"

namespace stainfuse {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return node_->data; }
  std::span<const double> values() const { return node_->data; }
  double& operator()(std::size_t r, std::size_t c) { return node_->data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zeros of the tensor's size when nothing was accumulated.
  std::vector<double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  /// Independent copy of the values with no gradient state.
  Tensor clone() const;
  bool all_finite() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode> node_;

  friend Tensor make_output(Shape shape);
};

/// Allocate an op output. Exposed for modules that register custom ops.
Tensor make_output(Shape shape);

/// Ordered record of executed ops. Backward visits records in reverse.
class Tape {
 public:
  /// Receives the gradient flowing into the op's output.
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }
  std::size_t size() const { return records_.size(); }

  /// True when an op with these inputs must be recorded.
  bool needs(std::initializer_list<const Tensor*> inputs) const;
  bool needs(std::span<const Tensor> inputs) const;

  /// Mark `output` as differentiable and register its backward rule.
  void record(const char* op, const Tensor& output, BackwardFn fn);

 private:
  struct Record {
    const char* op;
    std::shared_ptr<TensorNode> output;
    BackwardFn backward;
  };
  std::vector<Record> records_;
  bool recording_ = true;

  friend void backward(Tape& tape, const Tensor& loss);
};

/// Accumulate d(loss)/d(leaf) into every requires_grad tensor reachable on the tape.
void backward(Tape& tape, const Tensor& loss);

/// Lazily sized gradient buffer of a node; used by backward rules.
std::vector<double>& grad_buffer(TensorNode& node);

/// Throws DomainError naming `op` when `t` holds NaN or Inf.
void check_finite(const Tensor& t, const char* op);

struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;  // required for dropout while training
};

enum class Elementwise { Add, Sub, Mul, Relu, Tanh, Sigmoid, GaussCdf, Log, Neg, Exp, Softplus, Rsqrt };

const char* elementwise_name(Elementwise op);

/// Standard normal CDF via erfc.
double gauss_cdf(double x);
double gauss_pdf(double x);

Tensor elementwise(Tape& tape, Elementwise op, const Tensor& a);
Tensor elementwise(Tape& tape, Elementwise op, const Tensor& a, const Tensor& b);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

inline Tensor add(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, Elementwise::Add, a, b); }
inline Tensor sub(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, Elementwise::Sub, a, b); }
inline Tensor mul(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, Elementwise::Mul, a, b); }
inline Tensor relu(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::Relu, a); }
inline Tensor tanh(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::Tanh, a); }
inline Tensor sigmoid(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::Sigmoid, a); }
inline Tensor gauss_cdf(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::GaussCdf, a); }
inline Tensor log(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::Log, a); }
inline Tensor neg(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::Neg, a); }
inline Tensor exp(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::Exp, a); }
inline Tensor softplus(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::Softplus, a); }
inline Tensor rsqrt(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::Rsqrt, a); }

Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor add_scalar(Tape& tape, const Tensor& a, double offset);

/// Sum of all entries -> 1x1.
Tensor sum(Tape& tape, const Tensor& a);
/// Column sums over rows -> 1xn.
Tensor sum_rows(Tape& tape, const Tensor& a);
/// Column means over rows -> 1xn.
Tensor mean_rows(Tape& tape, const Tensor& a);

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
inline Tensor concat_cols(Tape& tape, std::initializer_list<Tensor> parts) {
  return concat_cols(tape, std::span<const Tensor>(parts.begin(), parts.size()));
}

/// Rows of `a` at `index`, in order (repeats allowed).
Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const std::size_t> index);
/// Flat entries of `a` at `index` -> n x 1 column.
Tensor take(Tape& tape, const Tensor& a, std::span<const std::size_t> index);

using Edge = std::pair<std::uint32_t, std::uint32_t>;  // (src, dst)

/// out[dst] += h[src] for each edge: the in-neighbour sum of every node.
Tensor neighbor_sum(Tape& tape, const Tensor& h, std::span<const Edge> edges);

/// Flattened outer product of two row vectors: out[i * n + j] = a[i] * b[j].
Tensor outer_flat(Tape& tape, const Tensor& a, const Tensor& b);

/// Inverted dropout; identity unless mode.training and p > 0.
Tensor dropout(Tape& tape, const Tensor& a, double p, const ForwardMode& mode);

}  // namespace stainfuse
