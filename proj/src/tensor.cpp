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

#include "stainfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "stainfuse/errors.hpp"

namespace stainfuse {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " + shape_string(t.shape()));
  }
}

// C (m x n) += A (m x k) * B (k x n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (m x k) += G (m x n) * B^T, with B (k x n)
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C (k x n) += A^T * G, with A (m x k), G (m x n)
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

// Flat index of operand element (i, j) under the restricted broadcast rule.
struct Broadcast {
  std::size_t rows, cols;
  bool row_bcast, col_bcast;
  std::size_t at(std::size_t i, std::size_t j) const {
    return (row_bcast ? 0 : i) * cols + (col_bcast ? 0 : j);
  }
};

bool fits(const Shape& s, std::size_t m, std::size_t n) {
  return (s[0] == m || s[0] == 1) && (s[1] == n || s[1] == 1);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

Tensor::Tensor() : node_(std::make_shared<TensorNode>()) { node_->shape = {0, 0}; }

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<TensorNode>()) {
  node_->data.assign(shape_product(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<TensorNode>()) {
  if (shape_product(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, std::vector<double>{value}); }

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return node_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data); }

bool Tensor::all_finite() const {
  return std::all_of(node_->data.begin(), node_->data.end(), [](double v) { return std::isfinite(v); });
}

Tensor make_output(Shape shape) { return Tensor(std::move(shape), 0.0); }

std::vector<double>& grad_buffer(TensorNode& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0);
  return node.grad;
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw DomainError(std::string(op) + ": produced a non-finite value");
}

bool Tape::needs(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

bool Tape::needs(std::span<const Tensor> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

void Tape::record(const char* op, const Tensor& output, BackwardFn fn) {
  output.node()->requires_grad = true;
  records_.push_back(Record{op, output.node(), std::move(fn)});
}

void backward(Tape& tape, const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  if (tape.records_.empty()) throw ContractError("backward: tape is empty");
  grad_buffer(*loss.node())[0] += 1.0;
  for (auto it = tape.records_.rbegin(); it != tape.records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
  }
}

const char* elementwise_name(Elementwise op) {
  switch (op) {
    case Elementwise::Add: return "add";
    case Elementwise::Sub: return "sub";
    case Elementwise::Mul: return "mul";
    case Elementwise::Relu: return "relu";
    case Elementwise::Tanh: return "tanh";
    case Elementwise::Sigmoid: return "sigmoid";
    case Elementwise::GaussCdf: return "gauss_cdf";
    case Elementwise::Log: return "log";
    case Elementwise::Neg: return "neg";
    case Elementwise::Exp: return "exp";
    case Elementwise::Softplus: return "softplus";
    case Elementwise::Rsqrt: return "rsqrt";
  }
  return "?";
}

double gauss_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gauss_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

Tensor elementwise(Tape& tape, Elementwise op, const Tensor& a) {
  require_rank2(a, elementwise_name(op));
  const auto x = a.values();
  Tensor out = make_output(a.shape());
  auto y = out.values();
  const std::size_t n = x.size();
  switch (op) {
    case Elementwise::Relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Elementwise::Tanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
      break;
    case Elementwise::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = stable_sigmoid(x[i]);
      break;
    case Elementwise::GaussCdf:
      for (std::size_t i = 0; i < n; ++i) y[i] = gauss_cdf(x[i]);
      break;
    case Elementwise::Log:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(x[i]));
        y[i] = std::log(x[i]);
      }
      break;
    case Elementwise::Neg:
      for (std::size_t i = 0; i < n; ++i) y[i] = -x[i];
      break;
    case Elementwise::Exp:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
      break;
    case Elementwise::Softplus:
      for (std::size_t i = 0; i < n; ++i) y[i] = stable_softplus(x[i]);
      break;
    case Elementwise::Rsqrt:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0)) throw DomainError("rsqrt: non-positive argument " + std::to_string(x[i]));
        y[i] = 1.0 / std::sqrt(x[i]);
      }
      break;
    default:
      throw ContractError(std::string("elementwise: ") + elementwise_name(op) + " needs two operands");
  }
  check_finite(out, elementwise_name(op));
  if (tape.needs({&a})) {
    auto an = a.node();
    auto yn = out.node();
    tape.record(elementwise_name(op), out, [op, an, yn](std::span<const double> g) {
      if (!an->requires_grad) return;
      auto& ga = grad_buffer(*an);
      const auto& x = an->data;
      const auto& y = yn->data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = 0.0;
        switch (op) {
          case Elementwise::Relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
          case Elementwise::Tanh: d = 1.0 - y[i] * y[i]; break;
          case Elementwise::Sigmoid: d = y[i] * (1.0 - y[i]); break;
          case Elementwise::GaussCdf: d = gauss_pdf(x[i]); break;
          case Elementwise::Log: d = 1.0 / x[i]; break;
          case Elementwise::Neg: d = -1.0; break;
          case Elementwise::Exp: d = y[i]; break;
          case Elementwise::Softplus: d = stable_sigmoid(x[i]); break;
          case Elementwise::Rsqrt: d = -0.5 * y[i] / x[i]; break;
          default: break;
        }
        ga[i] += g[i] * d;
      }
    });
  }
  return out;
}

Tensor elementwise(Tape& tape, Elementwise op, const Tensor& a, const Tensor& b) {
  if (op != Elementwise::Add && op != Elementwise::Sub && op != Elementwise::Mul) {
    throw ContractError(std::string("elementwise: ") + elementwise_name(op) + " is unary");
  }
  require_rank2(a, elementwise_name(op));
  require_rank2(b, elementwise_name(op));
  const std::size_t m = std::max(a.rows(), b.rows());
  const std::size_t n = std::max(a.cols(), b.cols());
  const bool a_full = a.rows() == m && a.cols() == n;
  const bool b_full = b.rows() == m && b.cols() == n;
  if (!(a_full || b_full) || !fits(a.shape(), m, n) || !fits(b.shape(), m, n)) {
    throw ShapeError(std::string(elementwise_name(op)) + ": cannot broadcast " + shape_string(a.shape()) +
                     " with " + shape_string(b.shape()));
  }
  const Broadcast ba{a.rows(), a.cols(), a.rows() == 1 && m != 1, a.cols() == 1 && n != 1};
  const Broadcast bb{b.rows(), b.cols(), b.rows() == 1 && m != 1, b.cols() == 1 && n != 1};
  Tensor out = make_output({m, n});
  const auto x = a.values();
  const auto z = b.values();
  auto y = out.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double u = x[ba.at(i, j)];
      const double v = z[bb.at(i, j)];
      double r = 0.0;
      if (op == Elementwise::Add) r = u + v;
      else if (op == Elementwise::Sub) r = u - v;
      else r = u * v;
      y[i * n + j] = r;
    }
  }
  check_finite(out, elementwise_name(op));
  if (tape.needs({&a, &b})) {
    auto an = a.node();
    auto bn = b.node();
    tape.record(elementwise_name(op), out, [op, an, bn, ba, bb, m, n](std::span<const double> g) {
      if (an->requires_grad) {
        auto& ga = grad_buffer(*an);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            const double d = op == Elementwise::Mul ? bn->data[bb.at(i, j)] : 1.0;
            ga[ba.at(i, j)] += gij * d;
          }
        }
      }
      if (bn->requires_grad) {
        auto& gb = grad_buffer(*bn);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            double d = 1.0;
            if (op == Elementwise::Sub) d = -1.0;
            else if (op == Elementwise::Mul) d = an->data[ba.at(i, j)];
            gb[bb.at(i, j)] += gij * d;
          }
        }
      }
    });
  }
  return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_output({m, n});
  gemm_nn(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  check_finite(out, "matmul");
  if (tape.needs({&a, &b})) {
    auto an = a.node();
    auto bn = b.node();
    tape.record("matmul", out, [an, bn, m, k, n](std::span<const double> g) {
      if (an->requires_grad) gemm_nt(g.data(), bn->data.data(), grad_buffer(*an).data(), m, n, k);
      if (bn->requires_grad) gemm_tn(an->data.data(), g.data(), grad_buffer(*bn).data(), m, k, n);
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  require_rank2(a, "scale");
  Tensor out = make_output(a.shape());
  auto y = out.values();
  const auto x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * factor;
  check_finite(out, "scale");
  if (tape.needs({&a})) {
    auto an = a.node();
    tape.record("scale", out, [an, factor](std::span<const double> g) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor add_scalar(Tape& tape, const Tensor& a, double offset) {
  require_rank2(a, "add_scalar");
  Tensor out = make_output(a.shape());
  auto y = out.values();
  const auto x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + offset;
  check_finite(out, "add_scalar");
  if (tape.needs({&a})) {
    auto an = a.node();
    tape.record("add_scalar", out, [an](std::span<const double> g) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  const auto x = a.values();
  double total = 0.0;
  for (double v : x) total += v;
  Tensor out = Tensor::scalar(total);
  check_finite(out, "sum");
  if (tape.needs({&a})) {
    auto an = a.node();
    tape.record("sum", out, [an](std::span<const double> g) {
      auto& ga = grad_buffer(*an);
      for (double& v : ga) v += g[0];
    });
  }
  return out;
}

Tensor sum_rows(Tape& tape, const Tensor& a) {
  require_rank2(a, "sum_rows");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = make_output({1, n});
  auto y = out.values();
  const auto x = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += x[i * n + j];
  check_finite(out, "sum_rows");
  if (tape.needs({&a})) {
    auto an = a.node();
    tape.record("sum_rows", out, [an, m, n](std::span<const double> g) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j];
    });
  }
  return out;
}

Tensor mean_rows(Tape& tape, const Tensor& a) {
  require_rank2(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) throw ContractError("mean_rows: tensor has no rows");
  Tensor out = make_output({1, n});
  auto y = out.values();
  const auto x = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += x[i * n + j];
  const double inv = 1.0 / static_cast<double>(m);
  for (double& v : y) v *= inv;
  check_finite(out, "mean_rows");
  if (tape.needs({&a})) {
    auto an = a.node();
    tape.record("mean_rows", out, [an, m, n, inv](std::span<const double> g) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row counts differ, " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    }
    n += p.cols();
  }
  Tensor out = make_output({m, n});
  auto y = out.values();
  std::size_t offset = 0;
  std::vector<std::pair<std::shared_ptr<TensorNode>, std::size_t>> sources;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    const auto x = p.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < pc; ++j) y[i * n + offset + j] = x[i * pc + j];
    sources.emplace_back(p.node(), offset);
    offset += pc;
  }
  if (tape.needs(parts)) {
    tape.record("concat_cols", out, [sources, m, n](std::span<const double> g) {
      for (const auto& [node, off] : sources) {
        if (!node->requires_grad) continue;
        auto& gp = grad_buffer(*node);
        const std::size_t pc = node->shape[1];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += g[i * n + off + j];
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column counts differ, " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    }
    m += p.rows();
  }
  Tensor out = make_output({m, n});
  auto y = out.values();
  std::size_t offset = 0;
  std::vector<std::pair<std::shared_ptr<TensorNode>, std::size_t>> sources;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), y.begin() + static_cast<std::ptrdiff_t>(offset));
    sources.emplace_back(p.node(), offset);
    offset += p.size();
  }
  if (tape.needs(parts)) {
    tape.record("concat_rows", out, [sources](std::span<const double> g) {
      for (const auto& [node, off] : sources) {
        if (!node->requires_grad) continue;
        auto& gp = grad_buffer(*node);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      }
    });
  }
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const std::size_t> index) {
  require_rank2(a, "gather_rows");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = make_output({index.size(), n});
  auto y = out.values();
  const auto x = a.values();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= m) {
      throw ContractError("gather_rows: row " + std::to_string(index[r]) + " out of range for " +
                          shape_string(a.shape()));
    }
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(index[r] * n), n,
                y.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  if (tape.needs({&a})) {
    auto an = a.node();
    std::vector<std::size_t> idx(index.begin(), index.end());
    tape.record("gather_rows", out, [an, idx = std::move(idx), n](std::span<const double> g) {
      auto& ga = grad_buffer(*an);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) ga[idx[r] * n + j] += g[r * n + j];
    });
  }
  return out;
}

Tensor take(Tape& tape, const Tensor& a, std::span<const std::size_t> index) {
  Tensor out = make_output({index.size(), 1});
  auto y = out.values();
  const auto x = a.values();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= x.size()) {
      throw ContractError("take: index " + std::to_string(index[r]) + " out of range for " +
                          shape_string(a.shape()));
    }
    y[r] = x[index[r]];
  }
  if (tape.needs({&a})) {
    auto an = a.node();
    std::vector<std::size_t> idx(index.begin(), index.end());
    tape.record("take", out, [an, idx = std::move(idx)](std::span<const double> g) {
      auto& ga = grad_buffer(*an);
      for (std::size_t r = 0; r < idx.size(); ++r) ga[idx[r]] += g[r];
    });
  }
  return out;
}

Tensor neighbor_sum(Tape& tape, const Tensor& h, std::span<const Edge> edges) {
  require_rank2(h, "neighbor_sum");
  const std::size_t m = h.rows(), n = h.cols();
  Tensor out = make_output({m, n});
  auto y = out.values();
  const auto x = h.values();
  for (const auto& [src, dst] : edges) {
    if (src >= m || dst >= m) {
      throw ContractError("neighbor_sum: edge (" + std::to_string(src) + "," + std::to_string(dst) +
                          ") out of range for " + std::to_string(m) + " nodes");
    }
    const double* xs = x.data() + static_cast<std::size_t>(src) * n;
    double* yd = y.data() + static_cast<std::size_t>(dst) * n;
    for (std::size_t j = 0; j < n; ++j) yd[j] += xs[j];
  }
  if (tape.needs({&h})) {
    auto hn = h.node();
    std::vector<Edge> copy(edges.begin(), edges.end());
    tape.record("neighbor_sum", out, [hn, copy = std::move(copy), n](std::span<const double> g) {
      auto& gh = grad_buffer(*hn);
      for (const auto& [src, dst] : copy) {
        const double* gd = g.data() + static_cast<std::size_t>(dst) * n;
        double* gs = gh.data() + static_cast<std::size_t>(src) * n;
        for (std::size_t j = 0; j < n; ++j) gs[j] += gd[j];
      }
    });
  }
  return out;
}

Tensor outer_flat(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "outer_flat");
  require_rank2(b, "outer_flat");
  if (a.rows() != 1 || b.rows() != 1) {
    throw ShapeError("outer_flat: expected row vectors, got " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t m = a.cols(), n = b.cols();
  Tensor out = make_output({1, m * n});
  auto y = out.values();
  const auto x = a.values();
  const auto z = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i] * z[j];
  check_finite(out, "outer_flat");
  if (tape.needs({&a, &b})) {
    auto an = a.node();
    auto bn = b.node();
    tape.record("outer_flat", out, [an, bn, m, n](std::span<const double> g) {
      if (an->requires_grad) {
        auto& ga = grad_buffer(*an);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i] += g[i * n + j] * bn->data[j];
      }
      if (bn->requires_grad) {
        auto& gb = grad_buffer(*bn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j] * an->data[i];
      }
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& a, double p, const ForwardMode& mode) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: probability must be in [0, 1)");
  if (!mode.training || p == 0.0) return a;
  if (mode.rng == nullptr) throw ContractError("dropout: training mode requires a random source");
  const double keep = 1.0 - p;
  std::vector<double> mask(a.size());
  for (double& m : mask) m = uniform01(*mode.rng) < keep ? 1.0 / keep : 0.0;
  Tensor out = make_output(a.shape());
  auto y = out.values();
  const auto x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
  if (tape.needs({&a})) {
    auto an = a.node();
    tape.record("dropout", out, [an, mask = std::move(mask)](std::span<const double> g) {
      auto& ga = grad_buffer(*an);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    });
  }
  return out;
}

}  // namespace stainfuse
