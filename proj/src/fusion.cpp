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

#include "stainfuse/fusion.hpp"

#include <array>

#include "stainfuse/errors.hpp"

namespace stainfuse {

namespace {

constexpr std::array<std::pair<Strategy, std::string_view>, 8> kStrategyNames{{
    {Strategy::UnimodalA, "unimodal_a"},
    {Strategy::UnimodalB, "unimodal_b"},
    {Strategy::LateConcat, "late_concat"},
    {Strategy::LateAdd, "late_add"},
    {Strategy::LateHadamard, "late_hadamard"},
    {Strategy::KroneckerGated, "kronecker_gated"},
    {Strategy::Gimp, "gimp"},
    {Strategy::Gaimp, "gaimp"},
}};

void require_row(const Tensor& v, const char* what) {
  if (v.rank() != 2 || v.rows() != 1) throw ShapeError(std::string(what) + " must be a 1 x d row, got " + shape_string(v.shape()));
}

void require_projection(const Tensor& v, const Tensor& w, const char* what) {
  if (w.rank() != 2 || w.rows() != v.cols()) {
    throw ShapeError(std::string(what) + ": projection " + shape_string(w.shape()) + " does not accept input " +
                     shape_string(v.shape()));
  }
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  for (const auto& [k, name] : kStrategyNames)
    if (k == s) return name;
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (const auto& [k, n] : kStrategyNames)
    if (n == name) return k;
  std::string known;
  for (const auto& [k, n] : kStrategyNames) known += (known.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("unknown fusion strategy '" + std::string(name) + "' (expected one of " + known + ")");
}

bool is_unimodal(Strategy s) { return s == Strategy::UnimodalA || s == Strategy::UnimodalB; }
bool is_mid_fusion(Strategy s) { return s == Strategy::Gimp || s == Strategy::Gaimp; }

Tensor fuse_concat(Tape& tape, const Tensor& h, const Tensor& t) {
  require_row(h, "fuse_concat: h");
  require_row(t, "fuse_concat: t");
  return concat_cols(tape, {h, t});
}

Tensor fuse_add(Tape& tape, const Tensor& h, const Tensor& t, const Tensor& w_h, const Tensor& w_t) {
  require_projection(h, w_h, "fuse_add W_H");
  require_projection(t, w_t, "fuse_add W_T");
  if (w_h.cols() != w_t.cols()) {
    throw ShapeError("fuse_add: W_H " + shape_string(w_h.shape()) + " and W_T " + shape_string(w_t.shape()) +
                     " project to different widths");
  }
  return add(tape, matmul(tape, h, w_h), matmul(tape, t, w_t));
}

Tensor fuse_hadamard(Tape& tape, const Tensor& h, const Tensor& t, const Tensor& w_h, const Tensor& w_t) {
  require_projection(h, w_h, "fuse_hadamard W_H");
  require_projection(t, w_t, "fuse_hadamard W_T");
  if (w_h.cols() != w_t.cols()) {
    throw ShapeError("fuse_hadamard: W_H " + shape_string(w_h.shape()) + " and W_T " + shape_string(w_t.shape()) +
                     " project to different widths");
  }
  return mul(tape, matmul(tape, h, w_h), matmul(tape, t, w_t));
}

KroneckerParams KroneckerParams::create(ParamStore& store, const std::string& prefix, std::size_t d_h,
                                        std::size_t d_t, std::size_t k, bool bilinear, Rng& rng) {
  KroneckerParams p;
  p.w_h = store.add(prefix + ".w_h", glorot(rng, d_h, k));
  p.w_t = store.add(prefix + ".w_t", glorot(rng, d_t, k));
  if (bilinear) {
    p.bil_u_h = store.add(prefix + ".bil_u_h", glorot(rng, d_h, k));
    p.bil_v_h = store.add(prefix + ".bil_v_h", glorot(rng, d_t, k));
    p.bil_u_t = store.add(prefix + ".bil_u_t", glorot(rng, d_h, k));
    p.bil_v_t = store.add(prefix + ".bil_v_t", glorot(rng, d_t, k));
  } else {
    p.gate_h = store.add(prefix + ".gate_h", glorot(rng, d_h + d_t, k));
    p.gate_t = store.add(prefix + ".gate_t", glorot(rng, d_h + d_t, k));
  }
  return p;
}

KroneckerParams KroneckerParams::bind(ParamStore& store, const std::string& prefix, bool bilinear) {
  KroneckerParams p;
  p.w_h = store.get(prefix + ".w_h");
  p.w_t = store.get(prefix + ".w_t");
  if (bilinear) {
    p.bil_u_h = store.get(prefix + ".bil_u_h");
    p.bil_v_h = store.get(prefix + ".bil_v_h");
    p.bil_u_t = store.get(prefix + ".bil_u_t");
    p.bil_v_t = store.get(prefix + ".bil_v_t");
  } else {
    p.gate_h = store.get(prefix + ".gate_h");
    p.gate_t = store.get(prefix + ".gate_t");
  }
  return p;
}

std::pair<Tensor, Tensor> kronecker_gates(Tape& tape, const Tensor& h, const Tensor& t, const KroneckerParams& p,
                                          bool bilinear) {
  require_row(h, "kronecker: h");
  require_row(t, "kronecker: t");
  require_projection(h, p.w_h, "kronecker W_H");
  require_projection(t, p.w_t, "kronecker W_T");
  Tensor alpha_h, alpha_t;
  if (bilinear) {
    alpha_h = sigmoid(tape, mul(tape, matmul(tape, h, p.bil_u_h), matmul(tape, t, p.bil_v_h)));
    alpha_t = sigmoid(tape, mul(tape, matmul(tape, h, p.bil_u_t), matmul(tape, t, p.bil_v_t)));
  } else {
    const Tensor ht = concat_cols(tape, {h, t});
    require_projection(ht, p.gate_h, "kronecker gate");
    alpha_h = sigmoid(tape, matmul(tape, ht, p.gate_h));
    alpha_t = sigmoid(tape, matmul(tape, ht, p.gate_t));
  }
  Tensor hp = mul(tape, alpha_h, relu(tape, matmul(tape, h, p.w_h)));
  Tensor tp = mul(tape, alpha_t, relu(tape, matmul(tape, t, p.w_t)));
  return {std::move(hp), std::move(tp)};
}

Tensor fuse_kronecker_gated(Tape& tape, const Tensor& h, const Tensor& t, const KroneckerParams& p, bool bilinear) {
  auto [hp, tp] = kronecker_gates(tape, h, t, p, bilinear);
  const Tensor one = Tensor::scalar(1.0);
  return outer_flat(tape, concat_cols(tape, {hp, one}), concat_cols(tape, {tp, one}));
}

CrossParams CrossParams::create(ParamStore& store, const std::string& prefix, std::size_t d_h, std::size_t d_t,
                                Rng& rng) {
  CrossParams p;
  p.w_th = store.add(prefix + ".w_th", glorot(rng, d_t, d_h));
  p.w_ht = store.add(prefix + ".w_ht", glorot(rng, d_h, d_t));
  return p;
}

CrossParams CrossParams::bind(ParamStore& store, const std::string& prefix) {
  return {store.get(prefix + ".w_th"), store.get(prefix + ".w_ht")};
}

namespace {

std::pair<NodeState, NodeState> inject(Tape& tape, const NodeState& h, const NodeState& t, const Tensor& h_sum,
                                       const Tensor& t_sum, const CrossParams& cross, double dropout_p,
                                       const ForwardMode& mode) {
  require_projection(t_sum, cross.w_th, "inter-message W_TH");
  require_projection(h_sum, cross.w_ht, "inter-message W_HT");
  const Tensor to_h = dropout(tape, relu(tape, matmul(tape, t_sum, cross.w_th)), dropout_p, mode);
  const Tensor to_t = dropout(tape, relu(tape, matmul(tape, h_sum, cross.w_ht)), dropout_p, mode);
  NodeState h2{add(tape, h.h, to_h), h.active_index, h.edges};
  NodeState t2{add(tape, t.h, to_t), t.active_index, t.edges};
  return {std::move(h2), std::move(t2)};
}

}  // namespace

std::pair<NodeState, NodeState> gimp_step(Tape& tape, const NodeState& h, const NodeState& t, const CrossParams& cross,
                                          double dropout_p, const ForwardMode& mode) {
  const Tensor h_sum = mean_pool(tape, h);
  const Tensor t_sum = mean_pool(tape, t);
  return inject(tape, h, t, h_sum, t_sum, cross, dropout_p, mode);
}

std::pair<NodeState, NodeState> gaimp_step(Tape& tape, const NodeState& h, const NodeState& t, const CrossParams& cross,
                                           const AttentionPoolParams& att_h, const AttentionPoolParams& att_t,
                                           double dropout_p, const ForwardMode& mode) {
  const Tensor h_sum = gated_attention_pool(tape, h, att_h, dropout_p, mode);
  const Tensor t_sum = gated_attention_pool(tape, t, att_t, dropout_p, mode);
  return inject(tape, h, t, h_sum, t_sum, cross, 0.0, mode);
}

}  // namespace stainfuse
