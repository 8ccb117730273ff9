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

// Combiners for the two modality encoders. Late combiners act on pooled
// embeddings h (1 x d_H) and t (1 x d_T); the inter-message-passing steps act
// on node states between graph convolutions.

#include <string>
#include <string_view>
#include <utility>

#include "stainfuse/gnn.hpp"
#include "stainfuse/params.hpp"
#include "stainfuse/tensor.hpp"

namespace stainfuse {

enum class Strategy { UnimodalA, UnimodalB, LateConcat, LateAdd, LateHadamard, KroneckerGated, Gimp, Gaimp };

std::string_view strategy_name(Strategy s);
/// Accepts the names produced by strategy_name; throws ConfigError otherwise.
Strategy parse_strategy(std::string_view name);

bool is_unimodal(Strategy s);
bool is_mid_fusion(Strategy s);

/// [h | t]
Tensor fuse_concat(Tape& tape, const Tensor& h, const Tensor& t);

/// h W_H + t W_T with W_H: d_H x d, W_T: d_T x d.
Tensor fuse_add(Tape& tape, const Tensor& h, const Tensor& t, const Tensor& w_h, const Tensor& w_t);

/// (h W_H) * (t W_T), elementwise.
Tensor fuse_hadamard(Tape& tape, const Tensor& h, const Tensor& t, const Tensor& w_h, const Tensor& w_t);

struct KroneckerParams {
  Tensor w_h;     // d_H x k
  Tensor w_t;     // d_T x k
  Tensor gate_h;  // (d_H + d_T) x k, linear gate on [h, t]
  Tensor gate_t;  // (d_H + d_T) x k
  // Bilinear gate: alpha = sigmoid((h U) * (t V)).
  Tensor bil_u_h, bil_v_h;  // d_H x k, d_T x k
  Tensor bil_u_t, bil_v_t;

  static KroneckerParams create(ParamStore& store, const std::string& prefix, std::size_t d_h, std::size_t d_t,
                                std::size_t k, bool bilinear, Rng& rng);
  static KroneckerParams bind(ParamStore& store, const std::string& prefix, bool bilinear);
};

/// Gated unimodal projections h' = alpha_H * ReLU(h W_H), t' likewise.
std::pair<Tensor, Tensor> kronecker_gates(Tape& tape, const Tensor& h, const Tensor& t, const KroneckerParams& p,
                                          bool bilinear);

/// [h'; 1] (x) [t'; 1] flattened row-major: (k + 1)^2 entries, last entry 1.
Tensor fuse_kronecker_gated(Tape& tape, const Tensor& h, const Tensor& t, const KroneckerParams& p, bool bilinear);

/// Cross projections for one inter-message-passing step.
struct CrossParams {
  Tensor w_th;  // d_T x d_H: summary of T injected into H
  Tensor w_ht;  // d_H x d_T

  static CrossParams create(ParamStore& store, const std::string& prefix, std::size_t d_h, std::size_t d_t, Rng& rng);
  static CrossParams bind(ParamStore& store, const std::string& prefix);
};

/// Mean summaries from the pre-update states, then H += dropout(ReLU(t W_TH)), T += dropout(ReLU(h W_HT)).
std::pair<NodeState, NodeState> gimp_step(Tape& tape, const NodeState& h, const NodeState& t, const CrossParams& cross,
                                          double dropout_p = 0.0, const ForwardMode& mode = {});

/// As gimp_step with gated-attention summaries; `dropout_p` applies to the attention projections.
std::pair<NodeState, NodeState> gaimp_step(Tape& tape, const NodeState& h, const NodeState& t, const CrossParams& cross,
                                           const AttentionPoolParams& att_h, const AttentionPoolParams& att_t,
                                           double dropout_p = 0.0, const ForwardMode& mode = {});

}  // namespace stainfuse
