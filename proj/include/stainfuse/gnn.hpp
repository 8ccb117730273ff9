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

// Per-modality graph encoder: min-max input normalization, GraphConv layers
// (h' = W_self h + W_neigh * sum of in-neighbours + b), SAGPool between them,
// mean or gated-attention readouts, and a jumping-knowledge concatenation.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stainfuse/graph.hpp"
#include "stainfuse/params.hpp"
#include "stainfuse/tensor.hpp"

namespace stainfuse {

class Normalizer {
 public:
  Normalizer() = default;

  /// Per-feature min and max over the node features of `graphs` (training split only).
  static Normalizer fit(std::span<const ModalGraph* const> graphs);
  static Normalizer from_bounds(std::vector<double> min, std::vector<double> max, bool clamp = false);

  /// (x - min) / (max - min); constant features map to 0. Out-of-range values
  /// are not clamped unless requested.
  Tensor apply(const Tensor& features) const;

  bool fitted() const { return fitted_; }
  bool clamp() const { return clamp_; }
  void set_clamp(bool on) { clamp_ = on; }
  const std::vector<double>& min() const { return min_; }
  const std::vector<double>& max() const { return max_; }

 private:
  std::vector<double> min_, max_;
  bool fitted_ = false;
  bool clamp_ = false;
};

struct GraphConvParams {
  Tensor w_self;   // d_in x d_out
  Tensor w_neigh;  // d_in x d_out
  Tensor bias;     // 1 x d_out
};

/// Gated global attention: tanh(sum_v sigmoid(f1(h_v)) * f2(h_v)), f1: d->1, f2: d->d with ReLU.
struct AttentionPoolParams {
  Tensor gate_w;  // d x 1
  Tensor gate_b;  // 1 x 1
  Tensor proj_w;  // d x d
  Tensor proj_b;  // 1 x d
};

struct NodeState {
  Tensor h;                               // N_active x d
  std::vector<std::size_t> active_index;  // original node ids, strictly increasing
  std::vector<Edge> edges;                // local indices into h

  std::size_t size() const { return active_index.size(); }
};

/// Initial state of a graph; `symmetric` adds the reverse of every edge not already present.
NodeState make_state(Tensor features, std::span<const Edge> edges, bool symmetric = false);

/// Messages flow src -> dst; ReLU applied when `activate`.
NodeState graph_conv(Tape& tape, const NodeState& state, const GraphConvParams& params, bool activate = true);

/// Indices of the ceil(ratio * N) highest scores, ties to the lower index, returned ascending.
std::vector<std::size_t> select_top_k(std::span<const double> scores, double ratio);

/// Score nodes with a 1-output GraphConv, keep the top fraction, scale survivors by tanh(score).
NodeState sagpool(Tape& tape, const NodeState& state, const GraphConvParams& score, double ratio);

Tensor mean_pool(Tape& tape, const NodeState& state);

Tensor gated_attention_pool(Tape& tape, const NodeState& state, const AttentionPoolParams& params,
                            double dropout_p = 0.0, const ForwardMode& mode = {});

enum class Readout { Mean, Attention };

struct EncoderParams {
  GraphConvParams conv1, conv2, score;
  AttentionPoolParams readout1, readout2;  // used when the readout is Attention

  /// Register a fresh encoder under `prefix` in `store`.
  static EncoderParams create(ParamStore& store, const std::string& prefix, std::size_t d_in, std::size_t hidden,
                              Readout readout, Rng& rng);
  /// Bind to tensors previously registered under `prefix`.
  static EncoderParams bind(ParamStore& store, const std::string& prefix, Readout readout);
};

struct EncoderOptions {
  double pool_ratio = 0.5;
  Readout readout = Readout::Mean;
};

struct Encoding {
  Tensor embedding;                    // 1 x (2 * hidden), jumping-knowledge concatenation
  std::vector<NodeState> layer_states;  // after conv1, after sagpool, after conv2
};

/// conv1 -> readout -> sagpool -> conv2 -> readout -> concat.
Encoding encode(Tape& tape, const NodeState& input, const EncoderParams& params, const EncoderOptions& options,
                const ForwardMode& mode = {});

Tensor readout(Tape& tape, const NodeState& state, Readout kind, const AttentionPoolParams& attention,
               const ForwardMode& mode = {});

}  // namespace stainfuse
