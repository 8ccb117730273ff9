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

#include "stainfuse/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "stainfuse/errors.hpp"

namespace stainfuse {

Normalizer Normalizer::fit(std::span<const ModalGraph* const> graphs) {
  if (graphs.empty()) throw ContractError("Normalizer::fit: no training graphs");
  const std::size_t d = graphs.front()->feature_dim();
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (const auto* g : graphs) {
    if (g->feature_dim() != d) throw ShapeError("Normalizer::fit: graphs have different feature widths");
    for (std::size_t i = 0; i < g->num_nodes(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        lo[j] = std::min(lo[j], g->features(i, j));
        hi[j] = std::max(hi[j], g->features(i, j));
      }
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (lo[j] > hi[j]) lo[j] = hi[j] = 0.0;  // no nodes at all
  }
  return from_bounds(std::move(lo), std::move(hi));
}

Normalizer Normalizer::from_bounds(std::vector<double> min, std::vector<double> max, bool clamp) {
  if (min.size() != max.size()) throw ShapeError("Normalizer: min/max widths differ");
  for (std::size_t j = 0; j < min.size(); ++j) {
    if (max[j] < min[j]) throw ContractError("Normalizer: max < min for feature " + std::to_string(j));
  }
  Normalizer n;
  n.min_ = std::move(min);
  n.max_ = std::move(max);
  n.fitted_ = true;
  n.clamp_ = clamp;
  return n;
}

Tensor Normalizer::apply(const Tensor& features) const {
  if (!fitted_) throw ContractError("Normalizer::apply called before fit");
  if (features.cols() != min_.size()) {
    throw ShapeError("Normalizer::apply: expected " + std::to_string(min_.size()) + " features, got " +
                     shape_string(features.shape()));
  }
  Tensor out(features.shape(), 0.0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t j = 0; j < min_.size(); ++j) {
      const double range = max_[j] - min_[j];
      double v = range > 0.0 ? (features(i, j) - min_[j]) / range : 0.0;
      if (clamp_) v = std::clamp(v, 0.0, 1.0);
      out(i, j) = v;
    }
  }
  return out;
}

NodeState make_state(Tensor features, std::span<const Edge> edges, bool symmetric) {
  NodeState s;
  s.h = std::move(features);
  s.active_index.resize(s.h.rows());
  std::iota(s.active_index.begin(), s.active_index.end(), std::size_t{0});
  s.edges.assign(edges.begin(), edges.end());
  if (symmetric) {
    std::set<Edge> present(edges.begin(), edges.end());
    for (const auto& [src, dst] : edges) {
      if (!present.count({dst, src})) {
        s.edges.emplace_back(dst, src);
        present.insert({dst, src});
      }
    }
  }
  return s;
}

NodeState graph_conv(Tape& tape, const NodeState& state, const GraphConvParams& params, bool activate) {
  const Tensor agg = neighbor_sum(tape, state.h, state.edges);
  Tensor out = add(tape, add(tape, matmul(tape, state.h, params.w_self), matmul(tape, agg, params.w_neigh)),
                   params.bias);
  if (activate) out = relu(tape, out);
  return NodeState{std::move(out), state.active_index, state.edges};
}

std::vector<std::size_t> select_top_k(std::span<const double> scores, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ContractError("sagpool: ratio must lie in (0, 1]");
  const std::size_t n = scores.size();
  const auto keep = std::min(n, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-12)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

NodeState sagpool(Tape& tape, const NodeState& state, const GraphConvParams& score, double ratio) {
  const NodeState scored = graph_conv(tape, state, score, false);
  const auto keep = select_top_k(scored.h.values(), ratio);
  const Tensor kept = gather_rows(tape, state.h, keep);
  const Tensor gate = tanh(tape, gather_rows(tape, scored.h, keep));

  std::vector<std::size_t> local(state.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < keep.size(); ++i) local[keep[i]] = i;
  NodeState out;
  out.h = mul(tape, kept, gate);
  out.active_index.reserve(keep.size());
  for (auto k : keep) out.active_index.push_back(state.active_index[k]);
  for (const auto& [src, dst] : state.edges) {
    if (local[src] != std::numeric_limits<std::size_t>::max() && local[dst] != std::numeric_limits<std::size_t>::max()) {
      out.edges.emplace_back(static_cast<std::uint32_t>(local[src]), static_cast<std::uint32_t>(local[dst]));
    }
  }
  return out;
}

Tensor mean_pool(Tape& tape, const NodeState& state) {
  if (state.size() == 0) throw ContractError("mean_pool: graph has no active nodes");
  return mean_rows(tape, state.h);
}

Tensor gated_attention_pool(Tape& tape, const NodeState& state, const AttentionPoolParams& params, double dropout_p,
                            const ForwardMode& mode) {
  if (state.size() == 0) throw ContractError("gated_attention_pool: graph has no active nodes");
  const Tensor gate = sigmoid(tape, linear(tape, state.h, params.gate_w, params.gate_b));
  Tensor proj = relu(tape, linear(tape, state.h, params.proj_w, params.proj_b));
  proj = dropout(tape, proj, dropout_p, mode);
  return tanh(tape, sum_rows(tape, mul(tape, proj, gate)));
}

Tensor readout(Tape& tape, const NodeState& state, Readout kind, const AttentionPoolParams& attention,
               const ForwardMode& mode) {
  return kind == Readout::Mean ? mean_pool(tape, state) : gated_attention_pool(tape, state, attention, 0.0, mode);
}

namespace {

GraphConvParams create_conv(ParamStore& store, const std::string& prefix, std::size_t d_in, std::size_t d_out,
                            Rng& rng) {
  GraphConvParams p;
  p.w_self = store.add(prefix + ".w_self", glorot(rng, d_in, d_out));
  p.w_neigh = store.add(prefix + ".w_neigh", glorot(rng, d_in, d_out));
  p.bias = store.add(prefix + ".bias", Tensor({1, d_out}, 0.0));
  return p;
}

GraphConvParams bind_conv(ParamStore& store, const std::string& prefix) {
  return {store.get(prefix + ".w_self"), store.get(prefix + ".w_neigh"), store.get(prefix + ".bias")};
}

AttentionPoolParams create_attention(ParamStore& store, const std::string& prefix, std::size_t d, Rng& rng) {
  AttentionPoolParams p;
  p.gate_w = store.add(prefix + ".gate_w", glorot(rng, d, 1));
  p.gate_b = store.add(prefix + ".gate_b", Tensor({1, 1}, 0.0));
  p.proj_w = store.add(prefix + ".proj_w", glorot(rng, d, d));
  p.proj_b = store.add(prefix + ".proj_b", Tensor({1, d}, 0.0));
  return p;
}

AttentionPoolParams bind_attention(ParamStore& store, const std::string& prefix) {
  return {store.get(prefix + ".gate_w"), store.get(prefix + ".gate_b"), store.get(prefix + ".proj_w"),
          store.get(prefix + ".proj_b")};
}

}  // namespace

EncoderParams EncoderParams::create(ParamStore& store, const std::string& prefix, std::size_t d_in,
                                    std::size_t hidden, Readout readout, Rng& rng) {
  EncoderParams p;
  p.conv1 = create_conv(store, prefix + ".conv1", d_in, hidden, rng);
  p.score = create_conv(store, prefix + ".pool", hidden, 1, rng);
  p.conv2 = create_conv(store, prefix + ".conv2", hidden, hidden, rng);
  if (readout == Readout::Attention) {
    p.readout1 = create_attention(store, prefix + ".readout1", hidden, rng);
    p.readout2 = create_attention(store, prefix + ".readout2", hidden, rng);
  }
  return p;
}

EncoderParams EncoderParams::bind(ParamStore& store, const std::string& prefix, Readout readout) {
  EncoderParams p;
  p.conv1 = bind_conv(store, prefix + ".conv1");
  p.score = bind_conv(store, prefix + ".pool");
  p.conv2 = bind_conv(store, prefix + ".conv2");
  if (readout == Readout::Attention) {
    p.readout1 = bind_attention(store, prefix + ".readout1");
    p.readout2 = bind_attention(store, prefix + ".readout2");
  }
  return p;
}

Encoding encode(Tape& tape, const NodeState& input, const EncoderParams& params, const EncoderOptions& options,
                const ForwardMode& mode) {
  Encoding enc;
  NodeState s1 = graph_conv(tape, input, params.conv1);
  const Tensor r1 = readout(tape, s1, options.readout, params.readout1, mode);
  NodeState pooled = sagpool(tape, s1, params.score, options.pool_ratio);
  NodeState s2 = graph_conv(tape, pooled, params.conv2);
  const Tensor r2 = readout(tape, s2, options.readout, params.readout2, mode);
  enc.embedding = concat_cols(tape, {r1, r2});
  enc.layer_states = {std::move(s1), std::move(pooled), std::move(s2)};
  return enc;
}

}  // namespace stainfuse
