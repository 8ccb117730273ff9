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

// Full predictor: two graph encoders, a fusion strategy, a feed-forward head
// producing the latent score, ordinal thresholds and per-rater biases.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stainfuse/config.hpp"
#include "stainfuse/fusion.hpp"
#include "stainfuse/gnn.hpp"
#include "stainfuse/graph.hpp"
#include "stainfuse/ordinal.hpp"
#include "stainfuse/params.hpp"

namespace stainfuse {

struct ModelConfig {
  Strategy strategy = Strategy::LateConcat;
  bool bilinear_gate = false;
  std::size_t hidden = 128;
  std::size_t head_hidden = 128;
  double head_dropout = 0.1;
  std::size_t kron_dim = 32;
  std::size_t kron_hidden = 64;
  double kron_dropout = 0.5;
  double gimp_dropout = 0.4;
  double gaimp_dropout = 0.2;
  std::size_t unimodal_hidden = 64;
  double unimodal_dropout = 0.5;
  double pool_ratio = 0.5;
  Readout readout = Readout::Mean;
  bool symmetric_edges = false;
  bool normalizer_clamp = false;

  static ModelConfig from_config(const Config& cfg);
  /// model.* keys with their values, as stored in checkpoints.
  std::map<std::string, std::string> to_entries() const;
};

/// Data-dependent dimensions fixed at construction.
struct ModelShape {
  std::size_t d_a = 0;
  std::size_t d_b = 0;
  int classes = 5;
  std::vector<std::string> raters;
};

/// Normalized node states of one paired sample.
struct PreparedInput {
  NodeState a;
  NodeState b;
};

/// Batch normalization over rows. Training with more than one row uses batch
/// statistics and updates the running ones; otherwise the running statistics are used.
Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, const ForwardMode& mode, double momentum = 0.1, double eps = 1e-5);

class Model {
 public:
  Model(const ModelConfig& config, const ModelShape& shape, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  const ModelShape& shape() const { return shape_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  /// Non-trainable state: BatchNorm running statistics and normalizer bounds.
  ParamStore& buffers() { return buffers_; }
  const ParamStore& buffers() const { return buffers_; }

  void fit_normalizers(std::span<const PairedSample* const> train);
  const Normalizer& normalizer_a() const { return norm_a_; }
  const Normalizer& normalizer_b() const { return norm_b_; }
  PreparedInput prepare(const PairedSample& sample) const;

  /// Fused representation of one sample, before the head (1 x d_z).
  Tensor fused(Tape& tape, const PreparedInput& input, const ForwardMode& mode) const;
  /// Latent scores, one row per input (B x 1). Rater biases are not applied.
  Tensor latent(Tape& tape, std::span<const PreparedInput* const> inputs, const ForwardMode& mode);
  Tensor thresholds(Tape& tape) const;
  std::vector<double> threshold_values() const;
  void init_thresholds(std::span<const int> labels);
  Tensor& rater_biases() { return params_.get("ordinal.bias"); }
  const Tensor& rater_biases() const { return params_.get("ordinal.bias"); }
  const RaterIndex& rater_index() const { return raters_; }

  /// Inference path: eval mode, no tape, no rater biases.
  std::vector<double> predict_latent(std::span<const PreparedInput* const> inputs);
  std::vector<int> predict(std::span<const PreparedInput* const> inputs);

  Checkpoint to_checkpoint(const std::map<std::string, std::string>& extra_metadata = {}) const;
  /// Rebuild from a checkpoint; `overrides` replaces stored model.* keys.
  /// Throws ConfigError listing every tensor whose shape disagrees.
  static Model from_checkpoint(const Checkpoint& ckpt, const std::map<std::string, std::string>& overrides = {});

  /// Copy values of every parameter and buffer whose name also exists here.
  void copy_matching(const Model& other);

 private:
  struct HeadLayer {
    Tensor w, b;
    bool norm = false;
    Tensor gamma, beta, running_mean, running_var;  // when norm
  };

  void build(Rng& rng);
  void create_head(std::size_t d_in, std::size_t hidden, bool norm, bool unimodal, Rng& rng);
  Tensor run_head(Tape& tape, const Tensor& z, const ForwardMode& mode);
  std::size_t fused_dim() const;
  void restore_normalizers();

  ModelConfig config_;
  ModelShape shape_;
  ParamStore params_;
  ParamStore buffers_;
  RaterIndex raters_;
  Normalizer norm_a_, norm_b_;

  EncoderParams enc_a_, enc_b_;
  Tensor fuse_w_h_, fuse_w_t_;
  KroneckerParams kron_;
  CrossParams cross_[2];
  AttentionPoolParams att_h_[2], att_t_[2];
  std::vector<HeadLayer> head_;
  double head_dropout_ = 0.0;
};

}  // namespace stainfuse
