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

#include "stainfuse/model.hpp"

#include <algorithm>
#include <sstream>

#include "stainfuse/errors.hpp"

namespace stainfuse {

namespace {

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::string& meta(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.metadata.find(key);
  if (it == ckpt.metadata.end()) throw ConfigError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

}  // namespace

ModelConfig ModelConfig::from_config(const Config& cfg) {
  ModelConfig m;
  m.strategy = parse_strategy(cfg.get("model.strategy"));
  m.bilinear_gate = cfg.get_bool("model.bilinear_gate");
  m.hidden = static_cast<std::size_t>(cfg.get_int("model.hidden"));
  m.head_hidden = static_cast<std::size_t>(cfg.get_int("model.head_hidden"));
  m.head_dropout = cfg.get_double("model.head_dropout");
  m.kron_dim = static_cast<std::size_t>(cfg.get_int("model.kron_dim"));
  m.kron_hidden = static_cast<std::size_t>(cfg.get_int("model.kron_hidden"));
  m.kron_dropout = cfg.get_double("model.kron_dropout");
  m.gimp_dropout = cfg.get_double("model.gimp_dropout");
  m.gaimp_dropout = cfg.get_double("model.gaimp_dropout");
  m.unimodal_hidden = static_cast<std::size_t>(cfg.get_int("model.unimodal_hidden"));
  m.unimodal_dropout = cfg.get_double("model.unimodal_dropout");
  m.pool_ratio = cfg.get_double("model.pool_ratio");
  m.readout = cfg.get("model.readout") == "attention" ? Readout::Attention : Readout::Mean;
  m.symmetric_edges = cfg.get_bool("model.symmetric_edges");
  m.normalizer_clamp = cfg.get_bool("model.normalizer_clamp");
  if (m.hidden == 0 || m.head_hidden == 0 || m.kron_dim == 0 || m.kron_hidden == 0 || m.unimodal_hidden == 0) {
    throw ConfigError("model widths must be positive");
  }
  if (!(m.pool_ratio > 0.0 && m.pool_ratio <= 1.0)) throw ConfigError("field 'model.pool_ratio': must lie in (0, 1]");
  for (double p : {m.head_dropout, m.kron_dropout, m.gimp_dropout, m.gaimp_dropout, m.unimodal_dropout}) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("model dropout probabilities must lie in [0, 1)");
  }
  return m;
}

std::map<std::string, std::string> ModelConfig::to_entries() const {
  return {
      {"model.strategy", std::string(strategy_name(strategy))},
      {"model.bilinear_gate", bilinear_gate ? "true" : "false"},
      {"model.hidden", std::to_string(hidden)},
      {"model.head_hidden", std::to_string(head_hidden)},
      {"model.head_dropout", fmt(head_dropout)},
      {"model.kron_dim", std::to_string(kron_dim)},
      {"model.kron_hidden", std::to_string(kron_hidden)},
      {"model.kron_dropout", fmt(kron_dropout)},
      {"model.gimp_dropout", fmt(gimp_dropout)},
      {"model.gaimp_dropout", fmt(gaimp_dropout)},
      {"model.unimodal_hidden", std::to_string(unimodal_hidden)},
      {"model.unimodal_dropout", fmt(unimodal_dropout)},
      {"model.pool_ratio", fmt(pool_ratio)},
      {"model.readout", readout == Readout::Attention ? "attention" : "mean"},
      {"model.symmetric_edges", symmetric_edges ? "true" : "false"},
      {"model.normalizer_clamp", normalizer_clamp ? "true" : "false"},
  };
}

Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, const ForwardMode& mode, double momentum, double eps) {
  const std::size_t n = x.rows();
  if (mode.training && n > 1) {
    const Tensor mean = mean_rows(tape, x);
    const Tensor centered = sub(tape, x, mean);
    const Tensor var = mean_rows(tape, mul(tape, centered, centered));
    const Tensor normed = mul(tape, centered, rsqrt(tape, add_scalar(tape, var, eps)));
    const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
    auto rm = running_mean.values();
    auto rv = running_var.values();
    for (std::size_t j = 0; j < rm.size(); ++j) {
      rm[j] = (1.0 - momentum) * rm[j] + momentum * mean.values()[j];
      rv[j] = (1.0 - momentum) * rv[j] + momentum * var.values()[j] * unbias;
    }
    return add(tape, mul(tape, normed, gamma), beta);
  }
  std::vector<double> inv(running_var.size());
  for (std::size_t j = 0; j < inv.size(); ++j) inv[j] = 1.0 / std::sqrt(running_var.values()[j] + eps);
  const std::size_t width = inv.size();
  const Tensor scale_row({1, width}, std::move(inv));
  const Tensor normed = mul(tape, sub(tape, x, running_mean), scale_row);
  return add(tape, mul(tape, normed, gamma), beta);
}

Model::Model(const ModelConfig& config, const ModelShape& shape, std::uint64_t seed)
    : config_(config), shape_(shape), raters_(shape.raters) {
  if (shape_.d_a == 0 || shape_.d_b == 0) throw ContractError("Model: input feature widths must be positive");
  if (shape_.classes < 2) throw ContractError("Model: need at least 2 ordinal classes");
  shape_.raters = raters_.raters();
  Rng rng(derive_seed(seed, 0x30de1));
  build(rng);
}

std::size_t Model::fused_dim() const {
  const std::size_t emb = 2 * config_.hidden;
  switch (config_.strategy) {
    case Strategy::UnimodalA:
    case Strategy::UnimodalB:
    case Strategy::LateAdd:
    case Strategy::LateHadamard:
      return emb;
    case Strategy::KroneckerGated:
      return (config_.kron_dim + 1) * (config_.kron_dim + 1);
    case Strategy::LateConcat:
    case Strategy::Gimp:
    case Strategy::Gaimp:
      return 2 * emb;
  }
  return emb;
}

void Model::build(Rng& rng) {
  const std::size_t h = config_.hidden;
  const std::size_t emb = 2 * h;
  const Strategy s = config_.strategy;
  if (s != Strategy::UnimodalB) enc_a_ = EncoderParams::create(params_, "enc_a", shape_.d_a, h, config_.readout, rng);
  if (s != Strategy::UnimodalA) enc_b_ = EncoderParams::create(params_, "enc_b", shape_.d_b, h, config_.readout, rng);

  if (s == Strategy::LateAdd || s == Strategy::LateHadamard) {
    fuse_w_h_ = params_.add("fusion.w_h", glorot(rng, emb, emb));
    fuse_w_t_ = params_.add("fusion.w_t", glorot(rng, emb, emb));
  } else if (s == Strategy::KroneckerGated) {
    kron_ = KroneckerParams::create(params_, "fusion.kron", emb, emb, config_.kron_dim, config_.bilinear_gate, rng);
  } else if (is_mid_fusion(s)) {
    for (int l = 0; l < 2; ++l) {
      const std::string prefix = "mid.l" + std::to_string(l + 1);
      cross_[l] = CrossParams::create(params_, prefix, h, h, rng);
      if (s == Strategy::Gaimp) {
        auto make = [&](const std::string& p) {
          AttentionPoolParams a;
          a.gate_w = params_.add(p + ".gate_w", glorot(rng, h, 1));
          a.gate_b = params_.add(p + ".gate_b", Tensor({1, 1}, 0.0));
          a.proj_w = params_.add(p + ".proj_w", glorot(rng, h, h));
          a.proj_b = params_.add(p + ".proj_b", Tensor({1, h}, 0.0));
          return a;
        };
        att_h_[l] = make(prefix + ".att_h");
        att_t_[l] = make(prefix + ".att_t");
      }
    }
  }

  if (is_unimodal(s)) {
    head_dropout_ = config_.unimodal_dropout;
    create_head(fused_dim(), config_.unimodal_hidden, false, true, rng);
  } else if (s == Strategy::KroneckerGated) {
    head_dropout_ = config_.kron_dropout;
    create_head(fused_dim(), config_.kron_hidden, true, false, rng);
  } else {
    head_dropout_ = config_.head_dropout;
    create_head(fused_dim(), config_.head_hidden, true, false, rng);
  }

  const std::size_t thresholds = static_cast<std::size_t>(shape_.classes - 1);
  std::vector<double> alpha(thresholds);
  for (std::size_t k = 0; k < thresholds; ++k) alpha[k] = -1.0 + 2.0 * static_cast<double>(k) / std::max<std::size_t>(1, thresholds - 1);
  params_.add("ordinal.raw", Tensor({1, thresholds}, raw_from_thresholds(alpha)));
  params_.add("ordinal.bias", Tensor({1, std::max<std::size_t>(1, raters_.size())}, 0.0));

  buffers_.add("norm.a.min", Tensor({1, shape_.d_a}, 0.0)).set_requires_grad(false);
  buffers_.add("norm.a.max", Tensor({1, shape_.d_a}, 0.0)).set_requires_grad(false);
  buffers_.add("norm.b.min", Tensor({1, shape_.d_b}, 0.0)).set_requires_grad(false);
  buffers_.add("norm.b.max", Tensor({1, shape_.d_b}, 0.0)).set_requires_grad(false);
}

void Model::create_head(std::size_t d_in, std::size_t hidden, bool norm, bool unimodal, Rng& rng) {
  const std::vector<std::size_t> widths = unimodal ? std::vector<std::size_t>{d_in, hidden, 1}
                                                   : std::vector<std::size_t>{d_in, hidden, hidden, 1};
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::string prefix = "head.l" + std::to_string(l + 1);
    HeadLayer layer;
    layer.w = params_.add(prefix + ".w", glorot(rng, widths[l], widths[l + 1]));
    layer.b = params_.add(prefix + ".b", Tensor({1, widths[l + 1]}, 0.0));
    const bool hidden_layer = l + 2 < widths.size();
    layer.norm = norm && hidden_layer;
    if (layer.norm) {
      layer.gamma = params_.add(prefix + ".bn_gamma", Tensor({1, widths[l + 1]}, 1.0));
      layer.beta = params_.add(prefix + ".bn_beta", Tensor({1, widths[l + 1]}, 0.0));
      layer.running_mean = buffers_.add(prefix + ".bn_mean", Tensor({1, widths[l + 1]}, 0.0));
      layer.running_mean.set_requires_grad(false);
      layer.running_var = buffers_.add(prefix + ".bn_var", Tensor({1, widths[l + 1]}, 1.0));
      layer.running_var.set_requires_grad(false);
    }
    head_.push_back(std::move(layer));
  }
}

Tensor Model::run_head(Tape& tape, const Tensor& z, const ForwardMode& mode) {
  Tensor x = z;
  for (std::size_t l = 0; l < head_.size(); ++l) {
    auto& layer = head_[l];
    x = linear(tape, x, layer.w, layer.b);
    if (l + 1 == head_.size()) break;
    if (layer.norm) x = batch_norm(tape, x, layer.gamma, layer.beta, layer.running_mean, layer.running_var, mode);
    x = dropout(tape, relu(tape, x), head_dropout_, mode);
  }
  return x;
}

void Model::fit_normalizers(std::span<const PairedSample* const> train) {
  std::vector<const ModalGraph*> a, b;
  for (const auto* s : train) {
    a.push_back(&s->graph_a);
    b.push_back(&s->graph_b);
  }
  norm_a_ = Normalizer::fit(a);
  norm_b_ = Normalizer::fit(b);
  if (norm_a_.min().size() != shape_.d_a || norm_b_.min().size() != shape_.d_b) {
    throw ShapeError("fit_normalizers: graph feature widths differ from the model input widths");
  }
  norm_a_.set_clamp(config_.normalizer_clamp);
  norm_b_.set_clamp(config_.normalizer_clamp);
  auto put = [&](const char* name, const std::vector<double>& v) {
    auto dst = buffers_.get(name).values();
    std::copy(v.begin(), v.end(), dst.begin());
  };
  put("norm.a.min", norm_a_.min());
  put("norm.a.max", norm_a_.max());
  put("norm.b.min", norm_b_.min());
  put("norm.b.max", norm_b_.max());
}

void Model::restore_normalizers() {
  auto get = [&](const char* name) {
    auto v = buffers_.get(name).values();
    return std::vector<double>(v.begin(), v.end());
  };
  norm_a_ = Normalizer::from_bounds(get("norm.a.min"), get("norm.a.max"), config_.normalizer_clamp);
  norm_b_ = Normalizer::from_bounds(get("norm.b.min"), get("norm.b.max"), config_.normalizer_clamp);
}

PreparedInput Model::prepare(const PairedSample& sample) const {
  if (sample.graph_a.feature_dim() != shape_.d_a || sample.graph_b.feature_dim() != shape_.d_b) {
    throw ShapeError("sample " + sample.id() + ": feature widths " + std::to_string(sample.graph_a.feature_dim()) +
                     "/" + std::to_string(sample.graph_b.feature_dim()) + " do not match the model's " +
                     std::to_string(shape_.d_a) + "/" + std::to_string(shape_.d_b));
  }
  PreparedInput p;
  p.a = make_state(norm_a_.apply(sample.graph_a.features), sample.graph_a.edges, config_.symmetric_edges);
  p.b = make_state(norm_b_.apply(sample.graph_b.features), sample.graph_b.edges, config_.symmetric_edges);
  return p;
}

Tensor Model::fused(Tape& tape, const PreparedInput& input, const ForwardMode& mode) const {
  EncoderOptions opt;
  opt.pool_ratio = config_.pool_ratio;
  opt.readout = config_.readout;
  switch (config_.strategy) {
    case Strategy::UnimodalA:
      return encode(tape, input.a, enc_a_, opt, mode).embedding;
    case Strategy::UnimodalB:
      return encode(tape, input.b, enc_b_, opt, mode).embedding;
    case Strategy::LateConcat:
      return fuse_concat(tape, encode(tape, input.a, enc_a_, opt, mode).embedding,
                         encode(tape, input.b, enc_b_, opt, mode).embedding);
    case Strategy::LateAdd:
      return fuse_add(tape, encode(tape, input.a, enc_a_, opt, mode).embedding,
                      encode(tape, input.b, enc_b_, opt, mode).embedding, fuse_w_h_, fuse_w_t_);
    case Strategy::LateHadamard:
      return fuse_hadamard(tape, encode(tape, input.a, enc_a_, opt, mode).embedding,
                           encode(tape, input.b, enc_b_, opt, mode).embedding, fuse_w_h_, fuse_w_t_);
    case Strategy::KroneckerGated:
      return fuse_kronecker_gated(tape, encode(tape, input.a, enc_a_, opt, mode).embedding,
                                  encode(tape, input.b, enc_b_, opt, mode).embedding, kron_, config_.bilinear_gate);
    case Strategy::Gimp:
    case Strategy::Gaimp:
      break;
  }
  const bool attention = config_.strategy == Strategy::Gaimp;
  auto inter = [&](const NodeState& h, const NodeState& t, int layer) {
    return attention ? gaimp_step(tape, h, t, cross_[layer], att_h_[layer], att_t_[layer], config_.gaimp_dropout, mode)
                     : gimp_step(tape, h, t, cross_[layer], config_.gimp_dropout, mode);
  };
  auto [h1, t1] = inter(graph_conv(tape, input.a, enc_a_.conv1), graph_conv(tape, input.b, enc_b_.conv1), 0);
  const Tensor rh1 = readout(tape, h1, config_.readout, enc_a_.readout1, mode);
  const Tensor rt1 = readout(tape, t1, config_.readout, enc_b_.readout1, mode);
  const NodeState ph = sagpool(tape, h1, enc_a_.score, config_.pool_ratio);
  const NodeState pt = sagpool(tape, t1, enc_b_.score, config_.pool_ratio);
  auto [h2, t2] = inter(graph_conv(tape, ph, enc_a_.conv2), graph_conv(tape, pt, enc_b_.conv2), 1);
  const Tensor rh2 = readout(tape, h2, config_.readout, enc_a_.readout2, mode);
  const Tensor rt2 = readout(tape, t2, config_.readout, enc_b_.readout2, mode);
  return concat_cols(tape, {rh1, rh2, rt1, rt2});
}

Tensor Model::latent(Tape& tape, std::span<const PreparedInput* const> inputs, const ForwardMode& mode) {
  if (inputs.empty()) throw ContractError("Model::latent: empty batch");
  std::vector<Tensor> rows;
  rows.reserve(inputs.size());
  for (const auto* in : inputs) rows.push_back(fused(tape, *in, mode));
  const Tensor z = rows.size() == 1 ? rows.front() : concat_rows(tape, rows);
  return run_head(tape, z, mode);
}

Tensor Model::thresholds(Tape& tape) const { return monotone_thresholds(tape, params_.get("ordinal.raw")); }

std::vector<double> Model::threshold_values() const { return effective_thresholds(params_.get("ordinal.raw").values()); }

void Model::init_thresholds(std::span<const int> labels) {
  const auto raw = raw_from_thresholds(initial_thresholds(labels, shape_.classes));
  auto dst = params_.get("ordinal.raw").values();
  std::copy(raw.begin(), raw.end(), dst.begin());
}

std::vector<double> Model::predict_latent(std::span<const PreparedInput* const> inputs) {
  std::vector<double> out;
  out.reserve(inputs.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < inputs.size(); start += kChunk) {
    Tape tape;
    tape.set_recording(false);
    const auto chunk = inputs.subspan(start, std::min(kChunk, inputs.size() - start));
    const Tensor s = latent(tape, chunk, ForwardMode{});
    for (double v : s.values()) out.push_back(v);
  }
  return out;
}

std::vector<int> Model::predict(std::span<const PreparedInput* const> inputs) {
  const auto s = predict_latent(inputs);
  const auto alpha = threshold_values();
  std::vector<int> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = predict_class(s[i], alpha);
  return out;
}

Checkpoint Model::to_checkpoint(const std::map<std::string, std::string>& extra_metadata) const {
  Checkpoint ckpt;
  ckpt.metadata = extra_metadata;
  for (const auto& [k, v] : config_.to_entries()) ckpt.metadata[k] = v;
  ckpt.metadata["shape.d_a"] = std::to_string(shape_.d_a);
  ckpt.metadata["shape.d_b"] = std::to_string(shape_.d_b);
  ckpt.metadata["shape.classes"] = std::to_string(shape_.classes);
  ckpt.metadata["shape.raters"] = join(shape_.raters, ',');
  ckpt.metadata["normalizer.fitted"] = norm_a_.fitted() && norm_b_.fitted() ? "1" : "0";
  for (std::size_t i = 0; i < params_.size(); ++i) ckpt.tensors.emplace_back(params_.names()[i], params_.tensors()[i].clone());
  for (std::size_t i = 0; i < buffers_.size(); ++i) {
    ckpt.tensors.emplace_back(buffers_.names()[i], buffers_.tensors()[i].clone());
  }
  return ckpt;
}

Model Model::from_checkpoint(const Checkpoint& ckpt, const std::map<std::string, std::string>& overrides) {
  Config cfg;
  for (const auto& [k, v] : ckpt.metadata)
    if (k.rfind("model.", 0) == 0) cfg.set(k, v, "checkpoint");
  for (const auto& [k, v] : overrides) cfg.set(k, v, "override");
  ModelShape shape;
  try {
    shape.d_a = std::stoul(meta(ckpt, "shape.d_a"));
    shape.d_b = std::stoul(meta(ckpt, "shape.d_b"));
    shape.classes = std::stoi(meta(ckpt, "shape.classes"));
  } catch (const std::logic_error&) {
    throw ConfigError("checkpoint metadata holds malformed shape entries");
  }
  shape.raters = split(meta(ckpt, "shape.raters"), ',');
  Model model(ModelConfig::from_config(cfg), shape, 0);

  std::vector<std::string> diffs;
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : ckpt.tensors) stored[name] = &t;
  auto load = [&](ParamStore& store) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& name = store.names()[i];
      Tensor& dst = store.tensors()[i];
      auto it = stored.find(name);
      if (it == stored.end()) {
        diffs.push_back(name + ": missing from checkpoint (config expects " + shape_string(dst.shape()) + ")");
        continue;
      }
      if (it->second->shape() != dst.shape()) {
        diffs.push_back(name + ": checkpoint " + shape_string(it->second->shape()) + " vs config " +
                        shape_string(dst.shape()));
      } else {
        auto src = it->second->values();
        std::copy(src.begin(), src.end(), dst.values().begin());
      }
      stored.erase(it);
    }
  };
  load(model.params_);
  load(model.buffers_);
  for (const auto& [name, t] : stored) {
    diffs.push_back(name + ": present in checkpoint " + shape_string(t->shape()) + " but not in config");
  }
  if (!diffs.empty()) {
    std::string msg = "checkpoint does not match the model configuration:";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw ConfigError(msg);
  }
  if (meta(ckpt, "normalizer.fitted") == "1") model.restore_normalizers();
  return model;
}

void Model::copy_matching(const Model& other) {
  auto copy = [](ParamStore& dst, const ParamStore& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const auto& name = dst.names()[i];
      if (!src.contains(name)) continue;
      const Tensor& s = src.get(name);
      Tensor& d = dst.tensors()[i];
      if (s.shape() != d.shape()) throw ShapeError("copy_matching: shape of " + name + " differs");
      std::copy(s.values().begin(), s.values().end(), d.values().begin());
    }
  };
  copy(params_, other.params_);
  copy(buffers_, other.buffers_);
  if (other.norm_a_.fitted()) norm_a_ = other.norm_a_;
  if (other.norm_b_.fitted()) norm_b_ = other.norm_b_;
}

}  // namespace stainfuse
