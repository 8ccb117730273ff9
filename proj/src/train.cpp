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

#include "stainfuse/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <mutex>
#include <set>

#include "stainfuse/errors.hpp"
#include "stainfuse/evaluation.hpp"
#include "stainfuse/optim.hpp"
#include "stainfuse/ordinal.hpp"

namespace stainfuse {

namespace {

struct Example {
  const PairedSample* sample = nullptr;
  PreparedInput input;
  std::vector<int> labels;
  std::vector<std::size_t> raters;
  int bin = 0;
};

struct Snapshot {
  ParamStore params;
  ParamStore buffers;
};

Snapshot snapshot(const Model& model) { return {model.params().clone(), model.buffers().clone()}; }

void restore(Model& model, const Snapshot& s) {
  model.params().assign_values(s.params);
  model.buffers().assign_values(s.buffers);
}

Example make_example(const Model& model, const PairedSample& s, Endpoint endpoint) {
  Example ex;
  ex.sample = &s;
  ex.input = model.prepare(s);
  for (const auto& l : s.labels) {
    if (l.endpoint != endpoint) continue;
    ex.labels.push_back(l.score);
    ex.raters.push_back(model.rater_index().at(l.rater_id));
  }
  if (!ex.labels.empty()) ex.bin = consensus(ex.labels);
  return ex;
}

/// Mean -log p over every label of the examples, rater biases applied, eval mode.
double examples_loss(Model& model, std::span<const Example> examples) {
  const auto alpha = model.threshold_values();
  const auto bias = model.rater_biases().values();
  std::vector<const PreparedInput*> inputs;
  for (const auto& ex : examples) inputs.push_back(&ex.input);
  const auto s = model.predict_latent(inputs);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    for (std::size_t j = 0; j < examples[i].labels.size(); ++j) {
      total += cl_loss(s[i] + bias[examples[i].raters[j]], alpha, examples[i].labels[j]);
      ++count;
    }
  }
  if (count == 0) throw ContractError("validation set has no labels for the endpoint");
  return total / static_cast<double>(count);
}

/// Proportional stratified batches by consensus bin; fractional quotas carry over between batches.
class StratifiedSampler {
 public:
  StratifiedSampler(std::span<const Example> examples, int classes, std::size_t batch, Rng& rng)
      : rng_(rng), batch_(std::min(batch, examples.size())) {
    members_.resize(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < examples.size(); ++i) members_[static_cast<std::size_t>(examples[i].bin)].push_back(i);
    cursor_.assign(members_.size(), 0);
    credit_.assign(members_.size(), 0.0);
    share_.resize(members_.size());
    for (std::size_t b = 0; b < members_.size(); ++b) {
      share_[b] = static_cast<double>(members_[b].size()) / static_cast<double>(examples.size());
      shuffle(b);
    }
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> count(members_.size(), 0);
    std::size_t assigned = 0;
    for (std::size_t b = 0; b < members_.size(); ++b) {
      credit_[b] += share_[b] * static_cast<double>(batch_);
      // Credit goes negative after a top-up from a small bin.
      count[b] = credit_[b] > 0.0 ? static_cast<std::size_t>(std::floor(credit_[b])) : 0;
      assigned += count[b];
    }
    while (assigned < batch_) {
      std::size_t best = members_.size();
      for (std::size_t b = 0; b < members_.size(); ++b) {
        if (members_[b].empty()) continue;
        if (best == members_.size() || credit_[b] - count[b] > credit_[best] - count[best]) best = b;
      }
      ++count[best];
      ++assigned;
    }
    std::vector<std::size_t> out;
    for (std::size_t b = 0; b < members_.size(); ++b) {
      credit_[b] -= static_cast<double>(count[b]);
      for (std::size_t k = 0; k < count[b]; ++k) {
        if (cursor_[b] == members_[b].size()) shuffle(b);
        out.push_back(members_[b][cursor_[b]++]);
      }
    }
    return out;
  }

 private:
  void shuffle(std::size_t b) {
    auto& m = members_[b];
    for (std::size_t i = m.size(); i > 1; --i) std::swap(m[i - 1], m[uniform_index(rng_, i)]);
    cursor_[b] = 0;
  }

  Rng& rng_;
  std::size_t batch_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> cursor_;
  std::vector<double> credit_;
  std::vector<double> share_;
};

bool params_finite(const Model& model) {
  for (const auto& t : model.params().tensors())
    if (!t.all_finite()) return false;
  return true;
}

}  // namespace

TrainConfig TrainConfig::from_config(const Config& cfg) {
  TrainConfig t;
  t.endpoint = parse_endpoint(cfg.get("train.endpoint"));
  t.lr = cfg.get_double("train.lr");
  t.batch = static_cast<std::size_t>(cfg.get_int("train.batch"));
  t.max_iterations = static_cast<std::size_t>(cfg.get_int("train.max_iterations"));
  t.eval_every = static_cast<std::size_t>(cfg.get_int("train.eval_every"));
  t.patience = static_cast<std::size_t>(cfg.get_int("train.patience"));
  t.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  if (!(t.lr > 0.0)) throw ConfigError("field 'train.lr': must be positive");
  if (t.batch == 0) throw ConfigError("field 'train.batch': must be positive");
  if (t.max_iterations == 0) throw ConfigError("field 'train.max_iterations': must be positive");
  if (t.eval_every == 0) throw ConfigError("field 'train.eval_every': must be positive");
  if (t.patience == 0) throw ConfigError("field 'train.patience': must be at least 1");
  return t;
}

std::string encode_trace(std::span<const TraceRow> trace) {
  std::string out = "iteration,train_loss,val_loss\n";
  char buf[64];
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + ',';
    auto [p1, e1] = std::to_chars(buf, buf + sizeof buf, r.train_loss);
    out.append(buf, p1);
    out += ',';
    auto [p2, e2] = std::to_chars(buf, buf + sizeof buf, r.val_loss);
    out.append(buf, p2);
    out += '\n';
  }
  return out;
}

std::vector<std::string> training_raters(std::span<const PairedSample> samples, const DatasetSplit& split,
                                         Endpoint endpoint) {
  std::set<std::string> ids(split.train.begin(), split.train.end());
  ids.insert(split.val.begin(), split.val.end());
  std::set<std::string> raters;
  for (const auto& s : samples) {
    if (!ids.count(s.id())) continue;
    for (const auto& l : s.labels)
      if (l.endpoint == endpoint) raters.insert(l.rater_id);
  }
  return {raters.begin(), raters.end()};
}

ModelShape infer_shape(std::span<const PairedSample> samples, const DatasetSplit& split, Endpoint endpoint) {
  if (samples.empty()) throw ContractError("infer_shape: no samples");
  ModelShape shape;
  shape.d_a = samples.front().graph_a.feature_dim();
  shape.d_b = samples.front().graph_b.feature_dim();
  shape.classes = num_classes(endpoint);
  shape.raters = training_raters(samples, split, endpoint);
  return shape;
}

double labelled_loss(Model& model, std::span<const PairedSample* const> samples, Endpoint endpoint) {
  std::vector<Example> ex;
  for (const auto* s : samples) {
    ex.push_back(make_example(model, *s, endpoint));
    if (ex.back().labels.empty()) ex.pop_back();
  }
  return examples_loss(model, ex);
}

TrainResult train(Model& model, std::span<const PairedSample> samples, const DatasetSplit& split,
                  const TrainConfig& config) {
  check_disjoint(split, samples);
  const std::set<std::string> train_ids(split.train.begin(), split.train.end());
  const std::set<std::string> val_ids(split.val.begin(), split.val.end());
  std::vector<const PairedSample*> train_samples, val_samples;
  for (const auto& s : samples) {
    if (train_ids.count(s.id())) train_samples.push_back(&s);
    else if (val_ids.count(s.id())) val_samples.push_back(&s);
  }
  if (train_samples.empty()) throw ContractError("train: the train split is empty");

  model.fit_normalizers(train_samples);
  std::vector<Example> train_ex, val_ex;
  for (const auto* s : train_samples) {
    auto ex = make_example(model, *s, config.endpoint);
    if (!ex.labels.empty()) train_ex.push_back(std::move(ex));
  }
  for (const auto* s : val_samples) {
    auto ex = make_example(model, *s, config.endpoint);
    if (!ex.labels.empty()) val_ex.push_back(std::move(ex));
  }
  if (train_ex.empty()) {
    throw ContractError("train: no train sample carries a " + std::string(endpoint_name(config.endpoint)) + " label");
  }
  std::vector<int> all_labels;
  for (const auto& ex : train_ex) all_labels.insert(all_labels.end(), ex.labels.begin(), ex.labels.end());
  model.init_thresholds(all_labels);
  center_biases(model.rater_biases());

  const std::span<const Example> monitor = val_ex.empty() ? std::span<const Example>(train_ex) : val_ex;
  Rng rng(derive_seed(config.seed, 0x7a1e));
  StratifiedSampler sampler(train_ex, model.shape().classes, config.batch, rng);
  AdamOptions adam;
  adam.lr = config.lr;
  AdamState state;

  TrainResult result;
  result.best_val_loss = examples_loss(model, monitor);
  Snapshot best = snapshot(model);
  std::size_t stale = 0;
  double running = 0.0;
  std::size_t running_count = 0;

  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    const auto batch = sampler.next();
    try {
      Tape tape;
      std::vector<const PreparedInput*> inputs;
      std::vector<std::size_t> row, slot;
      std::vector<int> y;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = train_ex[batch[i]];
        inputs.push_back(&ex.input);
        for (std::size_t j = 0; j < ex.labels.size(); ++j) {
          row.push_back(i);
          slot.push_back(ex.raters[j]);
          y.push_back(ex.labels[j]);
        }
      }
      const ForwardMode mode{true, &rng};
      const Tensor s = model.latent(tape, inputs, mode);
      const Tensor biased = apply_rater_bias(tape, gather_rows(tape, s, row), model.rater_biases(), slot);
      const Tensor loss = cumulative_link_nll(tape, biased, model.thresholds(tape), y);
      if (!std::isfinite(loss.item())) throw DomainError("training loss is not finite");
      backward(tape, loss);
      adam_step(model.params().tensors(), state, adam);
      model.params().zero_grad();
      center_biases(model.rater_biases());
      if (!params_finite(model)) throw DomainError("parameters became non-finite");
      running += loss.item();
      ++running_count;
    } catch (const DomainError& e) {
      result.diverged = true;
      result.divergence = "iteration " + std::to_string(it) + ": " + e.what();
      result.iterations = it;
      break;
    }
    result.iterations = it;

    if (it % config.eval_every == 0 || it == config.max_iterations) {
      const double val = examples_loss(model, monitor);
      result.trace.push_back({it, running / static_cast<double>(std::max<std::size_t>(1, running_count)), val});
      running = 0.0;
      running_count = 0;
      if (val < result.best_val_loss) {
        result.best_val_loss = val;
        result.best_iteration = it;
        best = snapshot(model);
        stale = 0;
      } else if (++stale >= config.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  restore(model, best);
  return result;
}

std::vector<std::map<std::string, std::string>> expand_grid(
    const std::map<std::string, std::vector<std::string>>& axes) {
  std::vector<std::map<std::string, std::string>> out{{}};
  for (const auto& [key, values] : axes) {
    if (values.empty()) throw ConfigError("grid axis '" + key + "' has no values");
    std::vector<std::map<std::string, std::string>> next;
    for (const auto& partial : out) {
      for (const auto& v : values) {
        auto m = partial;
        m[key] = v;
        next.push_back(std::move(m));
      }
    }
    out = std::move(next);
  }
  return out;
}

GridResult grid_search(const Config& base, std::span<const PairedSample> samples, const DatasetSplit& split,
                       std::size_t jobs) {
  const auto points = expand_grid(base.grid());
  struct Outcome {
    std::unique_ptr<Model> model;
    TrainResult result;
    Config config;
  };
  std::vector<Outcome> outcomes(points.size());
  parallel_for(points.size(), jobs, [&](std::size_t i) {
    Config cfg = base;
    for (const auto& [k, v] : points[i]) cfg.set(k, v, "grid");
    const TrainConfig tc = TrainConfig::from_config(cfg);
    auto model = std::make_unique<Model>(ModelConfig::from_config(cfg), infer_shape(samples, split, tc.endpoint),
                                         derive_seed(tc.seed, 0x9e1d));
    outcomes[i].result = train(*model, samples, split, tc);
    outcomes[i].model = std::move(model);
    outcomes[i].config = std::move(cfg);
  });

  GridResult g;
  for (std::size_t i = 0; i < points.size(); ++i) {
    GridTrial t;
    t.index = i;
    t.assignment = points[i];
    t.val_loss = outcomes[i].result.best_val_loss;
    t.best_iteration = outcomes[i].result.best_iteration;
    t.diverged = outcomes[i].result.diverged;
    g.leaderboard.push_back(std::move(t));
    if (i > 0 && g.leaderboard[i].val_loss < g.leaderboard[g.best].val_loss) g.best = i;
  }
  g.model = std::move(outcomes[g.best].model);
  g.best_result = std::move(outcomes[g.best].result);
  g.best_config = std::move(outcomes[g.best].config);
  return g;
}

std::string encode_leaderboard(std::span<const GridTrial> trials) {
  std::set<std::string> keys;
  for (const auto& t : trials)
    for (const auto& [k, v] : t.assignment) keys.insert(k);
  std::string out = "trial";
  for (const auto& k : keys) out += ',' + k;
  out += ",val_loss,best_iteration,diverged\n";
  char buf[64];
  for (const auto& t : trials) {
    out += std::to_string(t.index);
    for (const auto& k : keys) {
      auto it = t.assignment.find(k);
      out += ',' + (it == t.assignment.end() ? std::string() : it->second);
    }
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, t.val_loss);
    out += ',' + std::string(buf, p) + ',' + std::to_string(t.best_iteration) + ',' + (t.diverged ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace stainfuse
