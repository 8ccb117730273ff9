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

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stainfuse/config.hpp"
#include "stainfuse/graph.hpp"
#include "stainfuse/model.hpp"

namespace stainfuse {

struct TrainConfig {
  Endpoint endpoint = Endpoint::Fibrosis;
  double lr = 1e-4;
  std::size_t batch = 16;
  std::size_t max_iterations = 7000;
  std::size_t eval_every = 100;
  std::size_t patience = 10;
  std::uint64_t seed = 7;

  static TrainConfig from_config(const Config& cfg);
};

struct TraceRow {
  std::size_t iteration = 0;
  double train_loss = 0.0;  // mean over iterations since the previous row
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  double best_val_loss = 0.0;
  std::size_t best_iteration = 0;
  std::size_t iterations = 0;
  bool early_stopped = false;
  bool diverged = false;
  std::string divergence;
};

std::string encode_trace(std::span<const TraceRow> trace);

/// Rater ids of `endpoint` labels on samples listed in the train or val split.
std::vector<std::string> training_raters(std::span<const PairedSample> samples, const DatasetSplit& split,
                                         Endpoint endpoint);
ModelShape infer_shape(std::span<const PairedSample> samples, const DatasetSplit& split, Endpoint endpoint);

/// Mean -log likelihood over (sample, rater label) pairs with rater biases applied, eval mode.
double labelled_loss(Model& model, std::span<const PairedSample* const> samples, Endpoint endpoint);

/// Fits normalizers and thresholds on the train split, then runs Adam on stratified
/// minibatches with validation-loss early stopping. The best validation snapshot is
/// restored before returning. Test-split samples are never read.
TrainResult train(Model& model, std::span<const PairedSample> samples, const DatasetSplit& split,
                  const TrainConfig& config);

struct GridTrial {
  std::size_t index = 0;
  std::map<std::string, std::string> assignment;
  double val_loss = 0.0;
  std::size_t best_iteration = 0;
  bool diverged = false;
};

/// Cartesian product of the axes; the first key (in map order) varies slowest.
std::vector<std::map<std::string, std::string>> expand_grid(const std::map<std::string, std::vector<std::string>>& axes);

struct GridResult {
  std::vector<GridTrial> leaderboard;  // in grid order
  std::size_t best = 0;                // lowest validation loss, ties to the earlier trial
  std::unique_ptr<Model> model;        // trained model of the best trial
  TrainResult best_result;
  Config best_config;
};

/// Train one model per grid point of `base.grid()` (a single run when there are no axes).
GridResult grid_search(const Config& base, std::span<const PairedSample> samples, const DatasetSplit& split,
                       std::size_t jobs);

std::string encode_leaderboard(std::span<const GridTrial> trials);

}  // namespace stainfuse
