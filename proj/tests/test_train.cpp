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

#include <doctest.h>

#include "stainfuse/errors.hpp"
#include "stainfuse/train.hpp"
#include "support.hpp"

using namespace stainfuse;
using namespace stainfuse::testing;

namespace {

// Every node carries the label in feature 0, so the latent order is recoverable.
std::vector<PairedSample> separable(std::size_t patients, int classes, std::uint64_t seed, bool flip = false,
                                    std::size_t first = 0) {
  Rng rng(seed);
  std::vector<PairedSample> out;
  for (std::size_t p = first; p < first + patients; ++p) {
    const int y = static_cast<int>(p % static_cast<std::size_t>(classes));
    PairedSample s;
    s.patient_id = "P" + std::to_string(1000 + p);
    s.graph_a = random_graph(rng, 6, 3, 2, Modality::A);
    s.graph_b = random_graph(rng, 5, 2, 2, Modality::B);
    const double v = static_cast<double>(flip ? classes - 1 - y : y) / (classes - 1);
    for (std::size_t i = 0; i < 6; ++i) s.graph_a.features(i, 0) = v + 0.02 * normal(rng);
    for (std::size_t i = 0; i < 5; ++i) s.graph_b.features(i, 0) = v + 0.02 * normal(rng);
    s.labels.push_back({"r1", Endpoint::Fibrosis, y});
    out.push_back(std::move(s));
  }
  return out;
}

DatasetSplit ids_split(const std::vector<PairedSample>& s, std::size_t n_train, std::size_t n_val) {
  DatasetSplit d;
  for (std::size_t i = 0; i < s.size(); ++i)
    (i < n_train ? d.train : i < n_train + n_val ? d.val : d.test).push_back(s[i].id());
  return d;
}

ModelConfig tiny(Strategy st = Strategy::LateConcat) {
  ModelConfig mc;
  mc.strategy = st;
  mc.hidden = 8;
  mc.head_hidden = 8;
  mc.head_dropout = 0.0;
  return mc;
}

Config tiny_config() {
  Config cfg;
  for (const char* kv : {"model.hidden=8", "model.head_hidden=8", "model.head_dropout=0", "train.lr=0.01",
                         "train.batch=8", "train.max_iterations=300", "train.eval_every=50", "train.patience=100"})
    cfg.apply_override(kv);
  return cfg;
}

}  // namespace

TEST_CASE("separable fixture trains below 0.1 loss") {
  const auto samples = separable(40, 5, 1);
  const auto split = ids_split(samples, 30, 10);
  Model model(tiny(), infer_shape(samples, split, Endpoint::Fibrosis), 3);
  TrainConfig tc;
  tc.lr = 0.01;
  tc.batch = 8;
  tc.max_iterations = 2000;
  tc.eval_every = 100;
  tc.patience = 100;
  const TrainResult r = train(model, samples, split, tc);
  REQUIRE_FALSE(r.diverged);
  double best_train = 1e9;
  for (const auto& row : r.trace) best_train = std::min(best_train, row.train_loss);
  CHECK(best_train < 0.1);
  std::vector<const PairedSample*> val;
  for (std::size_t i = 30; i < 40; ++i) val.push_back(&samples[i]);
  CHECK(labelled_loss(model, val, Endpoint::Fibrosis) == doctest::Approx(r.best_val_loss).epsilon(1e-12));
  CHECK(encode_trace(r.trace).rfind("iteration,train_loss,val_loss\n", 0) == 0);
}

TEST_CASE("training is deterministic per seed") {
  const auto samples = separable(20, 3, 2);
  const auto split = ids_split(samples, 14, 6);
  TrainConfig tc;
  tc.lr = 0.01;
  tc.batch = 4;
  tc.max_iterations = 120;
  tc.eval_every = 40;
  std::vector<double> finals;
  for (int run = 0; run < 2; ++run) {
    Model model(tiny(), infer_shape(samples, split, Endpoint::Fibrosis), 11);
    const TrainResult r = train(model, samples, split, tc);
    finals.push_back(r.trace.back().train_loss);
    finals.push_back(r.best_val_loss);
  }
  CHECK(finals[0] == finals[2]);
  CHECK(finals[1] == finals[3]);
}

TEST_CASE("early stopping when validation loss keeps rising") {
  // Validation labels run against the training labels.
  auto samples = separable(24, 3, 3);
  const auto val = separable(9, 3, 4, true, 24);
  samples.insert(samples.end(), val.begin(), val.end());
  const auto split = ids_split(samples, 24, 9);
  Model model(tiny(), infer_shape(samples, split, Endpoint::Fibrosis), 5);
  TrainConfig tc;
  tc.lr = 0.01;
  tc.batch = 8;
  tc.max_iterations = 3000;
  tc.eval_every = 20;
  tc.patience = 3;
  const TrainResult r = train(model, samples, split, tc);
  CHECK(r.early_stopped);
  CHECK(r.iterations < 3000);
  CHECK(r.iterations == r.trace.back().iteration);
  CHECK(r.trace.size() >= 3);
  CHECK(r.iterations - r.best_iteration == 3 * 20);
}

TEST_CASE("stratified batches survive a nearly empty class") {
  auto samples = separable(40, 5, 9);
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i].labels[0].score = i == 3 ? 4 : static_cast<int>(i % 2);
  const auto split = ids_split(samples, 30, 10);
  Model model(tiny(), infer_shape(samples, split, Endpoint::Fibrosis), 4);
  TrainConfig tc;
  tc.lr = 0.01;
  tc.batch = 7;
  tc.max_iterations = 600;
  tc.eval_every = 100;
  tc.patience = 100;
  const TrainResult r = train(model, samples, split, tc);
  CHECK(r.iterations == 600);
  CHECK_FALSE(r.diverged);
}

TEST_CASE("training reads neither the test split nor val features for normalization") {
  auto samples = separable(20, 3, 5);
  const auto split = ids_split(samples, 12, 4);
  // Test samples with the wrong feature width would fail if they were touched.
  for (std::size_t i = 16; i < 20; ++i) samples[i].graph_a.features = Tensor({6, 7}, 1.0);
  // Extreme validation features must not move the normalizer bounds.
  for (std::size_t i = 12; i < 16; ++i) samples[i].graph_b.features(0, 1) = 1e6;
  Model model(tiny(), {3, 2, 3, {"r1"}}, 1);
  TrainConfig tc;
  tc.max_iterations = 10;
  tc.eval_every = 5;
  CHECK_NOTHROW(train(model, samples, split, tc));
  CHECK(model.normalizer_b().max()[1] < 10.0);

  DatasetSplit leaky = split;
  leaky.val.push_back(split.train[0]);
  CHECK_THROWS_AS(train(model, samples, leaky, tc), ContractError);
}

TEST_CASE("grid expansion and search") {
  const auto product = expand_grid({{"model.hidden", {"8", "16"}}, {"train.lr", {"0.1", "0.01", "0.001"}}});
  REQUIRE(product.size() == 6);
  CHECK(product[0].at("model.hidden") == "8");
  CHECK(product[1].at("model.hidden") == "8");
  CHECK(product[1].at("train.lr") == "0.01");
  CHECK(product[3].at("model.hidden") == "16");
  CHECK(expand_grid({}).size() == 1);

  const auto samples = separable(24, 3, 6);
  const auto split = ids_split(samples, 16, 8);
  SUBCASE("singleton grid") {
    Config cfg = tiny_config();
    const GridResult g = grid_search(cfg, samples, split, 1);
    CHECK(g.leaderboard.size() == 1);
    CHECK(g.best == 0);
    REQUIRE(g.model);
  }
  SUBCASE("a degenerate learning rate is not selected") {
    Config cfg = tiny_config();
    cfg.apply_override("grid.train.lr=10|0.01");
    cfg.apply_override("grid.model.head_hidden=4|8");
    const GridResult g = grid_search(cfg, samples, split, 2);
    CHECK(g.leaderboard.size() == 4);
    CHECK(g.leaderboard[g.best].assignment.at("train.lr") == "0.01");
    CHECK(g.best_config.get("train.lr") == "0.01");
    CHECK(encode_leaderboard(g.leaderboard).find("train.lr") != std::string::npos);
    const GridResult again = grid_search(cfg, samples, split, 1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(again.leaderboard[i].val_loss == g.leaderboard[i].val_loss);
  }
}

TEST_CASE("checkpoint round trip and shape mismatch") {
  const auto samples = separable(12, 3, 7);
  const auto split = ids_split(samples, 8, 4);
  Model model(tiny(Strategy::Gaimp), infer_shape(samples, split, Endpoint::Fibrosis), 2);
  TrainConfig tc;
  tc.max_iterations = 20;
  tc.eval_every = 10;
  train(model, samples, split, tc);
  const Checkpoint ck = decode_checkpoint(encode_checkpoint(model.to_checkpoint({{"note", "x"}})));
  Model back = Model::from_checkpoint(ck);
  std::vector<PreparedInput> in;
  for (const auto& s : samples) in.push_back(model.prepare(s));
  std::vector<const PreparedInput*> ptr;
  for (const auto& p : in) ptr.push_back(&p);
  CHECK(bitwise_equal(model.predict_latent(ptr), back.predict_latent(ptr)));
  CHECK(model.predict(ptr) == back.predict(ptr));
  try {
    Model::from_checkpoint(ck, {{"model.hidden", "16"}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("enc_a.conv1.w_self") != std::string::npos);
    CHECK(msg.find("[3x8]") != std::string::npos);
  }
}

TEST_CASE("training configuration validation") {
  Config cfg;
  cfg.apply_override("train.patience=0");
  CHECK_THROWS_AS(TrainConfig::from_config(cfg), ConfigError);
  Config ok;
  CHECK(TrainConfig::from_config(ok).max_iterations == 7000);
}
