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
#include "stainfuse/gnn.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace stainfuse;
using namespace stainfuse::testing;

namespace {

GraphConvParams random_conv(Rng& rng, std::size_t din, std::size_t dout) {
  return {random_tensor(rng, din, dout), random_tensor(rng, din, dout), random_tensor(rng, 1, dout)};
}

AttentionPoolParams random_attention(Rng& rng, std::size_t d) {
  return {random_tensor(rng, d, 1), random_tensor(rng, 1, 1), random_tensor(rng, d, d), random_tensor(rng, 1, d)};
}

std::vector<double> naive_conv(const Tensor& h, const std::vector<Edge>& edges, const GraphConvParams& p, bool act) {
  return oracle::flat(oracle::graph_conv(oracle::to_mat(h), edges, p, act));
}

struct Permuted {
  Tensor features;
  std::vector<Edge> edges;
};

Permuted relabel(const Tensor& f, const std::vector<Edge>& edges, const std::vector<std::size_t>& to) {
  Permuted p{Tensor({f.rows(), f.cols()}), {}};
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) p.features(to[i], j) = f(i, j);
  for (const auto& [s, d] : edges)
    p.edges.emplace_back(static_cast<std::uint32_t>(to[s]), static_cast<std::uint32_t>(to[d]));
  return p;
}

Tensor fixture_features() {
  Tensor f({6, 4});
  for (std::size_t i = 0; i < 24; ++i) f.values()[i] = std::sin(1.0 + static_cast<double>(i) * 0.7);
  return f;
}

const std::vector<Edge> kFixtureEdges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}, {0, 3}, {2, 5}};

}  // namespace

TEST_CASE("normalizer") {
  ModalGraph g;
  g.features = Tensor::matrix(2, 2, {2.0, 5.0, 4.0, 5.0});
  g.centroids.resize(2);
  const ModalGraph* train[] = {&g};
  const Normalizer norm = Normalizer::fit(train);
  const Tensor out = norm.apply(Tensor::matrix(3, 2, {3.0, 5.0, 7.0, 9.0, 2.0, -1.0}));
  CHECK(out(0, 0) == 0.5);
  CHECK(out(1, 0) == 2.5);
  CHECK(out(2, 0) == 0.0);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(1, 1) == 0.0);
  Normalizer clamped = norm;
  clamped.set_clamp(true);
  CHECK(clamped.apply(Tensor::row({7.0, 5.0}))(0, 0) == 1.0);
  CHECK_THROWS_AS(Normalizer().apply(out), ContractError);
  CHECK_THROWS_AS(Normalizer::from_bounds({1.0}, {0.0}), ContractError);
}

TEST_CASE("graph_conv examples") {
  Tape tape;
  const GraphConvParams id{Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor({1, 2})};
  SUBCASE("isolated node") {
    const NodeState s = make_state(Tensor::row({-1.5, 2.0}), {});
    const NodeState out = graph_conv(tape, s, id);
    CHECK(out.h(0, 0) == 0.0);
    CHECK(out.h(0, 1) == 2.0);
  }
  SUBCASE("two-node cycle doubles") {
    const std::vector<Edge> e{{0, 1}, {1, 0}};
    const NodeState s = make_state(Tensor::matrix(2, 2, {0.5, -3.0, 0.5, -3.0}), e);
    const NodeState out = graph_conv(tape, s, id, false);
    CHECK(bitwise_equal(out.h.values(), std::vector<double>{1.0, -6.0, 1.0, -6.0}));
  }
  SUBCASE("messages flow from source to destination") {
    const std::vector<Edge> e{{0, 1}};
    const NodeState out = graph_conv(tape, make_state(Tensor::matrix(2, 2, {1, 1, 0, 0}), e), id, false);
    CHECK(out.h(0, 0) == 1.0);
    CHECK(out.h(1, 0) == 1.0);
  }
  SUBCASE("symmetric option adds missing reverse edges") {
    const std::vector<Edge> e{{0, 1}, {1, 2}, {2, 1}};
    const NodeState s = make_state(Tensor({3, 1}), e, true);
    CHECK(s.edges.size() == 4);
  }
}

TEST_CASE("graph_conv equals a double-loop aggregation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const ModalGraph g = random_graph(rng, 10, 4, 3);
    const GraphConvParams p = random_conv(rng, 4, 5);
    Tape tape;
    const NodeState out = graph_conv(tape, make_state(g.features, g.edges), p, seed % 2 == 0);
    CHECK(max_abs_diff(out.h.values(), naive_conv(g.features, g.edges, p, seed % 2 == 0)) < 1e-12);
  }
}

TEST_CASE("top-k selection") {
  CHECK(select_top_k(std::vector<double>{3, 1, 2, 0}, 0.5) == std::vector<std::size_t>{0, 2});
  CHECK(select_top_k(std::vector<double>{1, 1, 1}, 0.5) == std::vector<std::size_t>{0, 1});
  CHECK(select_top_k(std::vector<double>{0.1, 0.4, 0.3}, 1.0) == std::vector<std::size_t>{0, 1, 2});
  CHECK(select_top_k(std::vector<double>{5}, 0.01) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(select_top_k(std::vector<double>{1}, 0.0), ContractError);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<double> s(1 + uniform_index(rng, 40));
    for (double& v : s) v = std::round(uniform(rng, -3, 3) * 2) / 2;
    const double ratio = uniform(rng, 0.05, 1.0);
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    order.resize(static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(s.size()))));
    std::sort(order.begin(), order.end());
    CHECK(select_top_k(s, ratio) == order);
  }
}

TEST_CASE("sagpool") {
  SUBCASE("ratio one keeps every node scaled by tanh(score)") {
    Rng rng(3);
    const ModalGraph g = random_graph(rng, 7, 3, 2);
    const GraphConvParams score = random_conv(rng, 3, 1);
    Tape tape;
    const NodeState s = make_state(g.features, g.edges);
    const NodeState out = sagpool(tape, s, score, 1.0);
    const auto raw = naive_conv(g.features, g.edges, score, false);
    REQUIRE(out.size() == 7);
    CHECK(out.edges == s.edges);
    for (std::size_t v = 0; v < 7; ++v)
      for (std::size_t j = 0; j < 3; ++j) CHECK(out.h(v, j) == doctest::Approx(g.features(v, j) * std::tanh(raw[v])));
  }
  SUBCASE("keeps the induced subgraph of the best scores") {
    // Identity-like scoring: score is the single feature.
    const GraphConvParams score{Tensor::matrix(1, 1, {1}), Tensor::matrix(1, 1, {0}), Tensor({1, 1})};
    const std::vector<Edge> e{{0, 1}, {0, 2}, {2, 0}, {3, 2}};
    Tape tape;
    const NodeState out = sagpool(tape, make_state(Tensor::matrix(4, 1, {3, 1, 2, 0}), e), score, 0.5);
    CHECK(out.active_index == std::vector<std::size_t>{0, 2});
    CHECK(out.edges == std::vector<Edge>{{0, 1}, {1, 0}});
    CHECK(out.h(0, 0) == doctest::Approx(3 * std::tanh(3.0)));
  }
  SUBCASE("gradients reach only the survivors") {
    Rng rng(4);
    Tensor h = random_tensor(rng, 8, 3);
    h.set_requires_grad(true);
    const GraphConvParams score = random_conv(rng, 3, 1);
    Tape tape;
    const NodeState out = sagpool(tape, make_state(h, {}), score, 0.5);
    backward(tape, sum(tape, out.h));
    std::vector<bool> kept(8, false);
    for (auto k : out.active_index) kept[k] = true;
    for (std::size_t v = 0; v < 8; ++v) {
      double mag = 0.0;
      for (std::size_t j = 0; j < 3; ++j) mag += std::abs(h.grad()[v * 3 + j]);
      CHECK((kept[v] ? mag > 0.0 : mag == 0.0));
    }
  }
  SUBCASE("finite differences on random graphs") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const ModalGraph g = random_graph(rng, 9, 3, 3);
      Tensor h = g.features.clone();
      GraphConvParams score = random_conv(rng, 3, 1);
      const Tensor w = random_tensor(rng, 5, 3);
      const double err = grad_check({h, score.w_self, score.w_neigh, score.bias}, [&](Tape& t) {
        return probe(t, sagpool(t, make_state(h, g.edges), score, 0.5).h, w);
      });
      CHECK(err < 1e-6);
    }
  }
}

TEST_CASE("mean pool") {
  Tape tape;
  CHECK(bitwise_equal(mean_pool(tape, make_state(Tensor::row({1, -2}), {})).values(), std::vector<double>{1, -2}));
  CHECK(bitwise_equal(mean_pool(tape, make_state(Tensor::matrix(2, 2, {1, -2, -1, 2}), {})).values(),
                      std::vector<double>{0, 0}));
  Rng rng(9);
  const Tensor h = random_tensor(rng, 100, 128);
  std::vector<double> cols(128, 0.0);
  for (std::size_t j = 0; j < 128; ++j) {
    for (std::size_t i = 0; i < 100; ++i) cols[j] += h(i, j);
    cols[j] /= 100.0;
  }
  CHECK(max_abs_diff(mean_pool(tape, make_state(h, {})).values(), cols) < 1e-12);
  CHECK_THROWS_AS(mean_pool(tape, NodeState{}), ContractError);
}

TEST_CASE("gated attention pool") {
  Tape tape;
  SUBCASE("saturated gate gives zero") {
    Rng rng(1);
    AttentionPoolParams p = random_attention(rng, 3);
    p.gate_b = Tensor::scalar(-800.0);
    const Tensor out = gated_attention_pool(tape, make_state(random_tensor(rng, 5, 3, 0, 1), {}), p);
    CHECK(max_abs_diff(out.values(), std::vector<double>(3, 0.0)) < 1e-300);
  }
  SUBCASE("single node with a neutral gate") {
    const AttentionPoolParams p{Tensor({2, 1}), Tensor({1, 1}), Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor({1, 2})};
    const Tensor out = gated_attention_pool(tape, make_state(Tensor::row({0.8, 2.0}), {}), p);
    CHECK(out(0, 0) == doctest::Approx(std::tanh(0.4)).epsilon(1e-15));
    CHECK(out(0, 1) == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  }
  SUBCASE("node order does not matter") {
    Rng rng(2);
    const AttentionPoolParams p = random_attention(rng, 4);
    const Tensor h = random_tensor(rng, 12, 4);
    std::vector<std::size_t> to(12);
    std::iota(to.begin(), to.end(), std::size_t{0});
    std::shuffle(to.begin(), to.end(), rng);
    const Permuted q = relabel(h, {}, to);
    CHECK(max_abs_diff(gated_attention_pool(tape, make_state(h, {}), p).values(),
                       gated_attention_pool(tape, make_state(q.features, {}), p).values()) < 1e-12);
  }
  SUBCASE("empty state") {
    Rng rng(3);
    CHECK_THROWS_AS(gated_attention_pool(tape, NodeState{}, random_attention(rng, 2)), ContractError);
  }
}

TEST_CASE("encoder golden embeddings") {
  const std::vector<std::vector<double>> golden{
      {0.02045950574395014, 0.55606182282393402, 0.022332409057303305, 0.11168946203370142, 0.019425712808254038,
       0.12252876978592839},
      {0, 0, 0.97300436089655484, 0, 0.12939074707705442, 0.1624102254486727}};
  int i = 0;
  for (Readout r : {Readout::Mean, Readout::Attention}) {
    Rng rng(99);
    ParamStore store;
    const EncoderParams p = EncoderParams::create(store, "enc", 4, 3, r, rng);
    Tape tape;
    const Encoding enc = encode(tape, make_state(fixture_features(), kFixtureEdges), p, {0.5, r});
    CHECK(enc.embedding.cols() == 6);
    CHECK(max_abs_diff(enc.embedding.values(), golden[i++]) < 1e-14);
    CHECK(enc.layer_states.size() == 3);
    CHECK(enc.layer_states[1].size() == 3);
  }
}

TEST_CASE("encoder ignores node labels") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const ModalGraph g = random_graph(rng, 15 + uniform_index(rng, 20), 5, 3);
    ParamStore store;
    const Readout r = seed % 2 ? Readout::Attention : Readout::Mean;
    const EncoderParams p = EncoderParams::create(store, "e", 5, 8, r, rng);
    std::vector<std::size_t> to(g.num_nodes());
    std::iota(to.begin(), to.end(), std::size_t{0});
    std::shuffle(to.begin(), to.end(), rng);
    const Permuted q = relabel(g.features, g.edges, to);
    Tape tape;
    const Encoding a = encode(tape, make_state(g.features, g.edges), p, {0.5, r});
    const Encoding b = encode(tape, make_state(q.features, q.edges), p, {0.5, r});
    CHECK(max_abs_diff(a.embedding.values(), b.embedding.values()) < 1e-10);
    // conv1 states are relabelled copies of each other.
    double worst = 0.0;
    for (std::size_t v = 0; v < g.num_nodes(); ++v)
      for (std::size_t j = 0; j < 8; ++j)
        worst = std::max(worst, std::abs(a.layer_states[0].h(v, j) - b.layer_states[0].h(to[v], j)));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("zero input and zero biases encode to zero") {
  Rng rng(5);
  ParamStore store;
  const EncoderParams p = EncoderParams::create(store, "e", 4, 6, Readout::Mean, rng);
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store.names()[i].ends_with("bias")) {
      auto v = store.tensors()[i].values();
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
  Tape tape;
  const Encoding enc = encode(tape, make_state(Tensor({9, 4}), kFixtureEdges), p, {});
  CHECK(enc.embedding.cols() == 12);
  CHECK(max_abs_diff(enc.embedding.values(), std::vector<double>(12, 0.0)) == 0.0);
}

TEST_CASE("encoder gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Readout r = seed % 2 ? Readout::Attention : Readout::Mean;
    Rng rng(seed);
    const ModalGraph g = random_graph(rng, 10, 3, 3);
    ParamStore store;
    const EncoderParams p = EncoderParams::create(store, "e", 3, 4, r, rng);
    // Nonzero biases keep ReLU inputs off their kink.
    for (Tensor& t : store.tensors())
      for (double& v : t.values()) v = uniform(rng, -0.5, 0.5);
    const Tensor w = random_tensor(rng, 1, 8);
    const double err = grad_check({store.tensors().begin(), store.tensors().end()}, [&](Tape& t) {
      return probe(t, encode(t, make_state(g.features, g.edges), p, {0.5, r}).embedding, w);
    });
    CHECK(err < 1e-4);
  }
}
