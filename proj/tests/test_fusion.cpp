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
#include "stainfuse/fusion.hpp"
#include "stainfuse/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace stainfuse;
using namespace stainfuse::testing;

namespace {

std::vector<double> row_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

KroneckerParams random_kron(Rng& rng, std::size_t dh, std::size_t dt, std::size_t k) {
  ParamStore store;
  KroneckerParams p = KroneckerParams::create(store, "k", dh, dt, k, false, rng);
  for (Tensor& t : store.tensors())
    for (double& v : t.values()) v = uniform(rng, -1, 1);
  return p;
}

AttentionPoolParams random_attention(Rng& rng, std::size_t d) {
  return {random_tensor(rng, d, 1), random_tensor(rng, 1, 1), random_tensor(rng, d, d), random_tensor(rng, 1, d)};
}

Model small_model(Strategy s, const PairedSample& sample, std::uint64_t seed) {
  ModelConfig mc;
  mc.strategy = s;
  mc.hidden = 4;
  mc.head_hidden = 4;
  mc.kron_dim = 3;
  mc.kron_hidden = 4;
  mc.unimodal_hidden = 4;
  Model m(mc, {sample.graph_a.features.cols(), sample.graph_b.features.cols(), 5, {"r1"}}, seed);
  const PairedSample* train[] = {&sample};
  m.fit_normalizers(train);
  return m;
}

}  // namespace

TEST_CASE("strategy names round trip") {
  for (Strategy s : {Strategy::UnimodalA, Strategy::UnimodalB, Strategy::LateConcat, Strategy::LateAdd,
                     Strategy::LateHadamard, Strategy::KroneckerGated, Strategy::Gimp, Strategy::Gaimp})
    CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK_THROWS_AS(parse_strategy("bilinear"), ConfigError);
  CHECK(is_mid_fusion(Strategy::Gaimp));
  CHECK_FALSE(is_mid_fusion(Strategy::LateAdd));
  CHECK(is_unimodal(Strategy::UnimodalB));
}

TEST_CASE("concat") {
  Tape tape;
  CHECK(row_of(fuse_concat(tape, Tensor::row({1, 2}), Tensor::row({3}))) == std::vector<double>{1, 2, 3});
  CHECK(row_of(fuse_concat(tape, Tensor({1, 2}), Tensor({1, 3}))) == std::vector<double>(5, 0.0));
  Rng rng(1);
  const Tensor h = random_tensor(rng, 1, 256), t = random_tensor(rng, 1, 256);
  const Tensor z = fuse_concat(tape, h, t);
  CHECK(z.cols() == 512);
  CHECK(std::equal(h.values().begin(), h.values().end(), z.values().begin()));
}

TEST_CASE("add") {
  Tape tape;
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor h = Tensor::row({0.5, -4});
  CHECK(row_of(fuse_add(tape, h, h, eye, eye)) == std::vector<double>{1, -8});
  Rng rng(2);
  const Tensor wh = random_tensor(rng, 2, 3), wt = random_tensor(rng, 4, 3);
  const Tensor only_h = fuse_add(tape, h, Tensor({1, 4}), wh, wt);
  CHECK(bitwise_equal(only_h.values(), matmul(tape, h, wh).values()));
  CHECK_THROWS_AS(fuse_add(tape, h, Tensor({1, 3}), wh, wt), ShapeError);
  for (int i = 0; i < 50; ++i) {
    const Tensor a = random_tensor(rng, 1, 2), b = random_tensor(rng, 1, 4);
    CHECK(max_abs_diff(fuse_add(tape, a, b, wh, wt).values(), oracle::add(row_of(a), row_of(b), wh, wt)) < 1e-12);
  }
}

TEST_CASE("hadamard") {
  Tape tape;
  Rng rng(3);
  const Tensor wt = random_tensor(rng, 3, 2), t = random_tensor(rng, 1, 3);
  const Tensor ones_h = Tensor::row({1.0});
  const Tensor to_ones = Tensor::matrix(1, 2, {1, 1});
  CHECK(bitwise_equal(fuse_hadamard(tape, ones_h, t, to_ones, wt).values(), matmul(tape, t, wt).values()));
  CHECK(row_of(fuse_hadamard(tape, ones_h, t, Tensor({1, 2}), wt)) == std::vector<double>(2, 0.0));
  for (int i = 0; i < 50; ++i) {
    const Tensor wh = random_tensor(rng, 4, 2), h = random_tensor(rng, 1, 4);
    CHECK(max_abs_diff(fuse_hadamard(tape, h, t, wh, wt).values(), oracle::hadamard(row_of(h), row_of(t), wh, wt)) <
          1e-12);
  }
}

TEST_CASE("gated kronecker") {
  Tape tape;
  SUBCASE("1 x 1 by hand") {
    // Gates of 0.5 on positive projections give h' = 0.5 * 2, t' = 0.5 * 3.
    KroneckerParams p;
    p.w_h = Tensor::matrix(1, 1, {2});
    p.w_t = Tensor::matrix(1, 1, {3});
    p.gate_h = Tensor({2, 1});
    p.gate_t = Tensor({2, 1});
    const Tensor z = fuse_kronecker_gated(tape, Tensor::row({1}), Tensor::row({1}), p, false);
    CHECK(row_of(z) == std::vector<double>{1.5, 1.0, 1.5, 1.0});
  }
  SUBCASE("closed gates leave only the constant") {
    Rng rng(4);
    KroneckerParams p = random_kron(rng, 3, 2, 2);
    for (double& v : p.gate_h.values()) v = -1000;
    for (double& v : p.gate_t.values()) v = -1000;
    const Tensor z = fuse_kronecker_gated(tape, Tensor::row({1, 1, 1}), Tensor::row({1, 1}), p, false);
    REQUIRE(z.cols() == 9);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(z.values()[i]) < 1e-300);
    CHECK(z.values()[8] == 1.0);
  }
  SUBCASE("nested-loop oracle and retained unimodal slices") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      const KroneckerParams p = random_kron(rng, 4, 3, 4);
      const Tensor h = random_tensor(rng, 1, 4), t = random_tensor(rng, 1, 3);
      const Tensor z = fuse_kronecker_gated(tape, h, t, p, false);
      CHECK(z.cols() == 25);
      CHECK(max_abs_diff(z.values(), oracle::kronecker(row_of(h), row_of(t), p)) < 1e-12);
      const auto [hp, tp] = kronecker_gates(tape, h, t, p, false);
      for (std::size_t a = 0; a < 4; ++a) CHECK(z.values()[a * 5 + 4] == hp.values()[a]);
      for (std::size_t b = 0; b < 4; ++b) CHECK(z.values()[20 + b] == tp.values()[b]);
    }
  }
  SUBCASE("bilinear gate variant") {
    Rng rng(6);
    ParamStore store;
    const KroneckerParams p = KroneckerParams::create(store, "k", 3, 2, 2, true, rng);
    const Tensor h = random_tensor(rng, 1, 3), t = random_tensor(rng, 1, 2);
    const auto [hp, tp] = kronecker_gates(tape, h, t, p, true);
    const auto u = oracle::vecmat(row_of(h), p.bil_u_h), v = oracle::vecmat(row_of(t), p.bil_v_h);
    const auto proj = oracle::vecmat(row_of(h), p.w_h);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(hp.values()[i] == doctest::Approx(oracle::sigmoid(u[i] * v[i]) * oracle::relu(proj[i])).epsilon(1e-14));
  }
}

TEST_CASE("gimp step") {
  Tape tape;
  SUBCASE("negative projections leave states unchanged") {
    const CrossParams c{Tensor::matrix(1, 2, {-1, -1}), Tensor::matrix(2, 1, {-1, -1})};
    const NodeState h = make_state(Tensor::matrix(2, 2, {1, 2, 3, 4}), {});
    const NodeState t = make_state(Tensor::matrix(3, 1, {1, 2, 5}), {});
    const auto [h2, t2] = gimp_step(tape, h, t, c);
    CHECK(bitwise_equal(h2.h.values(), h.h.values()));
    CHECK(bitwise_equal(t2.h.values(), t.h.values()));
  }
  SUBCASE("single nodes with identity projections swap summaries") {
    const CrossParams c{Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::matrix(2, 2, {1, 0, 0, 1})};
    const auto [h2, t2] = gimp_step(tape, make_state(Tensor::row({1, 2}), {}), make_state(Tensor::row({3, 0.5}), {}), c);
    CHECK(row_of(h2.h) == std::vector<double>{4, 2.5});
    CHECK(row_of(t2.h) == std::vector<double>{4, 2.5});
  }
  SUBCASE("every node receives the same vector and matches the oracle") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
      const Tensor hh = random_tensor(rng, 6, 3), tt = random_tensor(rng, 4, 2);
      const CrossParams c{random_tensor(rng, 2, 3), random_tensor(rng, 3, 2)};
      const auto [h2, t2] = gimp_step(tape, make_state(hh, {}), make_state(tt, {}), c);
      for (std::size_t v = 1; v < 6; ++v)
        for (std::size_t j = 0; j < 3; ++j)
          CHECK(h2.h(v, j) - hh(v, j) == doctest::Approx(h2.h(0, j) - hh(0, j)).epsilon(1e-12));
      const auto [oh, ot] = oracle::gimp(oracle::to_mat(hh), oracle::to_mat(tt), c);
      CHECK(max_abs_diff(h2.h.values(), oracle::flat(oh)) < 1e-12);
      CHECK(max_abs_diff(t2.h.values(), oracle::flat(ot)) < 1e-12);
    }
  }
  SUBCASE("empty graph") {
    const CrossParams c{Tensor({1, 1}), Tensor({1, 1})};
    CHECK_THROWS_AS(gimp_step(tape, NodeState{}, make_state(Tensor::row({1}), {}), c), ContractError);
  }
}

TEST_CASE("gaimp step") {
  Tape tape;
  Rng rng(8);
  SUBCASE("closed attention gates leave states unchanged") {
    AttentionPoolParams ah = random_attention(rng, 2), at = random_attention(rng, 3);
    ah.gate_b = Tensor::scalar(-1000);
    at.gate_b = Tensor::scalar(-1000);
    const CrossParams c{random_tensor(rng, 3, 2), random_tensor(rng, 2, 3)};
    const NodeState h = make_state(random_tensor(rng, 4, 2), {});
    const NodeState t = make_state(random_tensor(rng, 5, 3), {});
    const auto [h2, t2] = gaimp_step(tape, h, t, c, ah, at);
    CHECK(bitwise_equal(h2.h.values(), h.h.values()));
    CHECK(bitwise_equal(t2.h.values(), t.h.values()));
  }
  SUBCASE("single nodes by hand") {
    const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
    const AttentionPoolParams a{Tensor({2, 1}), Tensor({1, 1}), eye, Tensor({1, 2})};
    const CrossParams c{eye, eye};
    const auto [h2, t2] = gaimp_step(tape, make_state(Tensor::row({1, 2}), {}), make_state(Tensor::row({0.4, 0}), {}),
                                     c, a, a);
    CHECK(h2.h(0, 0) == doctest::Approx(1 + std::tanh(0.2)).epsilon(1e-15));
    CHECK(h2.h(0, 1) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(t2.h(0, 0) == doctest::Approx(0.4 + std::tanh(0.5)).epsilon(1e-15));
    CHECK(t2.h(0, 1) == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  }
  SUBCASE("oracle and node order") {
    for (int i = 0; i < 20; ++i) {
      const Tensor hh = random_tensor(rng, 7, 3), tt = random_tensor(rng, 3, 2);
      const CrossParams c{random_tensor(rng, 2, 3), random_tensor(rng, 3, 2)};
      const AttentionPoolParams ah = random_attention(rng, 3), at = random_attention(rng, 2);
      const auto [h2, t2] = gaimp_step(tape, make_state(hh, {}), make_state(tt, {}), c, ah, at);
      const auto [oh, ot] = oracle::gaimp(oracle::to_mat(hh), oracle::to_mat(tt), c, ah, at);
      CHECK(max_abs_diff(h2.h.values(), oracle::flat(oh)) < 1e-12);
      CHECK(max_abs_diff(t2.h.values(), oracle::flat(ot)) < 1e-12);
      Tensor flipped({7, 3});
      for (std::size_t v = 0; v < 7; ++v)
        for (std::size_t j = 0; j < 3; ++j) flipped(6 - v, j) = hh(v, j);
      CHECK(max_abs_diff(gated_attention_pool(tape, make_state(flipped, {}), ah).values(),
                         gated_attention_pool(tape, make_state(hh, {}), ah).values()) < 1e-12);
    }
  }
}

TEST_CASE("late concat golden latent score") {
  Rng rng(31);
  const PairedSample s = random_pair(rng, 12, 9, 5, 4);
  Model m = small_model(Strategy::LateConcat, s, 5);
  const PreparedInput in = m.prepare(s);
  const PreparedInput* batch[] = {&in};
  CHECK(m.predict_latent(batch)[0] == doctest::Approx(0.74147936545501869).epsilon(1e-13));
}

TEST_CASE("zeroed cross matrices reproduce late concat bit for bit") {
  for (Strategy mid : {Strategy::Gimp, Strategy::Gaimp}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const PairedSample s = random_pair(rng, 10 + seed, 7, 5, 4);
      Model late = small_model(Strategy::LateConcat, s, seed);
      Model fused = small_model(mid, s, seed + 100);
      fused.copy_matching(late);
      for (std::size_t i = 0; i < fused.params().size(); ++i) {
        const std::string& name = fused.params().names()[i];
        if (name.starts_with("mid.") && (name.ends_with("w_th") || name.ends_with("w_ht"))) {
          auto v = fused.params().tensors()[i].values();
          std::fill(v.begin(), v.end(), 0.0);
        }
      }
      const PreparedInput in = late.prepare(s);
      const PreparedInput* batch[] = {&in};
      CHECK(bitwise_equal(late.predict_latent(batch), fused.predict_latent(batch)));
    }
  }
}

TEST_CASE("fusion forwards accept unequal graph sizes and ignore node order") {
  for (Strategy st : {Strategy::LateConcat, Strategy::LateAdd, Strategy::LateHadamard, Strategy::KroneckerGated,
                      Strategy::Gimp, Strategy::Gaimp, Strategy::UnimodalA, Strategy::UnimodalB}) {
    CAPTURE(strategy_name(st));
    Rng rng(11);
    const PairedSample s = random_pair(rng, 14, 8, 5, 4);
    Model m = small_model(st, s, 3);
    PairedSample r = s;
    r.graph_a.features = s.graph_a.features.clone();
    std::vector<std::size_t> to(14);
    std::iota(to.begin(), to.end(), std::size_t{0});
    std::shuffle(to.begin(), to.end(), rng);
    for (std::size_t v = 0; v < 14; ++v) {
      r.graph_a.centroids[to[v]] = s.graph_a.centroids[v];
      for (std::size_t j = 0; j < 5; ++j) r.graph_a.features(to[v], j) = s.graph_a.features(v, j);
    }
    for (auto& [a, b] : r.graph_a.edges) {
      a = static_cast<std::uint32_t>(to[a]);
      b = static_cast<std::uint32_t>(to[b]);
    }
    const PreparedInput x = m.prepare(s), y = m.prepare(r);
    const PreparedInput* bx[] = {&x};
    const PreparedInput* by[] = {&y};
    CHECK(std::abs(m.predict_latent(bx)[0] - m.predict_latent(by)[0]) < 1e-10);
  }
}

TEST_CASE("fusion parameter gradients match central differences") {
  Rng rng(12);
  const Tensor h = random_tensor(rng, 1, 4), t = random_tensor(rng, 1, 3);
  const Tensor wh = random_tensor(rng, 4, 5), wt = random_tensor(rng, 3, 5);
  const Tensor probe5 = random_tensor(rng, 1, 5);
  CHECK(grad_check({h, t, wh, wt}, [&](Tape& tp) { return probe(tp, fuse_add(tp, h, t, wh, wt), probe5); }) < 1e-6);
  CHECK(grad_check({h, t, wh, wt}, [&](Tape& tp) { return probe(tp, fuse_hadamard(tp, h, t, wh, wt), probe5); }) <
        1e-6);
  const KroneckerParams kp = random_kron(rng, 4, 3, 3);
  const Tensor probe16 = random_tensor(rng, 1, 16);
  CHECK(grad_check({h, t, kp.w_h, kp.w_t, kp.gate_h, kp.gate_t},
                   [&](Tape& tp) { return probe(tp, fuse_kronecker_gated(tp, h, t, kp, false), probe16); }) < 1e-6);
  const Tensor hh = random_tensor(rng, 5, 3), tt = random_tensor(rng, 4, 2);
  const CrossParams c{random_tensor(rng, 2, 3), random_tensor(rng, 3, 2)};
  const AttentionPoolParams ah = random_attention(rng, 3), at = random_attention(rng, 2);
  const Tensor ph = random_tensor(rng, 5, 3), pt = random_tensor(rng, 4, 2);
  auto both = [&](Tape& tp, const std::pair<NodeState, NodeState>& r) {
    return add(tp, probe(tp, r.first.h, ph), probe(tp, r.second.h, pt));
  };
  CHECK(grad_check({hh, tt, c.w_th, c.w_ht},
                   [&](Tape& tp) { return both(tp, gimp_step(tp, make_state(hh, {}), make_state(tt, {}), c)); }) <
        1e-6);
  CHECK(grad_check({hh, tt, c.w_th, c.w_ht, ah.gate_w, ah.gate_b, ah.proj_w, ah.proj_b, at.proj_w}, [&](Tape& tp) {
          return both(tp, gaimp_step(tp, make_state(hh, {}), make_state(tt, {}), c, ah, at));
        }) < 1e-6);
}
