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

#include <map>
#include <set>

#include "stainfuse/binary_io.hpp"
#include "stainfuse/errors.hpp"
#include "stainfuse/graph.hpp"
#include "stainfuse/heatmap.hpp"
#include "support.hpp"

using namespace stainfuse;
using namespace stainfuse::testing;

namespace {

bool same_graph(const ModalGraph& a, const ModalGraph& b) {
  if (a.modality != b.modality || a.neighbors != b.neighbors || a.edges != b.edges) return false;
  if (a.features.shape() != b.features.shape() || !bitwise_equal(a.features.values(), b.features.values())) return false;
  if (a.centroids.size() != b.centroids.size()) return false;
  for (std::size_t i = 0; i < a.centroids.size(); ++i)
    if (a.centroids[i] != b.centroids[i]) return false;
  return true;
}

std::vector<PairedSample> roster(const std::vector<std::pair<std::string, int>>& ids) {
  std::vector<PairedSample> out;
  for (const auto& [p, t] : ids) {
    PairedSample s;
    s.patient_id = p;
    s.timepoint = t;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("single node graph without edges round trips") {
  ModalGraph g;
  g.modality = Modality::B;
  g.neighbors = 0;
  g.features = Tensor::row({1.5, -2.25, 3e-300});
  g.centroids = {{4.0, 5.0}};
  CHECK(same_graph(decode_graph(encode_graph(g)), g));
  CHECK(same_graph(decode_graph_text(encode_graph_text(g)), g));
}

TEST_CASE("5000 node graph round trips bit-exactly") {
  Rng rng(42);
  ModalGraph g;
  g.features = random_tensor(rng, 5000, 8, -1e6, 1e6);
  g.centroids.resize(5000);
  for (auto& c : g.centroids) c = {uniform(rng, 0, 1e4), uniform(rng, 0, 1e4)};
  for (std::uint32_t v = 0; v < 5000; ++v)
    for (std::uint32_t j = 1; j <= 5; ++j) g.edges.emplace_back(v, (v + j * 7) % 5000);
  REQUIRE(g.edges.size() == 25000);
  const auto dir = scratch_dir("graph_rt");
  write_graph(g, dir / "g.mgf");
  CHECK(same_graph(read_graph(dir / "g.mgf"), g));
}

TEST_CASE("graph validation names the broken invariant") {
  Rng rng(1);
  ModalGraph g = random_graph(rng, 8, 3, 2);
  CHECK_NOTHROW(validate(g));
  SUBCASE("edge index N") {
    g.edges[0].second = 8;
    CHECK_THROWS_WITH_AS(decode_graph(encode_graph(g)), doctest::Contains("edge index out of range"), ValidationError);
  }
  SUBCASE("self loop") {
    g.edges[0].second = g.edges[0].first;
    CHECK_THROWS_WITH_AS(validate(g), doctest::Contains("self-loop"), ValidationError);
  }
  SUBCASE("out-degree") {
    g.edges.pop_back();
    CHECK_THROWS_WITH_AS(validate(g), doctest::Contains("out-degree"), ValidationError);
  }
  SUBCASE("NaN feature") {
    g.features.values()[3] = std::nan("");
    CHECK_THROWS_AS(validate(g), ValidationError);
  }
}

TEST_CASE("malformed graph bytes report an offset") {
  Rng rng(2);
  const std::string bytes = encode_graph(random_graph(rng, 10, 4, 3));
  CHECK_THROWS_AS(decode_graph("XXXX" + bytes.substr(4)), ParseError);
  try {
    decode_graph(bytes.substr(0, bytes.size() - 5));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() > 0);
  }
}

TEST_CASE("random graphs round trip through both containers") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + uniform_index(rng, 40);
    const auto k = static_cast<std::uint32_t>(1 + uniform_index(rng, std::min<std::size_t>(n - 1, 6)));
    const ModalGraph g = random_graph(rng, n, 1 + uniform_index(rng, 9), k, seed % 2 ? Modality::A : Modality::B);
    CHECK(same_graph(decode_graph(encode_graph(g)), g));
    CHECK(same_graph(decode_graph_text(encode_graph_text(g)), g));
  }
}

TEST_CASE("endpoint class counts") {
  CHECK(num_classes(Endpoint::Fibrosis) == 5);
  CHECK(num_classes(Endpoint::Ballooning) == 3);
  CHECK(num_classes(Endpoint::LobularInflammation) == 4);
  CHECK(num_classes(Endpoint::Steatosis) == 4);
  for (Endpoint e : {Endpoint::Fibrosis, Endpoint::Ballooning, Endpoint::LobularInflammation, Endpoint::Steatosis})
    CHECK(parse_endpoint(endpoint_name(e)) == e);
  CHECK_THROWS_AS(parse_endpoint("nas"), ConfigError);
}

TEST_CASE("patient split examples") {
  SUBCASE("10 patients at 0.6/0.2/0.2") {
    std::vector<std::pair<std::string, int>> ids;
    for (int i = 0; i < 10; ++i) ids.emplace_back("p" + std::to_string(i), 0);
    const auto samples = roster(ids);
    const auto s = split_by_patient(samples, {0.6, 0.2, 0.2}, 9);
    CHECK(s.train.size() == 6);
    CHECK(s.val.size() == 2);
    CHECK(s.test.size() == 2);
  }
  SUBCASE("a patient's samples stay together") {
    std::vector<std::pair<std::string, int>> ids{{"a", 0}, {"b", 0}, {"c", 0}};
    for (int t = 1; t <= 5; ++t) ids.emplace_back("multi", t);
    const auto samples = roster(ids);
    const auto s = split_by_patient(samples, {0.5, 0.25, 0.25}, 3);
    int holders = 0;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      int here = 0;
      for (const auto& id : *part) here += id.rfind("multi/", 0) == 0;
      CHECK((here == 0 || here == 5));
      holders += here == 5;
    }
    CHECK(holders == 1);
  }
  SUBCASE("determinism per seed") {
    std::vector<std::pair<std::string, int>> ids;
    for (int i = 0; i < 100; ++i) ids.emplace_back("p" + std::to_string(i), 0);
    const auto samples = roster(ids);
    const auto a = split_by_patient(samples, {0.7, 0.15, 0.15}, 5);
    const auto b = split_by_patient(samples, {0.7, 0.15, 0.15}, 5);
    const auto c = split_by_patient(samples, {0.7, 0.15, 0.15}, 6);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.train != c.train);
  }
  SUBCASE("contract errors") {
    const auto two = roster({{"a", 0}, {"b", 0}});
    CHECK_THROWS_AS(split_by_patient(two, {0.6, 0.2, 0.2}, 1), ContractError);
    const auto three = roster({{"a", 0}, {"b", 0}, {"c", 0}});
    CHECK_THROWS_AS(split_by_patient(three, {0.6, 0.3, 0.2}, 1), ContractError);
  }
}

TEST_CASE("random rosters always give patient-disjoint splits") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::vector<std::pair<std::string, int>> ids;
    const std::size_t patients = 3 + uniform_index(rng, 60);
    for (std::size_t p = 0; p < patients; ++p) {
      const std::size_t n = 1 + uniform_index(rng, 4);
      for (std::size_t t = 0; t < n; ++t) ids.emplace_back("P" + std::to_string(p), static_cast<int>(t));
    }
    const auto samples = roster(ids);
    const double a = uniform(rng, 0.2, 0.8);
    const double b = uniform(rng, 0.05, (1 - a) * 0.9);
    const auto s = split_by_patient(samples, {a, b, 1 - a - b}, seed);
    CHECK_NOTHROW(check_disjoint(s, samples));
    std::map<std::string, int> owner;
    bool disjoint = true;
    const std::array<const std::vector<std::string>*, 3> parts{&s.train, &s.val, &s.test};
    for (int k = 0; k < 3; ++k) {
      for (const auto& id : *parts[k]) {
        const std::string patient = id.substr(0, id.find('/'));
        auto [it, fresh] = owner.emplace(patient, k);
        disjoint = disjoint && (fresh || it->second == k);
      }
    }
    CHECK(disjoint);
    CHECK(s.train.size() + s.val.size() + s.test.size() == samples.size());
  }
}

TEST_CASE("split guard rejects overlaps") {
  const auto samples = roster({{"a", 0}, {"a", 1}, {"b", 0}});
  DatasetSplit s{{"a/t0"}, {"a/t1"}, {"b/t0"}};
  CHECK_THROWS_AS(check_disjoint(s, samples), ContractError);
  DatasetSplit dup{{"b/t0"}, {"b/t0"}, {}};
  CHECK_THROWS_AS(check_disjoint(dup, samples), ContractError);
}

TEST_CASE("labels round trip and validate scores") {
  std::vector<LabelRecord> rec{{"P1", 0, "r1", Endpoint::Fibrosis, 4}, {"P2", 3, "r2", Endpoint::Ballooning, 2}};
  const auto back = decode_labels(encode_labels(rec));
  REQUIRE(back.size() == 2);
  CHECK(back[1].patient_id == "P2");
  CHECK(back[1].timepoint == 3);
  CHECK(back[1].endpoint == Endpoint::Ballooning);
  CHECK(back[0].score == 4);
  CHECK_THROWS_AS(decode_labels("patient_id,timepoint,rater_id,endpoint,score\nP1,0,r1,ballooning,3\n"),
                  ValidationError);
  CHECK_THROWS_AS(decode_labels("patient_id,timepoint,rater_id,endpoint,score\nP1,0,r1\n"), ParseError);
}

TEST_CASE("heatmap container round trip") {
  Rng rng(8);
  Heatmap hm(7, 5, 3);
  for (double& v : hm.logits.values()) v = static_cast<float>(uniform(rng, -4, 4));
  for (auto& u : hm.usable) u = uniform01(rng) < 0.7;
  const Heatmap back = decode_heatmap(encode_heatmap(hm));
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(bitwise_equal(back.logits.values(), hm.logits.values()));
  CHECK(back.usable == hm.usable);
  CHECK_THROWS_AS(decode_heatmap(encode_heatmap(hm).substr(0, 40)), ParseError);
}
