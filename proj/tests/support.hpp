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

// Shared fixtures for the test executables.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "stainfuse/graph.hpp"
#include "stainfuse/graph_builder.hpp"
#include "stainfuse/rng.hpp"
#include "stainfuse/tensor.hpp"

namespace stainfuse::testing {

inline Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

/// Random graph with kNN edges over random centroids.
inline ModalGraph random_graph(Rng& rng, std::size_t n, std::size_t d, std::uint32_t k = 5, Modality m = Modality::A) {
  ModalGraph g;
  g.modality = m;
  g.neighbors = k;
  g.features = random_tensor(rng, n, d);
  g.centroids.resize(n);
  for (auto& c : g.centroids) c = {uniform(rng, 0.0, 100.0), uniform(rng, 0.0, 100.0)};
  g.edges = knn_edges(g.centroids, k);
  return g;
}

/// Paired sample with graphs of different sizes and one label per rater.
inline PairedSample random_pair(Rng& rng, std::size_t n_a, std::size_t n_b, std::size_t d_a, std::size_t d_b,
                                const std::vector<std::string>& raters = {"r1"}, int score = 0) {
  PairedSample s;
  s.patient_id = "P" + std::to_string(rng() % 100000);
  s.graph_a = random_graph(rng, n_a, d_a, 3, Modality::A);
  s.graph_b = random_graph(rng, n_b, d_b, 3, Modality::B);
  for (const auto& r : raters) s.labels.push_back({r, Endpoint::Fibrosis, score});
  return s;
}

/// Norm-based relative error ||a - n|| / (||a|| + ||n||) between the tape
/// gradient and central differences of `f`, worst over `inputs`.
inline double grad_check(std::vector<Tensor> inputs, const std::function<Tensor(Tape&)>& f, double h = 1e-6) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    const Tensor loss = f(tape);
    backward(tape, loss);
  }
  auto eval = [&] {
    Tape tape;
    tape.set_recording(false);
    return f(tape).item();
  };
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic = t.grad();
    auto v = t.values();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double old = v[i];
      v[i] = old + h;
      const double fp = eval();
      v[i] = old - h;
      const double fm = eval();
      v[i] = old;
      const double numeric = (fp - fm) / (2 * h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      na += analytic[i] * analytic[i];
      nn += numeric * numeric;
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    if (denom > 1e-12) worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

/// Contract a tensor with fixed random weights so every entry matters.
inline Tensor probe(Tape& tape, const Tensor& x, const Tensor& weights) { return sum(tape, mul(tape, x, weights)); }

/// Fresh empty directory under TMPDIR.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("stainfuse_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace stainfuse::testing
