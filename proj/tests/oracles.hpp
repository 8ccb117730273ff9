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

// Scalar-loop reference implementations of the layer and fusion formulas,
// written without the tensor library so they can check it.

#include <cmath>
#include <utility>
#include <vector>

#include "stainfuse/fusion.hpp"
#include "stainfuse/gnn.hpp"

namespace stainfuse::oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

inline std::vector<double> flat(const Mat& m) {
  std::vector<double> out;
  for (const auto& r : m) out.insert(out.end(), r.begin(), r.end());
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

/// x (1 x n) times W (n x m).
inline std::vector<double> vecmat(const std::vector<double>& x, const Tensor& w) {
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j)
    for (std::size_t i = 0; i < x.size(); ++i) out[j] += x[i] * w(i, j);
  return out;
}

/// Neighbour aggregation followed by the combine step, one output scalar at a time.
inline Mat graph_conv(const Mat& h, const std::vector<Edge>& edges, const GraphConvParams& p, bool activate) {
  const std::size_t dout = p.bias.cols();
  Mat out(h.size(), std::vector<double>(dout));
  for (std::size_t v = 0; v < h.size(); ++v) {
    std::vector<double> agg(h[v].size(), 0.0);
    for (const auto& [src, dst] : edges)
      if (dst == v)
        for (std::size_t i = 0; i < agg.size(); ++i) agg[i] += h[src][i];
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = p.bias(0, o);
      for (std::size_t i = 0; i < agg.size(); ++i) acc += h[v][i] * p.w_self(i, o) + agg[i] * p.w_neigh(i, o);
      out[v][o] = activate ? relu(acc) : acc;
    }
  }
  return out;
}

inline std::vector<double> mean(const Mat& h) {
  std::vector<double> out(h.at(0).size(), 0.0);
  for (const auto& r : h)
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  for (double& v : out) v /= static_cast<double>(h.size());
  return out;
}

inline std::vector<double> add(const std::vector<double>& h, const std::vector<double>& t, const Tensor& wh,
                               const Tensor& wt) {
  auto a = vecmat(h, wh);
  const auto b = vecmat(t, wt);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline std::vector<double> hadamard(const std::vector<double>& h, const std::vector<double>& t, const Tensor& wh,
                                    const Tensor& wt) {
  auto a = vecmat(h, wh);
  const auto b = vecmat(t, wt);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  return a;
}

/// Linear-gated projections followed by the outer product with appended ones.
inline std::vector<double> kronecker(const std::vector<double>& h, const std::vector<double>& t,
                                     const KroneckerParams& p) {
  std::vector<double> ht = h;
  ht.insert(ht.end(), t.begin(), t.end());
  const auto gh = vecmat(ht, p.gate_h), gt = vecmat(ht, p.gate_t);
  const auto ph = vecmat(h, p.w_h), pt = vecmat(t, p.w_t);
  std::vector<double> hp(ph.size() + 1, 1.0), tp(pt.size() + 1, 1.0);
  for (std::size_t i = 0; i < ph.size(); ++i) hp[i] = sigmoid(gh[i]) * relu(ph[i]);
  for (std::size_t i = 0; i < pt.size(); ++i) tp[i] = sigmoid(gt[i]) * relu(pt[i]);
  std::vector<double> z;
  for (double a : hp)
    for (double b : tp) z.push_back(a * b);
  return z;
}

inline std::vector<double> attention_pool(const Mat& h, const AttentionPoolParams& p) {
  std::vector<double> acc(h.at(0).size(), 0.0);
  for (const auto& row : h) {
    const double gate = sigmoid(vecmat(row, p.gate_w)[0] + p.gate_b(0, 0));
    auto proj = vecmat(row, p.proj_w);
    for (std::size_t j = 0; j < proj.size(); ++j) acc[j] += gate * relu(proj[j] + p.proj_b(0, j));
  }
  for (double& v : acc) v = std::tanh(v);
  return acc;
}

/// Broadcast the ReLU-projected summary of each graph onto every node of the other.
inline std::pair<Mat, Mat> inject(Mat h, Mat t, const std::vector<double>& hs, const std::vector<double>& ts,
                                  const CrossParams& c) {
  const auto to_h = vecmat(ts, c.w_th), to_t = vecmat(hs, c.w_ht);
  for (auto& r : h)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += relu(to_h[j]);
  for (auto& r : t)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += relu(to_t[j]);
  return {std::move(h), std::move(t)};
}

inline std::pair<Mat, Mat> gimp(const Mat& h, const Mat& t, const CrossParams& c) {
  return inject(h, t, mean(h), mean(t), c);
}

inline std::pair<Mat, Mat> gaimp(const Mat& h, const Mat& t, const CrossParams& c, const AttentionPoolParams& ah,
                                 const AttentionPoolParams& at) {
  return inject(h, t, attention_pool(h, ah), attention_pool(t, at), c);
}

/// Linearly weighted kappa from the full K x K confusion matrix, in counts.
inline double weighted_kappa(const std::vector<int>& a, const std::vector<int>& b, int k) {
  const auto K = static_cast<std::size_t>(k);
  std::vector<std::vector<double>> conf(K, std::vector<double>(K, 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) conf[static_cast<std::size_t>(a[i])][static_cast<std::size_t>(b[i])] += 1;
  std::vector<double> ra(K, 0.0), cb(K, 0.0);
  double n = 0;
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) ra[i] += conf[i][j], cb[j] += conf[i][j], n += conf[i][j];
  double disagree_obs = 0, disagree_exp = 0;
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      const double d = std::abs(static_cast<double>(i) - static_cast<double>(j)) / static_cast<double>(K - 1);
      disagree_obs += d * conf[i][j] / n;
      disagree_exp += d * ra[i] * cb[j] / (n * n);
    }
  }
  return 1.0 - disagree_obs / disagree_exp;
}

}  // namespace stainfuse::oracle
