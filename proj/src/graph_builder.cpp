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

#include "stainfuse/graph_builder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stainfuse/errors.hpp"
#include "stainfuse/rng.hpp"

namespace stainfuse {

PixelSet sample_pixels(const Heatmap& hm, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> usable;
  usable.reserve(hm.usable.size());
  for (std::size_t i = 0; i < hm.usable.size(); ++i)
    if (hm.usable[i] != 0) usable.push_back(i);
  if (usable.empty()) throw EmptyTissueError("heatmap has no usable tissue pixels");

  std::size_t take = std::min(n, usable.size());
  if (take < usable.size()) {
    // Partial Fisher-Yates: the first `take` slots become the sample.
    Rng rng(derive_seed(seed, 0x9a11e5));
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + uniform_index(rng, usable.size() - i);
      std::swap(usable[i], usable[j]);
    }
    usable.resize(take);
    std::sort(usable.begin(), usable.end());
  }

  PixelSet out;
  out.x.reserve(take);
  out.y.reserve(take);
  out.logits = Tensor({take, hm.classes}, 0.0);
  auto dst = out.logits.values();
  const auto src = hm.logits.values();
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t p = usable[i];
    out.x.push_back(static_cast<std::uint32_t>(p % hm.width));
    out.y.push_back(static_cast<std::uint32_t>(p / hm.width));
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(p * hm.classes), hm.classes,
                dst.begin() + static_cast<std::ptrdiff_t>(i * hm.classes));
  }
  return out;
}

Tensor clustering_points(const PixelSet& pixels, std::uint32_t width, std::uint32_t height, double spatial_weight) {
  const std::size_t n = pixels.size();
  const std::size_t c = pixels.logits.cols();
  Tensor out({n, c + 2}, 0.0);
  const double sx = width > 1 ? 1.0 / static_cast<double>(width - 1) : 0.0;
  const double sy = height > 1 ? 1.0 / static_cast<double>(height - 1) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out(i, 0) = spatial_weight * pixels.x[i] * sx;
    out(i, 1) = spatial_weight * pixels.y[i] * sy;
    for (std::size_t j = 0; j < c; ++j) out(i, j + 2) = pixels.logits(i, j);
  }
  return out;
}

std::size_t node_feature_dim(std::size_t classes, bool extra_features) {
  return 7 + (extra_features ? 5 : 2) * classes;
}

HullMeasure convex_hull_measure(std::vector<std::array<std::int64_t, 2>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 2) return {};
  auto cross = [](const auto& o, const auto& a, const auto& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  // Andrew's monotone chain; collinear points are dropped.
  std::vector<std::array<std::int64_t, 2>> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  HullMeasure m;
  std::int64_t twice_area = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    m.perimeter += std::hypot(static_cast<double>(b[0] - a[0]), static_cast<double>(b[1] - a[1]));
    twice_area += a[0] * b[1] - b[0] * a[1];
  }
  m.area = std::abs(static_cast<double>(twice_area)) / 2.0;
  return m;
}

Tensor extract_node_features(const ClusterSet& clusters, const PixelSet& pixels, bool extra_features) {
  const std::size_t k = clusters.count();
  const std::size_t c = pixels.logits.cols();
  const std::size_t d = node_feature_dim(c, extra_features);
  if (clusters.assignment.size() != pixels.size()) {
    throw ContractError("extract_node_features: assignment covers " + std::to_string(clusters.assignment.size()) +
                        " pixels, expected " + std::to_string(pixels.size()));
  }
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < pixels.size(); ++i) members[clusters.assignment[i]].push_back(i);

  Tensor out({k, d}, 0.0);
  for (std::size_t cl = 0; cl < k; ++cl) {
    const auto& idx = members[cl];
    if (idx.empty()) throw ContractError("extract_node_features: cluster " + std::to_string(cl) + " is empty");
    const double count = static_cast<double>(idx.size());
    double mx = 0.0, my = 0.0;
    for (auto i : idx) {
      mx += pixels.x[i];
      my += pixels.y[i];
    }
    mx /= count;
    my /= count;
    double vx = 0.0, vy = 0.0;
    for (auto i : idx) {
      vx += (pixels.x[i] - mx) * (pixels.x[i] - mx);
      vy += (pixels.y[i] - my) * (pixels.y[i] - my);
    }
    std::vector<std::array<std::int64_t, 2>> pts;
    pts.reserve(idx.size());
    for (auto i : idx) pts.push_back({pixels.x[i], pixels.y[i]});
    const HullMeasure hull = convex_hull_measure(std::move(pts));

    out(cl, 0) = mx;
    out(cl, 1) = my;
    out(cl, 2) = std::sqrt(vx / count);
    out(cl, 3) = std::sqrt(vy / count);
    out(cl, 4) = count;
    out(cl, 5) = hull.perimeter;
    out(cl, 6) = hull.area > 0.0 ? std::min(1.0, count / hull.area) : 1.0;

    for (std::size_t j = 0; j < c; ++j) {
      double mean = 0.0;
      for (auto i : idx) mean += pixels.logits(i, j);
      mean /= count;
      double var = 0.0;
      for (auto i : idx) var += (pixels.logits(i, j) - mean) * (pixels.logits(i, j) - mean);
      out(cl, 7 + j) = mean;
      out(cl, 7 + c + j) = std::sqrt(var / count);
    }
    if (extra_features) {
      std::vector<double> fraction(c, 0.0);
      for (std::size_t j = 0; j < c; ++j) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (auto i : idx) {
          lo = std::min(lo, pixels.logits(i, j));
          hi = std::max(hi, pixels.logits(i, j));
        }
        out(cl, 7 + 2 * c + j) = lo;
        out(cl, 7 + 3 * c + j) = hi;
      }
      for (auto i : idx) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
          if (pixels.logits(i, j) > pixels.logits(i, best)) best = j;
        fraction[best] += 1.0 / count;
      }
      for (std::size_t j = 0; j < c; ++j) out(cl, 7 + 4 * c + j) = fraction[j];
    }
  }
  return out;
}

std::vector<Edge> knn_edges(std::span<const std::array<double, 2>> centroids, std::size_t k) {
  const std::size_t n = centroids.size();
  if (n <= k) {
    throw ContractError("knn_edges: need more than k = " + std::to_string(k) + " nodes, got " + std::to_string(n));
  }
  std::vector<Edge> edges;
  edges.reserve(n * k);
  std::vector<std::pair<double, std::uint32_t>> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = centroids[i][0] - centroids[j][0];
      const double dy = centroids[i][1] - centroids[j][1];
      cand[c++] = {dx * dx + dy * dy, static_cast<std::uint32_t>(j)};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) edges.emplace_back(static_cast<std::uint32_t>(i), cand[r].second);
  }
  return edges;
}

ModalGraph build_graph(const Heatmap& hm, Modality modality, const GraphBuildConfig& config) {
  validate(hm);
  PixelSet pixels = sample_pixels(hm, std::max(config.sample_pixels, config.target_clusters), config.seed);
  const Tensor points = clustering_points(pixels, hm.width, hm.height, config.spatial_weight);
  BirchOptions options;
  options.target_clusters = config.target_clusters;
  options.threshold = config.birch_threshold;
  options.branching = config.birch_branching;
  const ClusterSet clusters = birch_cluster(points, options);

  ModalGraph g;
  g.modality = modality;
  g.neighbors = config.neighbors;
  g.features = extract_node_features(clusters, pixels, config.extra_features);
  g.centroids.resize(clusters.count());
  for (std::size_t i = 0; i < clusters.count(); ++i) g.centroids[i] = {g.features(i, 0), g.features(i, 1)};
  g.edges = knn_edges(g.centroids, config.neighbors);
  validate(g);
  return g;
}

}  // namespace stainfuse
