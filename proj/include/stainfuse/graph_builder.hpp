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

// Heatmap -> ModalGraph: sample usable pixels, BIRCH-cluster them on
// (scaled coordinates, logits), describe each cluster, wire kNN edges.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "stainfuse/birch.hpp"
#include "stainfuse/graph.hpp"
#include "stainfuse/heatmap.hpp"

namespace stainfuse {

struct PixelSet {
  std::vector<std::uint32_t> x;
  std::vector<std::uint32_t> y;
  Tensor logits;  // n x C

  std::size_t size() const { return x.size(); }
};

struct GraphBuildConfig {
  std::size_t sample_pixels = 20000;
  std::size_t target_clusters = 5000;
  std::uint32_t neighbors = 5;
  double birch_threshold = 0.5;
  std::size_t birch_branching = 50;
  double spatial_weight = 1.0;  // scale of the [0,1] coordinate block relative to logits
  bool extra_features = false;  // append per-class logit min/max and class-fraction blocks
  std::uint64_t seed = 0;
};

/// Uniform sample of usable pixels without replacement; all of them when fewer than n.
PixelSet sample_pixels(const Heatmap& hm, std::size_t n, std::uint64_t seed);

/// Clustering space rows: [x / (W-1), y / (H-1)] * spatial_weight followed by the logits.
Tensor clustering_points(const PixelSet& pixels, std::uint32_t width, std::uint32_t height, double spatial_weight);

/// Node feature width for C classes: 7 + 2C, or 7 + 5C with the extra blocks.
std::size_t node_feature_dim(std::size_t classes, bool extra_features);

/// One row per cluster:
///   mean_x, mean_y, std_x, std_y,
///   area (pixel count), hull perimeter, convexity (area / hull area, clamped to 1),
///   per-class logit means (C), per-class logit stds (C),
///   [extra] per-class logit min (C), max (C), argmax-class fractions (C).
/// Coordinates are pixel centres; hull quantities use the convex hull of member pixels.
Tensor extract_node_features(const ClusterSet& clusters, const PixelSet& pixels, bool extra_features = false);

/// Perimeter and area of the convex hull of integer points (degenerate hulls have area 0).
struct HullMeasure {
  double perimeter = 0.0;
  double area = 0.0;
};
HullMeasure convex_hull_measure(std::vector<std::array<std::int64_t, 2>> points);

/// k directed edges from every node to its k nearest other nodes (ties -> lower index).
std::vector<Edge> knn_edges(std::span<const std::array<double, 2>> centroids, std::size_t k);

ModalGraph build_graph(const Heatmap& hm, Modality modality, const GraphBuildConfig& config);

}  // namespace stainfuse
