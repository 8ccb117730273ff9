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

// BIRCH clustering: a CF-tree of clustering features (n, LS, SS) built by
// radius-threshold insertion, followed by a global agglomerative phase that
// merges the leaf subclusters with centroid linkage.

#include <cstddef>
#include <vector>

#include "stainfuse/tensor.hpp"

namespace stainfuse {

struct BirchOptions {
  std::size_t target_clusters = 5000;
  double threshold = 0.5;     // max subcluster radius during insertion
  std::size_t branching = 50;  // max entries per tree node
};

/// Additive clustering feature of a point set.
struct ClusteringFeature {
  double n = 0.0;
  std::vector<double> linear_sum;
  double square_sum = 0.0;

  explicit ClusteringFeature(std::size_t dim = 0) : linear_sum(dim, 0.0) {}
  void add_point(std::span<const double> x);
  void merge(const ClusteringFeature& other);
  std::vector<double> centroid() const;
  /// Root-mean-square distance of members from the centroid.
  double radius() const;
};

struct ClusterSet {
  std::vector<std::size_t> assignment;  // point -> cluster id
  std::vector<std::vector<double>> centroids;
  std::vector<ClusteringFeature> features;  // per final cluster
  std::size_t subclusters = 0;             // leaf entries before the global phase
  double max_subcluster_radius = 0.0;

  std::size_t count() const { return centroids.size(); }
};

/// Cluster the rows of `points` (N x D). Cluster ids are numbered in order of
/// first appearance over the points.
ClusterSet birch_cluster(const Tensor& points, const BirchOptions& options);

}  // namespace stainfuse
