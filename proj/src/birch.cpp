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

#include "stainfuse/birch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>

#include "stainfuse/errors.hpp"

namespace stainfuse {

void ClusteringFeature::add_point(std::span<const double> x) {
  n += 1.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    linear_sum[j] += x[j];
    square_sum += x[j] * x[j];
  }
}

void ClusteringFeature::merge(const ClusteringFeature& other) {
  n += other.n;
  for (std::size_t j = 0; j < linear_sum.size(); ++j) linear_sum[j] += other.linear_sum[j];
  square_sum += other.square_sum;
}

std::vector<double> ClusteringFeature::centroid() const {
  std::vector<double> c(linear_sum.size());
  for (std::size_t j = 0; j < c.size(); ++j) c[j] = linear_sum[j] / n;
  return c;
}

double ClusteringFeature::radius() const {
  double centroid_sq = 0.0;
  for (double v : linear_sum) centroid_sq += (v / n) * (v / n);
  return std::sqrt(std::max(0.0, square_sum / n - centroid_sq));
}

namespace {

double centroid_distance_sq(const ClusteringFeature& a, const ClusteringFeature& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.linear_sum.size(); ++j) {
    const double t = a.linear_sum[j] / a.n - b.linear_sum[j] / b.n;
    d += t * t;
  }
  return d;
}

double point_distance_sq(const ClusteringFeature& a, std::span<const double> x) {
  double d = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double t = a.linear_sum[j] / a.n - x[j];
    d += t * t;
  }
  return d;
}

class CfTree {
 public:
  CfTree(std::size_t dim, double threshold, std::size_t branching)
      : dim_(dim), threshold_(threshold), branching_(branching) {
    nodes_.push_back(Node{true, {}});
  }

  /// Inserts x and returns the id of the leaf subcluster that absorbed it.
  std::size_t insert(std::span<const double> x) {
    std::size_t subcluster = 0;
    auto split = insert_into(root_, x, subcluster);
    if (split) {
      Node root{false, {}};
      root.entries.push_back(entry_for(split->first));
      root.entries.push_back(entry_for(split->second));
      nodes_.push_back(std::move(root));
      root_ = nodes_.size() - 1;
    }
    return subcluster;
  }

  const std::vector<ClusteringFeature>& subclusters() const { return subclusters_; }

 private:
  struct Entry {
    ClusteringFeature cf;
    std::size_t child = 0;       // node index (internal entries)
    std::size_t subcluster = 0;  // subcluster id (leaf entries)
  };
  struct Node {
    bool leaf;
    std::vector<Entry> entries;
  };

  Entry entry_for(std::size_t node) const {
    Entry e{ClusteringFeature(dim_), node, 0};
    for (const auto& child : nodes_[node].entries) e.cf.merge(child.cf);
    return e;
  }

  std::size_t closest_entry(const Node& node, std::span<const double> x) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < node.entries.size(); ++i) {
      const double d = point_distance_sq(node.entries[i].cf, x);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  std::optional<std::pair<std::size_t, std::size_t>> insert_into(std::size_t node_index, std::span<const double> x,
                                                                 std::size_t& subcluster) {
    if (nodes_[node_index].leaf) {
      Node& node = nodes_[node_index];
      if (!node.entries.empty()) {
        const std::size_t i = closest_entry(node, x);
        ClusteringFeature trial = node.entries[i].cf;
        trial.add_point(x);
        if (trial.radius() <= threshold_) {
          node.entries[i].cf = trial;
          subcluster = node.entries[i].subcluster;
          subclusters_[subcluster] = trial;
          return std::nullopt;
        }
      }
      ClusteringFeature cf(dim_);
      cf.add_point(x);
      subcluster = subclusters_.size();
      subclusters_.push_back(cf);
      node.entries.push_back(Entry{std::move(cf), 0, subcluster});
    } else {
      const std::size_t i = closest_entry(nodes_[node_index], x);
      const std::size_t child = nodes_[node_index].entries[i].child;
      auto split = insert_into(child, x, subcluster);
      Node& node = nodes_[node_index];
      if (split) {
        node.entries[i] = entry_for(split->first);
        node.entries.push_back(entry_for(split->second));
      } else {
        node.entries[i].cf.add_point(x);
      }
    }
    if (nodes_[node_index].entries.size() > branching_) return split_node(node_index);
    return std::nullopt;
  }

  // Farthest pair of entries seeds the two halves; the rest go to the closer seed.
  std::pair<std::size_t, std::size_t> split_node(std::size_t node_index) {
    std::vector<Entry> entries = std::move(nodes_[node_index].entries);
    const bool leaf = nodes_[node_index].leaf;
    std::size_t s1 = 0, s2 = 1;
    double far = -1.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      for (std::size_t j = i + 1; j < entries.size(); ++j) {
        const double d = centroid_distance_sq(entries[i].cf, entries[j].cf);
        if (d > far) {
          far = d;
          s1 = i;
          s2 = j;
        }
      }
    }
    const ClusteringFeature seed1 = entries[s1].cf, seed2 = entries[s2].cf;
    Node first{leaf, {}};
    Node second{leaf, {}};
    for (std::size_t i = 0; i < entries.size(); ++i) {
      bool to_first = i == s1;
      if (i != s1 && i != s2) {
        to_first = centroid_distance_sq(entries[i].cf, seed1) <= centroid_distance_sq(entries[i].cf, seed2);
      }
      (to_first ? first : second).entries.push_back(std::move(entries[i]));
    }
    nodes_[node_index] = std::move(first);
    nodes_.push_back(std::move(second));
    return {node_index, nodes_.size() - 1};
  }

  std::size_t dim_;
  double threshold_;
  std::size_t branching_;
  std::vector<Node> nodes_;
  std::size_t root_ = 0;
  std::vector<ClusteringFeature> subclusters_;
};

// Centroid-linkage agglomeration with per-cluster nearest-neighbour caching.
std::vector<std::size_t> agglomerate(std::vector<ClusteringFeature>& clusters, std::size_t target) {
  const std::size_t m = clusters.size();
  const std::size_t dim = m ? clusters[0].linear_sum.size() : 0;
  std::vector<std::size_t> parent(m);
  for (std::size_t i = 0; i < m; ++i) parent[i] = i;
  std::vector<std::size_t> nn(m, 0);
  std::vector<double> nn_dist(m, std::numeric_limits<double>::infinity());
  std::vector<double> cent(m * dim);
  auto set_centroid = [&](std::size_t i) {
    for (std::size_t j = 0; j < dim; ++j) cent[i * dim + j] = clusters[i].linear_sum[j] / clusters[i].n;
  };
  for (std::size_t i = 0; i < m; ++i) set_centroid(i);
  auto dist = [&](std::size_t a, std::size_t b) {
    const double* x = &cent[a * dim];
    const double* y = &cent[b * dim];
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) d += (x[j] - y[j]) * (x[j] - y[j]);
    return d;
  };

  std::vector<std::size_t> live(m);
  std::iota(live.begin(), live.end(), std::size_t{0});
  auto refresh = [&](std::size_t i) {
    nn_dist[i] = std::numeric_limits<double>::infinity();
    for (std::size_t j : live) {
      if (j == i) continue;
      const double d = dist(i, j);
      if (d < nn_dist[i]) {
        nn_dist[i] = d;
        nn[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i < m; ++i) refresh(i);

  while (live.size() > target) {
    std::size_t a = live[0];
    for (std::size_t i : live)
      if (nn_dist[i] < nn_dist[a]) a = i;
    const std::size_t b = nn[a];
    const std::size_t keep = std::min(a, b), drop = std::max(a, b);
    clusters[keep].merge(clusters[drop]);
    set_centroid(keep);
    parent[drop] = keep;
    live.erase(std::lower_bound(live.begin(), live.end(), drop));
    for (std::size_t i : live) {
      if (i == keep) continue;
      const double d = dist(i, keep);
      if (nn[i] == keep || nn[i] == drop) {
        // Every other distance is at least the old nearest one.
        if (d < nn_dist[i] || (d == nn_dist[i] && keep <= nn[i])) {
          nn_dist[i] = d;
          nn[i] = keep;
        } else {
          refresh(i);
        }
      } else if (d < nn_dist[i] || (d == nn_dist[i] && keep < nn[i])) {
        nn_dist[i] = d;
        nn[i] = keep;
      }
    }
    refresh(keep);
  }
  // Resolve each subcluster to its surviving representative.
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t r = i;
    while (parent[r] != r) r = parent[r];
    parent[i] = r;
  }
  return parent;
}

}  // namespace

ClusterSet birch_cluster(const Tensor& points, const BirchOptions& options) {
  if (points.rank() != 2 || points.rows() == 0) throw ContractError("birch_cluster: no points to cluster");
  if (!(options.threshold > 0.0)) throw ContractError("birch_cluster: threshold must be positive");
  if (options.branching < 2) throw ContractError("birch_cluster: branching factor must be at least 2");
  if (options.target_clusters < 1) throw ContractError("birch_cluster: target cluster count must be positive");

  const std::size_t n = points.rows(), dim = points.cols();
  const auto data = points.values();
  CfTree tree(dim, options.threshold, options.branching);
  std::vector<std::size_t> leaf_of(n);
  for (std::size_t i = 0; i < n; ++i) leaf_of[i] = tree.insert(data.subspan(i * dim, dim));

  std::vector<ClusteringFeature> merged = tree.subclusters();
  ClusterSet out;
  out.subclusters = merged.size();
  for (const auto& cf : merged) out.max_subcluster_radius = std::max(out.max_subcluster_radius, cf.radius());

  const auto representative = agglomerate(merged, options.target_clusters);
  std::vector<std::size_t> label(merged.size(), std::numeric_limits<std::size_t>::max());
  out.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rep = representative[leaf_of[i]];
    if (label[rep] == std::numeric_limits<std::size_t>::max()) {
      label[rep] = out.centroids.size();
      out.centroids.push_back(merged[rep].centroid());
      out.features.push_back(merged[rep]);
    }
    out.assignment[i] = label[rep];
  }
  return out;
}

}  // namespace stainfuse
