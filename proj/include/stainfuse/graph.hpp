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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stainfuse/tensor.hpp"

namespace stainfuse {

/// ModalityA plays the H&E role (13 heatmap classes), ModalityB the trichrome role (5 classes).
enum class Modality : std::uint8_t { A = 0, B = 1 };

enum class Endpoint { Fibrosis, Ballooning, LobularInflammation, Steatosis };

std::string_view modality_name(Modality m);
std::string_view endpoint_name(Endpoint e);
Endpoint parse_endpoint(std::string_view name);
/// Ordinal classes per endpoint: scores live in [0, num_classes - 1].
int num_classes(Endpoint e);

struct ModalGraph {
  Modality modality = Modality::A;
  Tensor features;                              // N x d
  std::vector<Edge> edges;                      // directed (src, dst)
  std::vector<std::array<double, 2>> centroids;  // pixel units
  std::uint32_t neighbors = 5;                   // construction out-degree

  std::size_t num_nodes() const { return centroids.size(); }
  std::size_t feature_dim() const { return features.cols(); }
};

/// Throws ValidationError naming the first violated invariant.
void validate(const ModalGraph& g);

/// Bit-exact container: "MGF1", version, modality, N, d, k, features, centroids, E, edges.
std::string encode_graph(const ModalGraph& g);
ModalGraph decode_graph(std::string_view bytes);
void write_graph(const ModalGraph& g, const std::filesystem::path& path);
ModalGraph read_graph(const std::filesystem::path& path);

/// Line-oriented equivalent of the binary container for small fixtures.
std::string encode_graph_text(const ModalGraph& g);
ModalGraph decode_graph_text(std::string_view text);

struct RaterLabel {
  std::string rater_id;
  Endpoint endpoint = Endpoint::Fibrosis;
  int score = 0;
};

struct PairedSample {
  std::string patient_id;
  int timepoint = 0;
  ModalGraph graph_a;
  ModalGraph graph_b;
  std::vector<RaterLabel> labels;

  std::string id() const;
  std::vector<int> scores(Endpoint e) const;
};

std::string sample_id(std::string_view patient_id, int timepoint);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Partition patients (not samples) into train/val/test. Deterministic per seed.
DatasetSplit split_by_patient(std::span<const PairedSample> samples, std::array<double, 3> fractions,
                              std::uint64_t seed);

/// Throws ContractError when sample ids or their patients appear in two splits.
void check_disjoint(const DatasetSplit& split, std::span<const PairedSample> samples);

struct LabelRecord {
  std::string patient_id;
  int timepoint = 0;
  std::string rater_id;
  Endpoint endpoint = Endpoint::Fibrosis;
  int score = 0;
};

/// Delimited label file: patient_id,timepoint,rater_id,endpoint,score with a header line.
std::string encode_labels(std::span<const LabelRecord> records);
std::vector<LabelRecord> decode_labels(std::string_view text);
void write_labels(std::span<const LabelRecord> records, const std::filesystem::path& path);
std::vector<LabelRecord> read_labels(const std::filesystem::path& path);

}  // namespace stainfuse
