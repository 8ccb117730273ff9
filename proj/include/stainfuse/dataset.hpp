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

// On-disk dataset layout:
//   heatmaps/<patient>__t<timepoint>__{A,B}.hmp
//   graphs/<patient>__t<timepoint>__{A,B}.mgf
//   labels.csv, truth.csv, manifest.tsv

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stainfuse/graph.hpp"

namespace stainfuse {

std::string sha256_hex(std::string_view bytes);

struct ManifestEntry {
  std::string path;  // relative to the dataset root, '/' separated
  std::uint64_t size = 0;
  std::string sha256;
};

/// Every regular file under `root` except `exclude`, sorted by path.
std::vector<ManifestEntry> build_manifest(const std::filesystem::path& root, std::string_view exclude = "manifest.tsv");
/// sha256 <TAB> size <TAB> path lines.
std::string encode_manifest(std::span<const ManifestEntry> entries);

/// "<patient>__t<timepoint>__<A|B>"
std::string artifact_stem(std::string_view patient_id, int timepoint, Modality m);

struct ArtifactName {
  std::string patient_id;
  int timepoint = 0;
  Modality modality = Modality::A;
};
/// Parses a stem produced by artifact_stem; throws ParseError otherwise.
ArtifactName parse_artifact_stem(std::string_view stem);

/// Seed used to build the graph of one heatmap, so generate and build-graphs agree.
std::uint64_t graph_seed(std::uint64_t master, std::string_view stem);

/// Pair graphs/<stem>.mgf files and attach labels.csv. Samples are sorted by id.
/// Throws ValidationError when a sample lacks one modality.
std::vector<PairedSample> load_dataset(const std::filesystem::path& root);

}  // namespace stainfuse
