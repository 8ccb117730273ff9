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

// Synthetic paired heatmaps with a planted ordinal signal.
//
// Each sample draws u_a, u_b ~ U(0, 1) and a latent u = w_a u_a + w_b u_b +
// w_ab u_a u_b. The true label discretizes u at quantile thresholds matching a
// class-balance profile. Modality m renders u_m into the signal class of its
// heatmap: a tissue-wide logit offset plus blobs (a) or ribbons (b) whose
// number grows with u_m. Rater r reports discretize(u + unit * (b_r + noise * z)),
// with unit the mean gap between thresholds.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stainfuse/config.hpp"
#include "stainfuse/graph.hpp"
#include "stainfuse/graph_builder.hpp"
#include "stainfuse/heatmap.hpp"

namespace stainfuse {

struct PlantedRater {
  std::string id;
  double bias = 0.0;  // threshold units
};

struct GeneratorConfig {
  std::size_t patients = 60;
  std::size_t samples_per_patient = 1;
  std::uint32_t width = 256;
  std::uint32_t height = 256;
  std::uint32_t classes_a = 13;
  std::uint32_t classes_b = 5;
  Endpoint endpoint = Endpoint::Fibrosis;
  double w_a = 0.3;
  double w_b = 0.3;
  double w_ab = 0.4;
  std::vector<double> profile;  // target class proportions, size K
  std::vector<PlantedRater> raters;
  double noise = 0.3;
  double signal_gain = 2.0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  static GeneratorConfig from_config(const Config& cfg);
};

/// Class proportions of a named profile for K classes ("fibrosis_dev" needs K = 5).
std::vector<double> profile_proportions(const std::string& name, int classes);
/// "r1:0.8,r2:-0.8" -> raters; throws ConfigError.
std::vector<PlantedRater> parse_raters(const std::string& list);

struct LatentModel {
  std::vector<double> thresholds;  // K - 1 cut points on u
  double unit = 1.0;               // mean threshold gap

  int discretize(double v) const;
};

/// Monte Carlo quantiles of u at the cumulative profile, with a fixed internal seed.
LatentModel fit_latent_model(const GeneratorConfig& cfg);

struct SampleTruth {
  double u_a = 0.0;
  double u_b = 0.0;
  double u = 0.0;
  int label = 0;
};

/// Latent draw and rater labels only, no rendering.
SampleTruth draw_truth(const GeneratorConfig& cfg, const LatentModel& lm, Rng& rng);
std::vector<RaterLabel> draw_rater_labels(const GeneratorConfig& cfg, const LatentModel& lm, const SampleTruth& t,
                                          Rng& rng);

/// Render the heatmap of one modality whose signal class encodes `component`.
Heatmap render_heatmap(const GeneratorConfig& cfg, Modality m, double component, Rng& rng);

struct GeneratedSample {
  std::string patient_id;
  int timepoint = 0;
  Heatmap a, b;
  SampleTruth truth;
  std::vector<RaterLabel> labels;
};

std::string patient_name(std::size_t index);

/// Deterministic in (cfg, lm, patient, timepoint, seed).
GeneratedSample generate_sample(const GeneratorConfig& cfg, const LatentModel& lm, std::size_t patient, int timepoint,
                                std::uint64_t seed);

struct DatasetSummary {
  std::size_t samples = 0;
  std::size_t patients = 0;
  std::size_t files = 0;  // manifest entries
};

/// Writes heatmaps, optionally graphs, labels.csv, truth.csv and manifest.tsv under `root`.
DatasetSummary generate_dataset(const GeneratorConfig& cfg, const GraphBuildConfig& graph_cfg,
                                const std::filesystem::path& root, std::uint64_t seed, std::size_t jobs,
                                bool emit_graphs);

/// In-memory variant returning paired graphs (no files).
std::vector<PairedSample> generate_samples(const GeneratorConfig& cfg, const GraphBuildConfig& graph_cfg,
                                           std::uint64_t seed, std::size_t jobs,
                                           std::vector<SampleTruth>* truth = nullptr);

GraphBuildConfig graph_config_from(const Config& cfg);

}  // namespace stainfuse
