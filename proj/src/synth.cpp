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

#include "stainfuse/synth.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stainfuse/binary_io.hpp"
#include "stainfuse/dataset.hpp"
#include "stainfuse/errors.hpp"
#include "stainfuse/evaluation.hpp"

namespace stainfuse {

namespace {

constexpr std::uint64_t kLatentSeed = 0x1a7e47;
constexpr std::size_t kLatentDraws = 400000;
constexpr std::uint32_t kSignalClass = 1;
constexpr std::uint32_t kNuisanceClass = 2;

std::string num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

/// Bilinear upsampling of a g x g grid of standard normals.
std::vector<double> smooth_field(std::uint32_t w, std::uint32_t h, std::size_t g, double amplitude, Rng& rng) {
  std::vector<double> grid(g * g);
  for (double& v : grid) v = amplitude * normal(rng);
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (std::uint32_t y = 0; y < h; ++y) {
    const double gy = (h > 1 ? static_cast<double>(y) / (h - 1) : 0.0) * static_cast<double>(g - 1);
    const auto y0 = std::min(static_cast<std::size_t>(gy), g - 2);
    const double fy = gy - static_cast<double>(y0);
    for (std::uint32_t x = 0; x < w; ++x) {
      const double gx = (w > 1 ? static_cast<double>(x) / (w - 1) : 0.0) * static_cast<double>(g - 1);
      const auto x0 = std::min(static_cast<std::size_t>(gx), g - 2);
      const double fx = gx - static_cast<double>(x0);
      const double top = grid[y0 * g + x0] * (1 - fx) + grid[y0 * g + x0 + 1] * fx;
      const double bottom = grid[(y0 + 1) * g + x0] * (1 - fx) + grid[(y0 + 1) * g + x0 + 1] * fx;
      out[static_cast<std::size_t>(y) * w + x] = top * (1 - fy) + bottom * fy;
    }
  }
  return out;
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0 ? std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

}  // namespace

void GeneratorConfig::validate() const {
  if (patients == 0) throw ConfigError("field 'synth.patients': must be positive");
  if (samples_per_patient == 0) throw ConfigError("field 'synth.samples_per_patient': must be positive");
  if (width < 16 || height < 16) throw ConfigError("field 'synth.width'/'synth.height': must be at least 16");
  if (classes_a < 3 || classes_b < 3) throw ConfigError("field 'synth.classes_a'/'synth.classes_b': need at least 3 classes");
  if (w_a < 0 || w_b < 0 || w_ab < 0) throw ConfigError("signal weights must be non-negative");
  if (w_a + w_b + w_ab > 1.0 + 1e-12) throw ConfigError("signal weights must sum to at most 1");
  if (w_a + w_b + w_ab <= 0.0) throw ConfigError("signal weights must not all be zero");
  if (!(noise >= 0.0)) throw ConfigError("field 'synth.noise': must be non-negative");
  if (static_cast<int>(profile.size()) != num_classes(endpoint)) {
    throw ConfigError("class profile has " + std::to_string(profile.size()) + " entries, endpoint needs " +
                      std::to_string(num_classes(endpoint)));
  }
  for (double p : profile)
    if (!(p > 0.0)) throw ConfigError("class profile proportions must be positive");
  if (raters.empty()) throw ConfigError("field 'synth.raters': need at least one rater");
}

std::vector<double> profile_proportions(const std::string& name, int classes) {
  std::vector<double> p;
  if (name == "uniform") {
    p.assign(static_cast<std::size_t>(classes), 1.0);
  } else if (name == "fibrosis_dev") {
    if (classes != 5) throw ConfigError("profile 'fibrosis_dev' has 5 classes, endpoint has " + std::to_string(classes));
    p = {239, 379, 536, 1575, 2012};
  } else {
    throw ConfigError("unknown class profile '" + name + "'");
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

std::vector<PlantedRater> parse_raters(const std::string& list) {
  std::vector<PlantedRater> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    item = first == std::string::npos ? std::string() : item.substr(first, last - first + 1);
    const auto colon = item.find(':');
    PlantedRater r;
    r.id = item.substr(0, colon);
    const bool word = std::all_of(r.id.begin(), r.id.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
    if (r.id.empty() || !word) {
      throw ConfigError("field 'synth.raters': bad rater id in '" + item + "'");
    }
    if (colon != std::string::npos) {
      const std::string b = item.substr(colon + 1);
      auto [p, ec] = std::from_chars(b.data(), b.data() + b.size(), r.bias);
      if (ec != std::errc() || p != b.data() + b.size()) {
        throw ConfigError("field 'synth.raters': bad bias '" + b + "' for rater " + r.id);
      }
    }
    for (const auto& o : out)
      if (o.id == r.id) throw ConfigError("field 'synth.raters': rater " + r.id + " listed twice");
    out.push_back(std::move(r));
  }
  return out;
}

GeneratorConfig GeneratorConfig::from_config(const Config& cfg) {
  GeneratorConfig g;
  g.patients = static_cast<std::size_t>(cfg.get_int("synth.patients"));
  g.samples_per_patient = static_cast<std::size_t>(cfg.get_int("synth.samples_per_patient"));
  g.width = static_cast<std::uint32_t>(cfg.get_int("synth.width"));
  g.height = static_cast<std::uint32_t>(cfg.get_int("synth.height"));
  g.classes_a = static_cast<std::uint32_t>(cfg.get_int("synth.classes_a"));
  g.classes_b = static_cast<std::uint32_t>(cfg.get_int("synth.classes_b"));
  g.endpoint = parse_endpoint(cfg.get("synth.endpoint"));
  g.w_a = cfg.get_double("synth.w_a");
  g.w_b = cfg.get_double("synth.w_b");
  g.w_ab = cfg.get_double("synth.w_ab");
  g.profile = profile_proportions(cfg.get("synth.profile"), num_classes(g.endpoint));
  g.raters = parse_raters(cfg.get("synth.raters"));
  g.noise = cfg.get_double("synth.noise");
  g.signal_gain = cfg.get_double("synth.signal_gain");
  g.validate();
  return g;
}

GraphBuildConfig graph_config_from(const Config& cfg) {
  GraphBuildConfig g;
  g.sample_pixels = static_cast<std::size_t>(cfg.get_int("graph.sample_pixels"));
  g.target_clusters = static_cast<std::size_t>(cfg.get_int("graph.clusters"));
  g.neighbors = static_cast<std::uint32_t>(cfg.get_int("graph.neighbors"));
  g.birch_threshold = cfg.get_double("graph.birch_threshold");
  g.birch_branching = static_cast<std::size_t>(cfg.get_int("graph.birch_branching"));
  g.spatial_weight = cfg.get_double("graph.spatial_weight");
  g.extra_features = cfg.get_bool("graph.extra_features");
  if (g.target_clusters <= g.neighbors) throw ConfigError("field 'graph.clusters': must exceed graph.neighbors");
  if (g.birch_branching < 2) throw ConfigError("field 'graph.birch_branching': must be at least 2");
  if (!(g.birch_threshold >= 0.0)) throw ConfigError("field 'graph.birch_threshold': must be non-negative");
  return g;
}

int LatentModel::discretize(double v) const {
  return static_cast<int>(std::upper_bound(thresholds.begin(), thresholds.end(), v) - thresholds.begin());
}

LatentModel fit_latent_model(const GeneratorConfig& cfg) {
  Rng rng(kLatentSeed);
  std::vector<double> u(kLatentDraws);
  for (double& v : u) {
    const double a = uniform01(rng), b = uniform01(rng);
    v = cfg.w_a * a + cfg.w_b * b + cfg.w_ab * a * b;
  }
  std::sort(u.begin(), u.end());
  LatentModel lm;
  double cum = 0.0;
  for (std::size_t k = 0; k + 1 < cfg.profile.size(); ++k) {
    cum += cfg.profile[k];
    const double pos = cum * static_cast<double>(u.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    lm.thresholds.push_back(u[i] + (pos - static_cast<double>(i)) * (u[std::min(i + 1, u.size() - 1)] - u[i]));
  }
  if (lm.thresholds.size() >= 2) {
    lm.unit = (lm.thresholds.back() - lm.thresholds.front()) / static_cast<double>(lm.thresholds.size() - 1);
  } else {
    double mean = 0.0, sq = 0.0;
    for (double v : u) mean += v;
    mean /= static_cast<double>(u.size());
    for (double v : u) sq += (v - mean) * (v - mean);
    lm.unit = std::sqrt(sq / static_cast<double>(u.size()));
  }
  return lm;
}

SampleTruth draw_truth(const GeneratorConfig& cfg, const LatentModel& lm, Rng& rng) {
  SampleTruth t;
  t.u_a = uniform01(rng);
  t.u_b = uniform01(rng);
  t.u = cfg.w_a * t.u_a + cfg.w_b * t.u_b + cfg.w_ab * t.u_a * t.u_b;
  t.label = lm.discretize(t.u);
  return t;
}

std::vector<RaterLabel> draw_rater_labels(const GeneratorConfig& cfg, const LatentModel& lm, const SampleTruth& t,
                                          Rng& rng) {
  std::vector<RaterLabel> out;
  for (const auto& r : cfg.raters) {
    const double z = normal(rng);
    const double v = t.u + lm.unit * (r.bias + cfg.noise * z);
    out.push_back({r.id, cfg.endpoint, lm.discretize(v)});
  }
  return out;
}

Heatmap render_heatmap(const GeneratorConfig& cfg, Modality m, double component, Rng& rng) {
  const std::uint32_t w = cfg.width, h = cfg.height;
  const std::uint32_t classes = m == Modality::A ? cfg.classes_a : cfg.classes_b;
  const double scale = static_cast<double>(std::min(w, h)) / 64.0;
  Heatmap hm(w, h, classes);

  const double cx = w * uniform(rng, 0.45, 0.55), cy = h * uniform(rng, 0.45, 0.55);
  const double rx = w * uniform(rng, 0.36, 0.46), ry = h * uniform(rng, 0.36, 0.46);
  struct Hole {
    double x, y, r;
  };
  std::vector<Hole> holes(1 + uniform_index(rng, 3));
  for (auto& hole : holes) {
    const double ang = uniform(rng, 0.0, 2.0 * M_PI), rad = uniform(rng, 0.0, 0.7);
    hole = {cx + rx * rad * std::cos(ang), cy + ry * rad * std::sin(ang), std::min(w, h) * uniform(rng, 0.04, 0.08)};
  }
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      bool ok = dx * dx + dy * dy <= 1.0;
      for (const auto& hole : holes)
        if (std::hypot(x - hole.x, y - hole.y) < hole.r) ok = false;
      hm.usable[static_cast<std::size_t>(y) * w + x] = ok ? 1 : 0;
    }
  }

  for (std::uint32_t c = 0; c < classes; ++c) {
    const double prior = c == 0 ? 1.0 : (c == kSignalClass ? -0.5 : 0.0);
    const auto field = smooth_field(w, h, 6, 0.8, rng);
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x)
        hm.logit(x, y, c) = prior + field[static_cast<std::size_t>(y) * w + x] + 0.25 * normal(rng);
  }

  auto stamp = [&](std::uint32_t c, auto&& profile) {
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x) hm.logit(x, y, c) += profile(static_cast<double>(x), static_cast<double>(y));
  };
  auto tissue_point = [&] {
    const double ang = uniform(rng, 0.0, 2.0 * M_PI), rad = std::sqrt(uniform01(rng)) * 0.9;
    return std::pair{cx + rx * rad * std::cos(ang), cy + ry * rad * std::sin(ang)};
  };

  // Tissue-wide offset of the signal class.
  stamp(kSignalClass, [&](double, double) { return cfg.signal_gain * component; });
  if (m == Modality::A) {
    const auto blobs = static_cast<std::size_t>(std::lround(12.0 * component));
    for (std::size_t i = 0; i < blobs; ++i) {
      const auto [bx, by] = tissue_point();
      const double sigma = scale * uniform(rng, 2.5, 4.0);
      stamp(kSignalClass, [&](double x, double y) {
        const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
        return 2.0 * std::exp(-d2 / (2 * sigma * sigma));
      });
    }
  } else {
    const auto ribbons = static_cast<std::size_t>(std::lround(6.0 * component));
    for (std::size_t i = 0; i < ribbons; ++i) {
      const auto [ax, ay] = tissue_point();
      const double ang = uniform(rng, 0.0, M_PI), len = std::min(w, h) * uniform(rng, 0.25, 0.45);
      const double bx = ax + len * std::cos(ang), by = ay + len * std::sin(ang);
      const double sigma = scale * uniform(rng, 1.0, 1.8);
      stamp(kSignalClass, [&](double x, double y) {
        const double d = segment_distance(x, y, ax, ay, bx, by);
        return 2.0 * std::exp(-d * d / (2 * sigma * sigma));
      });
    }
  }
  // Label-independent structures in another class.
  const std::size_t nuisance = uniform_index(rng, 13);
  for (std::size_t i = 0; i < nuisance; ++i) {
    const auto [bx, by] = tissue_point();
    const double sigma = scale * uniform(rng, 2.5, 4.0);
    stamp(kNuisanceClass, [&](double x, double y) {
      const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
      return 2.0 * std::exp(-d2 / (2 * sigma * sigma));
    });
  }
  // Stored as f32, so keep the in-memory raster identical to its file form.
  for (double& v : hm.logits.values()) v = static_cast<double>(static_cast<float>(v));
  return hm;
}

std::string patient_name(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "P%04zu", index + 1);
  return buf;
}

GeneratedSample generate_sample(const GeneratorConfig& cfg, const LatentModel& lm, std::size_t patient, int timepoint,
                                std::uint64_t seed) {
  const std::uint64_t base = derive_seed(seed, patient, static_cast<std::uint64_t>(timepoint));
  GeneratedSample s;
  s.patient_id = patient_name(patient);
  s.timepoint = timepoint;
  Rng truth_rng(derive_seed(base, 0));
  s.truth = draw_truth(cfg, lm, truth_rng);
  Rng rater_rng(derive_seed(base, 3));
  s.labels = draw_rater_labels(cfg, lm, s.truth, rater_rng);
  Rng a_rng(derive_seed(base, 1));
  s.a = render_heatmap(cfg, Modality::A, s.truth.u_a, a_rng);
  Rng b_rng(derive_seed(base, 2));
  s.b = render_heatmap(cfg, Modality::B, s.truth.u_b, b_rng);
  return s;
}

namespace {

ModalGraph build_for(const Heatmap& hm, Modality m, const GraphBuildConfig& base, std::uint64_t seed,
                     const std::string& patient, int timepoint) {
  GraphBuildConfig g = base;
  g.seed = graph_seed(seed, artifact_stem(patient, timepoint, m));
  return build_graph(hm, m, g);
}

}  // namespace

std::vector<PairedSample> generate_samples(const GeneratorConfig& cfg, const GraphBuildConfig& graph_cfg,
                                           std::uint64_t seed, std::size_t jobs, std::vector<SampleTruth>* truth) {
  cfg.validate();
  const LatentModel lm = fit_latent_model(cfg);
  const std::size_t n = cfg.patients * cfg.samples_per_patient;
  std::vector<PairedSample> out(n);
  std::vector<SampleTruth> t(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const std::size_t patient = i / cfg.samples_per_patient;
    const int tp = static_cast<int>(i % cfg.samples_per_patient);
    GeneratedSample g = generate_sample(cfg, lm, patient, tp, seed);
    PairedSample& s = out[i];
    s.patient_id = g.patient_id;
    s.timepoint = tp;
    s.labels = g.labels;
    s.graph_a = build_for(g.a, Modality::A, graph_cfg, seed, g.patient_id, tp);
    s.graph_b = build_for(g.b, Modality::B, graph_cfg, seed, g.patient_id, tp);
    t[i] = g.truth;
  });
  if (truth) *truth = std::move(t);
  return out;
}

DatasetSummary generate_dataset(const GeneratorConfig& cfg, const GraphBuildConfig& graph_cfg,
                                const std::filesystem::path& root, std::uint64_t seed, std::size_t jobs,
                                bool emit_graphs) {
  cfg.validate();
  const LatentModel lm = fit_latent_model(cfg);
  const std::size_t n = cfg.patients * cfg.samples_per_patient;
  std::vector<GeneratedSample> meta(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const std::size_t patient = i / cfg.samples_per_patient;
    const int tp = static_cast<int>(i % cfg.samples_per_patient);
    GeneratedSample g = generate_sample(cfg, lm, patient, tp, seed);
    for (Modality m : {Modality::A, Modality::B}) {
      const Heatmap& hm = m == Modality::A ? g.a : g.b;
      const std::string stem = artifact_stem(g.patient_id, tp, m);
      write_heatmap(hm, root / "heatmaps" / (stem + ".hmp"));
      if (emit_graphs) write_graph(build_for(hm, m, graph_cfg, seed, g.patient_id, tp), root / "graphs" / (stem + ".mgf"));
    }
    g.a = Heatmap();
    g.b = Heatmap();
    meta[i] = std::move(g);
  });

  std::vector<LabelRecord> labels;
  std::string truth = "patient_id,timepoint,u_a,u_b,u,label\n";
  for (const auto& g : meta) {
    for (const auto& l : g.labels) labels.push_back({g.patient_id, g.timepoint, l.rater_id, l.endpoint, l.score});
    truth += g.patient_id + ',' + std::to_string(g.timepoint) + ',' + num(g.truth.u_a) + ',' + num(g.truth.u_b) + ',' +
             num(g.truth.u) + ',' + std::to_string(g.truth.label) + '\n';
  }
  write_labels(labels, root / "labels.csv");
  write_file(root / "truth.csv", truth);
  const auto manifest = build_manifest(root);
  write_file(root / "manifest.tsv", encode_manifest(manifest));

  DatasetSummary summary;
  summary.samples = n;
  summary.patients = cfg.patients;
  summary.files = manifest.size();
  return summary;
}

}  // namespace stainfuse
