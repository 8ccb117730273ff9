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

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "stainfuse/binary_io.hpp"
#include "stainfuse/config.hpp"
#include "stainfuse/dataset.hpp"
#include "stainfuse/errors.hpp"
#include "stainfuse/evaluation.hpp"
#include "stainfuse/graph_builder.hpp"
#include "stainfuse/heatmap.hpp"
#include "stainfuse/model.hpp"
#include "stainfuse/synth.hpp"
#include "stainfuse/train.hpp"

namespace stainfuse::cli {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using json = nlohmann::ordered_json;

struct UsageError : Error {
  using Error::Error;
};

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  bool print_config = false;
};

Config load_config(const GlobalOptions& g) {
  Config cfg;
  for (const auto& f : g.configs) cfg.load_file(f);
  for (const auto& s : g.sets) cfg.apply_override(s);
  if (g.seed) cfg.set("seed", std::to_string(*g.seed), "--seed");
  if (g.jobs) cfg.set("jobs", std::to_string(*g.jobs), "--jobs");
  return cfg;
}

std::uint64_t seed_of(const Config& cfg) { return static_cast<std::uint64_t>(cfg.get_int("seed")); }
std::size_t jobs_of(const Config& cfg) { return static_cast<std::size_t>(cfg.get_int("jobs")); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

json file_entry(const fs::path& p) {
  const std::string bytes = read_file(p);
  return json{{"path", p.generic_string()}, {"size", bytes.size()}, {"sha256", sha256_hex(bytes)}};
}

std::string meta_or(const Checkpoint& ckpt, const std::string& key, const std::string& fallback) {
  auto it = ckpt.metadata.find(key);
  return it == ckpt.metadata.end() ? fallback : it->second;
}

std::string row_name(const ModelConfig& mc) {
  std::string name(strategy_name(mc.strategy));
  if (mc.strategy == Strategy::KroneckerGated && mc.bilinear_gate) name += "_bilinear";
  return name;
}

// generate ------------------------------------------------------------------

int cmd_generate(const Config& cfg, const fs::path& out_dir, std::ostream& out) {
  const auto t0 = Clock::now();
  const GeneratorConfig g = GeneratorConfig::from_config(cfg);
  const GraphBuildConfig gc = graph_config_from(cfg);
  fs::create_directories(out_dir);
  const DatasetSummary s =
      generate_dataset(g, gc, out_dir, seed_of(cfg), jobs_of(cfg), cfg.get_bool("synth.emit_graphs"));
  out << "generated " << s.samples << " samples from " << s.patients << " patients, " << s.files
      << " files in manifest (" << seconds_since(t0) << " s)\n";
  return 0;
}

// build-graphs --------------------------------------------------------------

int cmd_build_graphs(const Config& cfg, const fs::path& heatmaps, const fs::path& out_dir, std::ostream& out,
                     std::ostream& err) {
  if (!fs::is_directory(heatmaps)) throw UsageError("heatmap directory " + heatmaps.string() + " does not exist");
  const GraphBuildConfig base = graph_config_from(cfg);
  const std::uint64_t seed = seed_of(cfg);
  std::vector<fs::path> inputs;
  std::size_t skipped = 0;
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(heatmaps)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) {
    if (fs::is_regular_file(p) && p.extension() == ".hmp") {
      inputs.push_back(p);
    } else {
      err << "skipped " << p.filename().string() << ": not a heatmap file\n";
      ++skipped;
    }
  }
  fs::create_directories(out_dir);
  std::vector<std::string> failure(inputs.size());
  parallel_for(inputs.size(), jobs_of(cfg), [&](std::size_t i) {
    try {
      const std::string stem = inputs[i].stem().string();
      const ArtifactName name = parse_artifact_stem(stem);
      const Heatmap hm = read_heatmap(inputs[i]);
      GraphBuildConfig gc = base;
      gc.seed = graph_seed(seed, stem);
      write_graph(build_graph(hm, name.modality, gc), out_dir / (stem + ".mgf"));
    } catch (const std::exception& e) {
      failure[i] = e.what();
      if (failure[i].empty()) failure[i] = "unknown error";
    }
  });
  std::size_t built = 0, failed = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (failure[i].empty()) {
      ++built;
    } else {
      ++failed;
      err << "failed " << inputs[i].filename().string() << ": " << failure[i] << '\n';
    }
  }
  out << "built " << built << ", skipped " << skipped << ", failed " << failed << '\n';
  return failed ? 1 : 0;
}

// train ---------------------------------------------------------------------

int cmd_train(const Config& cfg, const fs::path& data, const fs::path& out_dir, std::ostream& out) {
  const auto t0 = Clock::now();
  const std::vector<PairedSample> samples = load_dataset(data);
  if (samples.empty()) throw Error("dataset " + data.string() + " holds no paired samples");
  const std::vector<double> fr = cfg.get_doubles("train.split");
  const DatasetSplit split = split_by_patient(samples, {fr[0], fr[1], fr[2]}, seed_of(cfg));
  const double t_load = seconds_since(t0);

  const auto t1 = Clock::now();
  GridResult g = grid_search(cfg, samples, split, jobs_of(cfg));
  const double t_train = seconds_since(t1);
  const TrainConfig tc = TrainConfig::from_config(g.best_config);

  fs::create_directories(out_dir);
  std::map<std::string, std::string> extra{
      {"config", g.best_config.render()},
      {"seed", std::to_string(tc.seed)},
      {"train.endpoint", std::string(endpoint_name(tc.endpoint))},
      {"split.train", join(split.train, ',')},
      {"split.val", join(split.val, ',')},
      {"split.test", join(split.test, ',')},
      {"train.best_iteration", std::to_string(g.best_result.best_iteration)},
  };
  for (const auto& [k, v] : g.best_config.entries())
    if (k.rfind("train.", 0) == 0) extra[k] = v;
  const fs::path ckpt = out_dir / "model.ckpt";
  write_checkpoint(g.model->to_checkpoint(extra), ckpt);
  write_file(out_dir / "trace.csv", encode_trace(g.best_result.trace));
  write_file(out_dir / "leaderboard.csv", encode_leaderboard(g.leaderboard));

  json manifest;
  json config = json::object();
  for (const auto& [k, v] : g.best_config.entries()) config[k] = v;
  manifest["command"] = "train";
  manifest["config"] = config;
  manifest["seeds"] = {{"master", tc.seed}, {"split", seed_of(cfg)}};
  json inputs = json::array();
  for (const auto& e : build_manifest(data / "graphs", "")) {
    inputs.push_back({{"path", (fs::path("graphs") / e.path).generic_string()}, {"size", e.size}, {"sha256", e.sha256}});
  }
  if (fs::exists(data / "labels.csv")) {
    json l = file_entry(data / "labels.csv");
    l["path"] = "labels.csv";
    inputs.push_back(l);
  }
  manifest["inputs"] = inputs;
  manifest["checkpoint"] = ckpt.generic_string();
  json outputs = json::array();
  for (const char* f : {"model.ckpt", "trace.csv", "leaderboard.csv"}) outputs.push_back(file_entry(out_dir / f));
  manifest["outputs"] = outputs;
  manifest["result"] = {{"best_trial", g.best},
                        {"best_val_loss", g.best_result.best_val_loss},
                        {"best_iteration", g.best_result.best_iteration},
                        {"iterations", g.best_result.iterations},
                        {"early_stopped", g.best_result.early_stopped},
                        {"diverged", g.best_result.diverged}};
  manifest["timings_s"] = {{"load", t_load}, {"train", t_train}, {"total", seconds_since(t0)}};
  write_file(out_dir / "run_manifest.json", manifest.dump(2) + "\n");

  out << "trained " << g.leaderboard.size() << " configuration(s); best trial " << g.best << " val_loss "
      << g.best_result.best_val_loss << " at iteration " << g.best_result.best_iteration << '\n';
  if (g.best_result.diverged) out << "warning: best trial diverged: " << g.best_result.divergence << '\n';
  return 0;
}

// evaluate ------------------------------------------------------------------

int cmd_evaluate(const Config& cfg, const fs::path& ckpt_path, const fs::path& data, const fs::path& out_dir,
                 std::ostream& out) {
  const auto t0 = Clock::now();
  const Checkpoint ckpt = read_checkpoint(ckpt_path);
  std::map<std::string, std::string> overrides;
  for (const auto& [k, v] : cfg.explicit_values())
    if (k.rfind("model.", 0) == 0) overrides[k] = v;
  Model model = Model::from_checkpoint(ckpt, overrides);

  const Endpoint endpoint = parse_endpoint(meta_or(ckpt, "train.endpoint", cfg.get("train.endpoint")));
  const int classes = num_classes(endpoint);
  const std::vector<PairedSample> samples = load_dataset(data);
  const std::vector<std::string> test_list = split(meta_or(ckpt, "split.test", ""), ',');
  const std::set<std::string> test_ids(test_list.begin(), test_list.end());

  std::vector<const PairedSample*> test;
  for (const auto& s : samples)
    if (test_ids.count(s.id()) && !s.scores(endpoint).empty()) test.push_back(&s);
  if (test.empty()) throw Error("no labelled test-split samples of the checkpoint were found in " + data.string());

  std::vector<PreparedInput> inputs;
  inputs.reserve(test.size());
  for (const auto* s : test) inputs.push_back(model.prepare(*s));
  std::vector<const PreparedInput*> ptrs;
  for (const auto& in : inputs) ptrs.push_back(&in);
  const std::vector<double> latent = model.predict_latent(ptrs);
  const std::vector<int> pred = model.predict(ptrs);

  std::vector<int> truth;
  std::vector<std::vector<int>> rater_scores;
  for (const auto* s : test) {
    const auto sc = s->scores(endpoint);
    truth.push_back(consensus(sc));
    rater_scores.push_back(sc);
  }
  const std::size_t resamples = static_cast<std::size_t>(cfg.get_int("eval.bootstrap"));
  const std::uint64_t seed = seed_of(cfg);
  const std::size_t jobs = jobs_of(cfg);
  const std::string ep(endpoint_name(endpoint));

  std::vector<ReportRow> rows;
  rows.push_back(make_row(row_name(model.config()), ep, bootstrap_kappa(pred, truth, classes, resamples, seed, jobs)));
  std::vector<std::vector<int>> multi;
  for (const auto& sc : rater_scores)
    if (sc.size() >= 2) multi.push_back(sc);
  if (!multi.empty()) {
    const auto groups = rater_consensus_pairs(multi, cfg.get_bool("eval.loo_consensus"));
    rows.push_back(make_row("pathologists", ep, bootstrap_kappa_grouped(groups, classes, resamples, seed, jobs)));
  }

  fs::create_directories(out_dir);
  write_file(out_dir / "report.csv", encode_report(rows));
  std::string preds = "sample_id,latent,prediction,consensus\n";
  char buf[64];
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, latent[i]);
    preds += test[i]->id() + ',' + std::string(buf, p) + ',' + std::to_string(pred[i]) + ',' +
             std::to_string(truth[i]) + '\n';
  }
  write_file(out_dir / "predictions.csv", preds);
  out << render_table(rows);
  out << "evaluated " << test.size() << " test samples (" << seconds_since(t0) << " s)\n";
  return 0;
}

// report --------------------------------------------------------------------

int cmd_report(const std::vector<std::string>& reports, const fs::path& out_dir, std::ostream& out,
               std::ostream& err) {
  if (reports.empty()) throw UsageError("report: no report files given");
  std::vector<ReportRow> rows;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : reports) {
    for (auto& row : decode_report(read_file(r))) {
      if (!seen.insert({row.name, row.endpoint}).second) {
        if (row.name != "pathologists") err << "duplicate row " << row.name << " (" << row.endpoint << ") in " << r << " ignored\n";
        continue;
      }
      rows.push_back(std::move(row));
    }
  }
  fs::create_directories(out_dir);
  const std::string table = render_table(rows);
  write_file(out_dir / "table.txt", table);
  write_file(out_dir / "combined.csv", encode_report(rows));
  write_file(out_dir / "chart.svg", render_svg(rows));
  out << table;
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-stain graph fusion: synthetic data, graph building, training and evaluation", "stainfuse"};
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Master seed (overrides the 'seed' key)");
  app.add_option("--jobs", g.jobs, "Worker threads, 0 = all cores (overrides the 'jobs' key)");
  app.add_option("--config", g.configs, "Config file, repeatable; later files win");
  app.add_option("--set", g.sets, "key=value override applied after config files, repeatable");
  app.add_flag("--print-config", g.print_config, "Print the effective configuration and exit");

  std::string out_dir, heatmaps, data, checkpoint;
  std::vector<std::string> reports;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("--out", out_dir, "Dataset directory")->required();
  auto* bg = app.add_subcommand("build-graphs", "Build graphs from a directory of heatmaps");
  bg->add_option("--heatmaps", heatmaps, "Directory of .hmp files")->required();
  bg->add_option("--out", out_dir, "Output directory for .mgf files")->required();
  auto* tr = app.add_subcommand("train", "Train (or grid-search) a model");
  tr->add_option("--data", data, "Dataset directory with graphs/ and labels.csv")->required();
  tr->add_option("--out", out_dir, "Run directory")->required();
  auto* ev = app.add_subcommand("evaluate", "Score the test split of a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "model.ckpt from train")->required();
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--out", out_dir, "Output directory")->required();
  auto* rp = app.add_subcommand("report", "Combine evaluation reports into a table and chart");
  rp->add_option("reports", reports, "report.csv files")->required();
  rp->add_option("--out", out_dir, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const Config cfg = load_config(g);
    if (g.print_config) {
      out << cfg.render();
      return 0;
    }
    if (*gen) return cmd_generate(cfg, out_dir, out);
    if (*bg) return cmd_build_graphs(cfg, heatmaps, out_dir, out, err);
    if (*tr) return cmd_train(cfg, data, out_dir, out);
    if (*ev) return cmd_evaluate(cfg, checkpoint, data, out_dir, out);
    if (*rp) return cmd_report(reports, out_dir, out, err);
    err << app.help();
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace stainfuse::cli
