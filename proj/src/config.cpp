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

#include "stainfuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "stainfuse/binary_io.hpp"
#include "stainfuse/errors.hpp"

namespace stainfuse {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::map<std::string, std::vector<std::string>>& choices() {
  static const std::map<std::string, std::vector<std::string>> c{
      {"synth.endpoint", {"fibrosis", "ballooning", "lobular_inflammation", "steatosis"}},
      {"train.endpoint", {"fibrosis", "ballooning", "lobular_inflammation", "steatosis"}},
      {"synth.profile", {"fibrosis_dev", "uniform"}},
      {"model.strategy",
       {"unimodal_a", "unimodal_b", "late_concat", "late_add", "late_hadamard", "kronecker_gated", "gimp", "gaimp"}},
      {"model.readout", {"mean", "attention"}},
  };
  return c;
}

const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

bool parse_int(std::string_view v, std::int64_t& out) {
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size() && !v.empty();
}

bool parse_double(std::string_view v, double& out) {
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size() && !v.empty();
}

bool parse_bool(std::string_view v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return out = true, true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return out = false, true;
  return false;
}

void check_value(const ConfigKey& key, const std::string& value, const std::string& where) {
  const std::string prefix = where + "field '" + key.name + "': ";
  switch (key.kind) {
    case ValueKind::Int: {
      std::int64_t v;
      if (!parse_int(value, v)) throw ConfigError(prefix + "expected an integer, got '" + value + "'");
      if (v < 0) throw ConfigError(prefix + "must be non-negative, got " + value);
      break;
    }
    case ValueKind::Double: {
      double v;
      if (!parse_double(value, v)) throw ConfigError(prefix + "expected a number, got '" + value + "'");
      break;
    }
    case ValueKind::Bool: {
      bool v;
      if (!parse_bool(value, v)) throw ConfigError(prefix + "expected true or false, got '" + value + "'");
      break;
    }
    case ValueKind::String: {
      auto it = choices().find(key.name);
      if (it != choices().end() && std::find(it->second.begin(), it->second.end(), value) == it->second.end()) {
        std::string list;
        for (const auto& c : it->second) list += (list.empty() ? "" : ", ") + c;
        throw ConfigError(prefix + "unknown value '" + value + "' (expected one of " + list + ")");
      }
      if (key.name == "train.split") {
        std::vector<double> parts;
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
          double d;
          if (!parse_double(trim(item), d) || !(d > 0.0)) {
            throw ConfigError(prefix + "expected three positive fractions, got '" + value + "'");
          }
          parts.push_back(d);
        }
        double sum = 0.0;
        for (double d : parts) sum += d;
        if (parts.size() != 3 || std::abs(sum - 1.0) > 1e-6) {
          throw ConfigError(prefix + "expected three positive fractions summing to 1, got '" + value + "'");
        }
      }
      break;
    }
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  using K = ValueKind;
  static const std::vector<ConfigKey> keys{
      {"seed", K::Int, "7", "master seed"},
      {"jobs", K::Int, "0", "worker threads, 0 = available cores"},
      {"synth.patients", K::Int, "60", "patients to generate"},
      {"synth.samples_per_patient", K::Int, "1", "timepoints per patient"},
      {"synth.width", K::Int, "256", "heatmap width in pixels"},
      {"synth.height", K::Int, "256", "heatmap height in pixels"},
      {"synth.classes_a", K::Int, "13", "heatmap classes of modality a"},
      {"synth.classes_b", K::Int, "5", "heatmap classes of modality b"},
      {"synth.endpoint", K::String, "fibrosis", "endpoint whose labels are generated"},
      {"synth.w_a", K::Double, "0.3", "label weight of the modality-a component"},
      {"synth.w_b", K::Double, "0.3", "label weight of the modality-b component"},
      {"synth.w_ab", K::Double, "0.4", "label weight of the interaction term"},
      {"synth.profile", K::String, "fibrosis_dev", "label class-balance profile"},
      {"synth.raters", K::String, "r1:0.8,r2:-0.8,r3:0", "rater_id:bias list, bias in threshold units"},
      {"synth.noise", K::Double, "0.3", "rater noise sd in threshold units"},
      {"synth.signal_gain", K::Double, "2.0", "logit offset of the signal class per unit component"},
      {"synth.emit_graphs", K::Bool, "true", "also build graphs during generate"},
      {"graph.sample_pixels", K::Int, "20000", "tissue pixels sampled per heatmap"},
      {"graph.clusters", K::Int, "5000", "BIRCH target clusters (graph nodes)"},
      {"graph.neighbors", K::Int, "5", "k of the kNN edges"},
      {"graph.birch_threshold", K::Double, "0.5", "BIRCH subcluster radius threshold"},
      {"graph.birch_branching", K::Int, "50", "BIRCH branching factor"},
      {"graph.spatial_weight", K::Double, "1.0", "weight of normalised coordinates in clustering"},
      {"graph.extra_features", K::Bool, "false", "append min/max/argmax-fraction node features"},
      {"model.strategy", K::String, "late_concat", "fusion strategy"},
      {"model.bilinear_gate", K::Bool, "false", "bilinear gates for kronecker_gated"},
      {"model.hidden", K::Int, "128", "graph conv width"},
      {"model.head_hidden", K::Int, "128", "hidden width of the late-fusion head"},
      {"model.head_dropout", K::Double, "0.1", "late-fusion head dropout"},
      {"model.kron_dim", K::Int, "32", "projection width before the Kronecker product"},
      {"model.kron_hidden", K::Int, "64", "hidden width of the Kronecker head"},
      {"model.kron_dropout", K::Double, "0.5", "Kronecker head dropout"},
      {"model.gimp_dropout", K::Double, "0.4", "dropout on GIMP cross projections"},
      {"model.gaimp_dropout", K::Double, "0.2", "dropout on GAIMP attention projections"},
      {"model.unimodal_hidden", K::Int, "64", "hidden width of unimodal heads"},
      {"model.unimodal_dropout", K::Double, "0.5", "unimodal head dropout"},
      {"model.pool_ratio", K::Double, "0.5", "SAGPool keep ratio"},
      {"model.readout", K::String, "mean", "per-layer readout"},
      {"model.symmetric_edges", K::Bool, "false", "add reverse kNN edges"},
      {"model.normalizer_clamp", K::Bool, "false", "clamp normalised features to [0, 1]"},
      {"train.endpoint", K::String, "fibrosis", "endpoint to train on"},
      {"train.lr", K::Double, "0.0001", "Adam learning rate"},
      {"train.batch", K::Int, "16", "paired samples per iteration"},
      {"train.max_iterations", K::Int, "7000", "iteration cap"},
      {"train.eval_every", K::Int, "100", "iterations between validation passes"},
      {"train.patience", K::Int, "10", "validation passes without improvement before stopping"},
      {"train.split", K::String, "0.7,0.15,0.15", "train,val,test patient fractions"},
      {"eval.bootstrap", K::Int, "400", "bootstrap resamples"},
      {"eval.loo_consensus", K::Bool, "true", "leave the rated pathologist out of the baseline consensus"},
  };
  return keys;
}

Config::Config() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void Config::set(const std::string& key, const std::string& value, const std::string& origin) {
  const std::string where = origin.empty() ? "" : origin + ": ";
  if (key.rfind("grid.", 0) == 0) {
    const ConfigKey* base = find_key(key.substr(5));
    if (!base || !(base->name.rfind("model.", 0) == 0 || base->name.rfind("train.", 0) == 0)) {
      throw ConfigError(where + "field '" + key + "': grid axes must name a model.* or train.* key");
    }
    std::stringstream ss(value);
    std::string alt;
    int count = 0;
    while (std::getline(ss, alt, '|')) {
      check_value(*base, std::string(trim(alt)), where);
      ++count;
    }
    if (count == 0) throw ConfigError(where + "field '" + key + "': empty grid axis");
    values_[key] = value;
    explicit_[key] = value;
    return;
  }
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError(where + "unknown key '" + key + "'");
  check_value(*k, value, where);
  values_[key] = value;
  explicit_[key] = value;
}

void Config::load_text(std::string_view text, const std::string& source) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + std::string(line) + "'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": missing key before '='");
    if (value.empty()) throw ConfigError(where + ": field '" + key + "': missing value");
    set(key, value, where);
  }
}

void Config::load_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  load_text(text, path.string());
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("--set: expected key=value, got '" + std::string(assignment) + "'");
  }
  const std::string key(trim(assignment.substr(0, eq)));
  const std::string value(trim(assignment.substr(eq + 1)));
  if (value.empty()) throw ConfigError("--set: field '" + key + "': missing value");
  set(key, value, "--set");
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  std::int64_t v = 0;
  if (!parse_int(get(key), v)) throw ConfigError("field '" + key + "': expected an integer");
  return v;
}

double Config::get_double(const std::string& key) const {
  double v = 0;
  if (!parse_double(get(key), v)) throw ConfigError("field '" + key + "': expected a number");
  return v;
}

bool Config::get_bool(const std::string& key) const {
  bool v = false;
  if (!parse_bool(get(key), v)) throw ConfigError("field '" + key + "': expected true or false");
  return v;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    double d;
    if (!parse_double(trim(item), d)) throw ConfigError("field '" + key + "': expected numbers, got '" + item + "'");
    out.push_back(d);
  }
  return out;
}

std::map<std::string, std::vector<std::string>> Config::grid() const {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [k, v] : values_) {
    if (k.rfind("grid.", 0) != 0) continue;
    std::stringstream ss(v);
    std::string alt;
    auto& axis = out[k.substr(5)];
    while (std::getline(ss, alt, '|')) axis.emplace_back(trim(alt));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> Config::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys()) out.emplace_back(k.name, values_.at(k.name));
  return out;
}

std::string Config::render() const {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + values_.at(k.name) + "\n";
  for (const auto& [k, v] : values_)
    if (k.rfind("grid.", 0) == 0) out += k + " = " + v + "\n";
  return out;
}

}  // namespace stainfuse
