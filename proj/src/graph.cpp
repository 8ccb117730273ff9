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

#include "stainfuse/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "stainfuse/binary_io.hpp"
#include "stainfuse/errors.hpp"
#include "stainfuse/rng.hpp"

namespace stainfuse {

namespace {

constexpr std::string_view kGraphMagic = "MGF1";
constexpr std::uint16_t kGraphVersion = 1;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// Whitespace tokenizer that tracks byte offsets for diagnostics.
class Tokens {
 public:
  explicit Tokens(std::string_view text) : text_(text) {}

  std::string_view next(const char* what) {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) throw ParseError(std::string("unexpected end of text reading ") + what, pos_);
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void keyword(std::string_view expected) {
    const std::size_t at = pos_;
    if (next(expected.data()) != expected) {
      throw ParseError("expected keyword '" + std::string(expected) + "'", at);
    }
  }

  template <typename T>
  T number(const char* what) {
    const std::size_t at = pos_;
    const auto tok = next(what);
    T value{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ParseError("malformed number '" + std::string(tok) + "' for " + what, at);
    }
    return value;
  }

  void expect_end() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ != text_.size()) throw ParseError("trailing content after graph", pos_);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view modality_name(Modality m) { return m == Modality::A ? "A" : "B"; }

std::string_view endpoint_name(Endpoint e) {
  switch (e) {
    case Endpoint::Fibrosis: return "fibrosis";
    case Endpoint::Ballooning: return "ballooning";
    case Endpoint::LobularInflammation: return "lobular_inflammation";
    case Endpoint::Steatosis: return "steatosis";
  }
  return "?";
}

Endpoint parse_endpoint(std::string_view name) {
  for (auto e : {Endpoint::Fibrosis, Endpoint::Ballooning, Endpoint::LobularInflammation, Endpoint::Steatosis}) {
    if (endpoint_name(e) == name) return e;
  }
  throw ConfigError("unknown endpoint '" + std::string(name) +
                    "' (expected fibrosis, ballooning, lobular_inflammation or steatosis)");
}

int num_classes(Endpoint e) {
  switch (e) {
    case Endpoint::Fibrosis: return 5;
    case Endpoint::Ballooning: return 3;
    case Endpoint::LobularInflammation: return 4;
    case Endpoint::Steatosis: return 4;
  }
  return 0;
}

void validate(const ModalGraph& g) {
  const std::size_t n = g.num_nodes();
  if (g.features.rank() != 2 || g.features.rows() != n) {
    throw ValidationError("feature matrix rows must equal node count " + std::to_string(n) + ", got shape " +
                          shape_string(g.features.shape()));
  }
  if (!g.features.all_finite()) throw ValidationError("feature matrix contains NaN or Inf");
  std::vector<std::uint32_t> out_degree(n, 0);
  for (const auto& [src, dst] : g.edges) {
    if (src >= n || dst >= n) {
      throw ValidationError("edge index out of range: (" + std::to_string(src) + "," + std::to_string(dst) +
                            ") with " + std::to_string(n) + " nodes");
    }
    if (src == dst) throw ValidationError("self-loop on node " + std::to_string(src));
    ++out_degree[src];
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (out_degree[v] != g.neighbors) {
      throw ValidationError("out-degree of node " + std::to_string(v) + " is " + std::to_string(out_degree[v]) +
                            ", expected k = " + std::to_string(g.neighbors));
    }
  }
}

std::string encode_graph(const ModalGraph& g) {
  const std::size_t n = g.num_nodes();
  const std::size_t d = n == 0 ? 0 : g.feature_dim();
  ByteWriter w;
  w.bytes(kGraphMagic);
  w.u16(kGraphVersion);
  w.u8(static_cast<std::uint8_t>(g.modality));
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(g.neighbors);
  for (double v : g.features.values()) w.f64(v);
  for (const auto& c : g.centroids) {
    w.f64(c[0]);
    w.f64(c[1]);
  }
  w.u32(static_cast<std::uint32_t>(g.edges.size()));
  for (const auto& [src, dst] : g.edges) {
    w.u32(src);
    w.u32(dst);
  }
  return w.take();
}

ModalGraph decode_graph(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kGraphMagic) throw ParseError("bad magic, expected MGF1", 0);
  const std::size_t version_at = r.offset();
  if (r.u16("version") != kGraphVersion) throw ParseError("unsupported graph container version", version_at);
  const std::size_t modality_at = r.offset();
  const auto modality = r.u8("modality");
  if (modality > 1) throw ParseError("unknown modality code " + std::to_string(modality), modality_at);
  const std::uint32_t n = r.u32("node count");
  const std::uint32_t d = r.u32("feature dimension");
  const std::uint32_t k = r.u32("neighbour count");
  const std::uint64_t payload = static_cast<std::uint64_t>(n) * d * 8 + static_cast<std::uint64_t>(n) * 16;
  if (payload > r.remaining()) throw ParseError("truncated input while reading features", r.offset());
  ModalGraph g;
  g.modality = static_cast<Modality>(modality);
  g.neighbors = k;
  std::vector<double> features(static_cast<std::size_t>(n) * d);
  for (double& v : features) v = r.f64("features");
  g.features = Tensor({n, d}, std::move(features));
  g.centroids.resize(n);
  for (auto& c : g.centroids) {
    c[0] = r.f64("centroids");
    c[1] = r.f64("centroids");
  }
  const std::uint32_t e = r.u32("edge count");
  if (static_cast<std::uint64_t>(e) * 8 > r.remaining()) {
    throw ParseError("truncated input while reading edges", r.offset());
  }
  g.edges.resize(e);
  for (auto& [src, dst] : g.edges) {
    src = r.u32("edges");
    dst = r.u32("edges");
  }
  r.expect_end("graph container");
  validate(g);
  return g;
}

void write_graph(const ModalGraph& g, const std::filesystem::path& path) { write_file(path, encode_graph(g)); }

ModalGraph read_graph(const std::filesystem::path& path) { return decode_graph(read_file(path)); }

std::string encode_graph_text(const ModalGraph& g) {
  const std::size_t n = g.num_nodes();
  const std::size_t d = n == 0 ? 0 : g.feature_dim();
  std::ostringstream out;
  out << "MGF1-text\n";
  out << "modality " << modality_name(g.modality) << "\n";
  out << "nodes " << n << " dim " << d << " k " << g.neighbors << "\n";
  out << "features\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out << (j ? " " : "") << format_double(g.features(i, j));
    out << "\n";
  }
  out << "centroids\n";
  for (const auto& c : g.centroids) out << format_double(c[0]) << " " << format_double(c[1]) << "\n";
  out << "edges " << g.edges.size() << "\n";
  for (const auto& [src, dst] : g.edges) out << src << " " << dst << "\n";
  return out.str();
}

ModalGraph decode_graph_text(std::string_view text) {
  Tokens t(text);
  t.keyword("MGF1-text");
  t.keyword("modality");
  const auto m = t.next("modality");
  ModalGraph g;
  if (m == "A") g.modality = Modality::A;
  else if (m == "B") g.modality = Modality::B;
  else throw ParseError("unknown modality '" + std::string(m) + "'", 0);
  t.keyword("nodes");
  const auto n = t.number<std::uint32_t>("node count");
  t.keyword("dim");
  const auto d = t.number<std::uint32_t>("feature dimension");
  t.keyword("k");
  g.neighbors = t.number<std::uint32_t>("neighbour count");
  t.keyword("features");
  std::vector<double> features(static_cast<std::size_t>(n) * d);
  for (double& v : features) v = t.number<double>("feature");
  g.features = Tensor({n, d}, std::move(features));
  t.keyword("centroids");
  g.centroids.resize(n);
  for (auto& c : g.centroids) {
    c[0] = t.number<double>("centroid");
    c[1] = t.number<double>("centroid");
  }
  t.keyword("edges");
  const auto e = t.number<std::uint32_t>("edge count");
  g.edges.resize(e);
  for (auto& [src, dst] : g.edges) {
    src = t.number<std::uint32_t>("edge source");
    dst = t.number<std::uint32_t>("edge target");
  }
  t.expect_end();
  validate(g);
  return g;
}

std::string sample_id(std::string_view patient_id, int timepoint) {
  return std::string(patient_id) + "/t" + std::to_string(timepoint);
}

std::string PairedSample::id() const { return sample_id(patient_id, timepoint); }

std::vector<int> PairedSample::scores(Endpoint e) const {
  std::vector<int> out;
  for (const auto& l : labels)
    if (l.endpoint == e) out.push_back(l.score);
  return out;
}

DatasetSplit split_by_patient(std::span<const PairedSample> samples, std::array<double, 3> fractions,
                              std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ContractError("split_by_patient: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("split_by_patient: fractions must sum to 1");

  std::set<std::string> unique;
  for (const auto& s : samples) unique.insert(s.patient_id);
  std::vector<std::string> patients(unique.begin(), unique.end());
  const std::size_t p = patients.size();
  if (p < 3) {
    throw ContractError("split_by_patient: need at least 3 distinct patients, got " + std::to_string(p));
  }

  Rng rng(derive_seed(seed, 0x5eed5));
  for (std::size_t i = p - 1; i > 0; --i) std::swap(patients[i], patients[uniform_index(rng, i + 1)]);

  auto count = [p](double f) { return static_cast<std::size_t>(std::llround(f * static_cast<double>(p))); };
  std::size_t n_train = std::max<std::size_t>(1, count(fractions[0]));
  std::size_t n_val = std::max<std::size_t>(1, count(fractions[1]));
  while (n_train + n_val > p - 1) {
    if (n_train >= n_val && n_train > 1) --n_train;
    else --n_val;
  }

  std::map<std::string, int> bucket;
  for (std::size_t i = 0; i < p; ++i) bucket[patients[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);

  DatasetSplit split;
  for (const auto& s : samples) {
    auto& dest = bucket[s.patient_id] == 0 ? split.train : (bucket[s.patient_id] == 1 ? split.val : split.test);
    dest.push_back(s.id());
  }
  return split;
}

void check_disjoint(const DatasetSplit& split, std::span<const PairedSample> samples) {
  std::map<std::string, std::string> patient_of;
  for (const auto& s : samples) patient_of[s.id()] = s.patient_id;
  std::map<std::string, int> sample_owner;
  std::map<std::string, int> patient_owner;
  const std::array<const std::vector<std::string>*, 3> parts{&split.train, &split.val, &split.test};
  for (int k = 0; k < 3; ++k) {
    for (const auto& id : *parts[k]) {
      auto [it, fresh] = sample_owner.emplace(id, k);
      if (!fresh && it->second != k) throw ContractError("split guard: sample " + id + " appears in two splits");
      auto pit = patient_of.find(id);
      if (pit == patient_of.end()) continue;
      auto [jt, pfresh] = patient_owner.emplace(pit->second, k);
      if (!pfresh && jt->second != k) {
        throw ContractError("split guard: patient " + pit->second + " appears in two splits");
      }
    }
  }
}

std::string encode_labels(std::span<const LabelRecord> records) {
  std::ostringstream out;
  out << "patient_id,timepoint,rater_id,endpoint,score\n";
  for (const auto& r : records) {
    out << r.patient_id << ',' << r.timepoint << ',' << r.rater_id << ',' << endpoint_name(r.endpoint) << ','
        << r.score << '\n';
  }
  return out.str();
}

std::vector<LabelRecord> decode_labels(std::string_view text) {
  std::vector<LabelRecord> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    const std::size_t line_start = pos;
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line_no == 1 && line.starts_with("patient_id")) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5) {
      throw ParseError("label line " + std::to_string(line_no) + ": expected 5 fields, got " +
                           std::to_string(fields.size()),
                       line_start);
    }
    LabelRecord rec;
    rec.patient_id = std::string(fields[0]);
    rec.rater_id = std::string(fields[2]);
    auto parse_int = [&](std::string_view f, const char* name) {
      int v = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError("label line " + std::to_string(line_no) + ": malformed " + name + " '" +
                             std::string(f) + "'",
                         line_start);
      }
      return v;
    };
    rec.timepoint = parse_int(fields[1], "timepoint");
    try {
      rec.endpoint = parse_endpoint(fields[3]);
    } catch (const ConfigError& e) {
      throw ParseError("label line " + std::to_string(line_no) + ": " + e.what(), line_start);
    }
    rec.score = parse_int(fields[4], "score");
    if (rec.score < 0 || rec.score >= num_classes(rec.endpoint)) {
      throw ValidationError("label line " + std::to_string(line_no) + ": score " + std::to_string(rec.score) +
                            " outside [0, " + std::to_string(num_classes(rec.endpoint) - 1) + "] for " +
                            std::string(endpoint_name(rec.endpoint)));
    }
    if (rec.patient_id.empty() || rec.rater_id.empty()) {
      throw ParseError("label line " + std::to_string(line_no) + ": empty identifier", line_start);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_labels(std::span<const LabelRecord> records, const std::filesystem::path& path) {
  write_file(path, encode_labels(records));
}

std::vector<LabelRecord> read_labels(const std::filesystem::path& path) { return decode_labels(read_file(path)); }

}  // namespace stainfuse
