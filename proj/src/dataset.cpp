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

#include "stainfuse/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <map>
#include <memory>

#include "stainfuse/binary_io.hpp"
#include "stainfuse/errors.hpp"
#include "stainfuse/rng.hpp"

namespace stainfuse {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

std::vector<ManifestEntry> build_manifest(const fs::path& root, std::string_view exclude) {
  std::vector<ManifestEntry> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = entry.path().lexically_relative(root).generic_string();
    if (rel == exclude) continue;
    const std::string bytes = read_file(entry.path());
    out.push_back({rel, bytes.size(), sha256_hex(bytes)});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  return out;
}

std::string encode_manifest(std::span<const ManifestEntry> entries) {
  std::string out;
  for (const auto& e : entries) out += e.sha256 + '\t' + std::to_string(e.size) + '\t' + e.path + '\n';
  return out;
}

std::string artifact_stem(std::string_view patient_id, int timepoint, Modality m) {
  return std::string(patient_id) + "__t" + std::to_string(timepoint) + "__" + std::string(modality_name(m));
}

ArtifactName parse_artifact_stem(std::string_view stem) {
  const auto bad = [&] { return ParseError("malformed artifact name '" + std::string(stem) + "'", 0); };
  const auto last = stem.rfind("__");
  if (last == std::string_view::npos || last == 0) throw bad();
  const auto tpos = stem.rfind("__t", last - 1);
  if (tpos == std::string_view::npos || tpos == 0) throw bad();
  ArtifactName a;
  a.patient_id = std::string(stem.substr(0, tpos));
  const std::string_view tp = stem.substr(tpos + 3, last - tpos - 3);
  auto [p, ec] = std::from_chars(tp.data(), tp.data() + tp.size(), a.timepoint);
  if (ec != std::errc() || p != tp.data() + tp.size() || tp.empty()) throw bad();
  const std::string_view mod = stem.substr(last + 2);
  if (mod == modality_name(Modality::A)) a.modality = Modality::A;
  else if (mod == modality_name(Modality::B)) a.modality = Modality::B;
  else throw bad();
  return a;
}

std::uint64_t graph_seed(std::uint64_t master, std::string_view stem) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stem) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(master, h);
}

std::vector<PairedSample> load_dataset(const fs::path& root) {
  const fs::path graphs = root / "graphs";
  if (!fs::is_directory(graphs)) throw ValidationError("dataset " + root.string() + " has no graphs/ directory");
  std::map<std::string, PairedSample> by_id;
  std::map<std::string, int> seen;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(graphs))
    if (e.is_regular_file() && e.path().extension() == ".mgf") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const ArtifactName name = parse_artifact_stem(f.stem().string());
    const std::string id = sample_id(name.patient_id, name.timepoint);
    auto& s = by_id[id];
    s.patient_id = name.patient_id;
    s.timepoint = name.timepoint;
    ModalGraph g = read_graph(f);
    if (g.modality != name.modality) {
      throw ValidationError(f.string() + ": stored modality " + std::string(modality_name(g.modality)) +
                            " disagrees with the file name");
    }
    (name.modality == Modality::A ? s.graph_a : s.graph_b) = std::move(g);
    seen[id] |= name.modality == Modality::A ? 1 : 2;
  }
  for (const auto& [id, mask] : seen) {
    if (mask != 3) throw ValidationError("sample " + id + " lacks its modality " + (mask == 1 ? "B" : "A") + " graph");
  }
  const fs::path labels = root / "labels.csv";
  if (fs::exists(labels)) {
    for (const auto& r : read_labels(labels)) {
      auto it = by_id.find(sample_id(r.patient_id, r.timepoint));
      if (it == by_id.end()) continue;
      it->second.labels.push_back({r.rater_id, r.endpoint, r.score});
    }
  }
  std::vector<PairedSample> out;
  out.reserve(by_id.size());
  for (auto& [id, s] : by_id) out.push_back(std::move(s));
  return out;
}

}  // namespace stainfuse
