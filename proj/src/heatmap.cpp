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

#include "stainfuse/heatmap.hpp"

#include <algorithm>

#include "stainfuse/binary_io.hpp"
#include "stainfuse/errors.hpp"

namespace stainfuse {

namespace {
constexpr std::string_view kHeatmapMagic = "HMP1";
}

Heatmap::Heatmap(std::uint32_t w, std::uint32_t h, std::uint32_t c)
    : width(w), height(h), classes(c), logits({h, w, c}, 0.0), usable(static_cast<std::size_t>(w) * h, 0) {}

std::size_t Heatmap::usable_count() const {
  return static_cast<std::size_t>(std::count_if(usable.begin(), usable.end(), [](std::uint8_t m) { return m != 0; }));
}

void validate(const Heatmap& hm) {
  const std::size_t pixels = static_cast<std::size_t>(hm.width) * hm.height;
  if (hm.usable.size() != pixels) {
    throw ValidationError("heatmap mask has " + std::to_string(hm.usable.size()) + " entries for " +
                          std::to_string(pixels) + " pixels");
  }
  if (hm.logits.size() != pixels * hm.classes) {
    throw ValidationError("heatmap logits shape " + shape_string(hm.logits.shape()) + " does not match raster");
  }
  if (!hm.logits.all_finite()) throw ValidationError("heatmap logits contain NaN or Inf");
}

std::string encode_heatmap(const Heatmap& hm) {
  ByteWriter w;
  w.bytes(kHeatmapMagic);
  w.u32(hm.height);
  w.u32(hm.width);
  w.u32(hm.classes);
  for (double v : hm.logits.values()) w.f32(static_cast<float>(v));
  for (auto m : hm.usable) w.u8(m != 0 ? 1 : 0);
  return w.take();
}

Heatmap decode_heatmap(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kHeatmapMagic) throw ParseError("bad magic, expected HMP1", 0);
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t c = r.u32("classes");
  const std::uint64_t pixels = static_cast<std::uint64_t>(h) * w;
  if (pixels * c * 4 + pixels > r.remaining()) throw ParseError("truncated input while reading logits", r.offset());
  Heatmap hm(w, h, c);
  for (double& v : hm.logits.values()) v = static_cast<double>(r.f32("logits"));
  for (auto& m : hm.usable) m = r.u8("mask");
  r.expect_end("heatmap container");
  validate(hm);
  return hm;
}

void write_heatmap(const Heatmap& hm, const std::filesystem::path& path) { write_file(path, encode_heatmap(hm)); }

Heatmap read_heatmap(const std::filesystem::path& path) { return decode_heatmap(read_file(path)); }

}  // namespace stainfuse
