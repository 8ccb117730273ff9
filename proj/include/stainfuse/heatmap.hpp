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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stainfuse/tensor.hpp"

namespace stainfuse {

/// Per-pixel class logits for one stain, plus the usable-tissue mask.
struct Heatmap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t classes = 0;
  Tensor logits;                    // height x width x classes
  std::vector<std::uint8_t> usable;  // height x width, nonzero = usable tissue

  Heatmap() = default;
  Heatmap(std::uint32_t width, std::uint32_t height, std::uint32_t classes);

  double logit(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
    return logits.values()[(static_cast<std::size_t>(y) * width + x) * classes + c];
  }
  double& logit(std::uint32_t x, std::uint32_t y, std::uint32_t c) {
    return logits.values()[(static_cast<std::size_t>(y) * width + x) * classes + c];
  }
  bool is_usable(std::uint32_t x, std::uint32_t y) const {
    return usable[static_cast<std::size_t>(y) * width + x] != 0;
  }
  std::size_t usable_count() const;
};

void validate(const Heatmap& hm);

/// "HMP1", H u32, W u32, C u32, f32 logits row-major, H*W u8 mask. Logits are
/// stored as f32, so only f32-representable values round-trip exactly.
std::string encode_heatmap(const Heatmap& hm);
Heatmap decode_heatmap(std::string_view bytes);
void write_heatmap(const Heatmap& hm, const std::filesystem::path& path);
Heatmap read_heatmap(const std::filesystem::path& path);

}  // namespace stainfuse
