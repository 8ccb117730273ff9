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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stainfuse/rng.hpp"
#include "stainfuse/tensor.hpp"

namespace stainfuse {

/// Named trainable tensors in insertion order.
class ParamStore {
 public:
  /// Registers `init` under `name` and marks it as requiring gradients.
  Tensor& add(const std::string& name, Tensor init);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);

  std::span<Tensor> tensors() { return tensors_; }
  std::span<const Tensor> tensors() const { return tensors_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t parameter_count() const;

  void zero_grad();
  /// Overwrite values (not identities) from a store with the same layout.
  void assign_values(const ParamStore& other);
  /// Deep copy with fresh tensor identities.
  ParamStore clone() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Glorot-uniform fan_in x fan_out matrix.
Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out);

/// x * w (+ b broadcast over rows).
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w);

/// Versioned container of metadata strings and named f64 tensors.
struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace stainfuse
