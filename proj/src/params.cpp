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

#include "stainfuse/params.hpp"

#include <cmath>

#include "stainfuse/binary_io.hpp"
#include "stainfuse/errors.hpp"

namespace stainfuse {

namespace {
constexpr std::string_view kCheckpointMagic = "MGCK";
constexpr std::uint16_t kCheckpointVersion = 1;
}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
  init.set_requires_grad(true);
  index_.emplace(name, tensors_.size());
  names_.push_back(name);
  tensors_.push_back(std::move(init));
  return tensors_.back();
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

const Tensor& ParamStore::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return tensors_[it->second];
}

Tensor& ParamStore::get(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return tensors_[it->second];
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

void ParamStore::assign_values(const ParamStore& other) {
  if (other.names_ != names_) throw ContractError("assign_values: parameter layouts differ");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    auto dst = tensors_[i].values();
    auto src = other.tensors_[i].values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (std::size_t i = 0; i < tensors_.size(); ++i) out.add(names_[i], tensors_[i].clone());
  return out;
}

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out}, 0.0);
  for (double& v : w.values()) v = uniform(rng, -limit, limit);
  return w;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(tape, matmul(tape, x, w), b);
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w) { return matmul(tape, x, w); }

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.u32(static_cast<std::uint32_t>(k.size()));
    w.bytes(k);
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.bytes(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto dim : t.shape()) w.u32(static_cast<std::uint32_t>(dim));
    for (double v : t.values()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kCheckpointMagic) throw ParseError("bad magic, expected MGCK", 0);
  const std::size_t version_at = r.offset();
  if (r.u16("version") != kCheckpointVersion) throw ParseError("unsupported checkpoint version", version_at);
  Checkpoint ckpt;
  const std::uint32_t meta = r.u32("metadata count");
  for (std::uint32_t i = 0; i < meta; ++i) {
    const std::string key(r.bytes(r.u32("key length"), "metadata key"));
    const std::string value(r.bytes(r.u32("value length"), "metadata value"));
    ckpt.metadata[key] = value;
  }
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.bytes(r.u32("name length"), "tensor name"));
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank > 8) throw ParseError("implausible tensor rank " + std::to_string(rank), r.offset());
    Shape shape(rank);
    std::uint64_t elements = 1;
    for (auto& dim : shape) {
      dim = r.u32("tensor dimension");
      elements *= dim;
    }
    if (elements * 8 > r.remaining()) throw ParseError("truncated input while reading tensor " + name, r.offset());
    std::vector<double> values(elements);
    for (double& v : values) v = r.f64("tensor values");
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  r.expect_end("checkpoint");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace stainfuse
