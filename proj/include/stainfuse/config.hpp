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

// Layered key = value configuration. Every key has a registered default;
// files and --set overrides are applied on top in order. Keys of the form
// grid.<key> hold "|"-separated alternatives for grid search.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace stainfuse {

enum class ValueKind { Int, Double, Bool, String };

struct ConfigKey {
  std::string name;
  ValueKind kind;
  std::string default_value;
  std::string help;
};

/// Registry of all recognised keys in display order.
const std::vector<ConfigKey>& config_keys();

class Config {
 public:
  /// All keys at their defaults.
  Config();

  /// Parse `key = value` lines; `source` prefixes diagnostics ("file:line: ...").
  void load_text(std::string_view text, const std::string& source);
  void load_file(const std::filesystem::path& path);
  /// One "key=value" override.
  void apply_override(std::string_view assignment);
  /// Validates the key and the value's type; throws ConfigError.
  void set(const std::string& key, const std::string& value, const std::string& origin = "");

  bool is_set_explicitly(const std::string& key) const { return explicit_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  /// grid.<key> entries as key -> alternatives.
  std::map<std::string, std::vector<std::string>> grid() const;
  /// Non-grid entries in registry order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Keys assigned by a file or override (for layering one config on another).
  const std::map<std::string, std::string>& explicit_values() const { return explicit_; }

  /// `key = value` lines for every key, grid entries last.
  std::string render() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> explicit_;
};

}  // namespace stainfuse
