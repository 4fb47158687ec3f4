// Copyright 2026 The Tustin-Net Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TUSTIN_CONFIG_H_
#define TUSTIN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tustin {

// Flat `key = value` configuration. Lines starting with '#' and anything
// after a '#' on a value line are comments. Later keys override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig Parse(std::string_view text);
  static KeyValueConfig Load(const std::filesystem::path& path);

  bool Has(const std::string& key) const;

  // Throw ConfigError when the key is missing or malformed.
  double GetDouble(const std::string& key) const;
  std::int64_t GetInt(const std::string& key) const;
  std::uint64_t GetUint(const std::string& key) const;
  bool GetBool(const std::string& key) const;
  const std::string& GetString(const std::string& key) const;
  // Comma or whitespace separated list of numbers.
  std::vector<double> GetVector(const std::string& key) const;

  double GetDouble(const std::string& key, double fallback) const;
  std::int64_t GetInt(const std::string& key, std::int64_t fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;
  std::string GetString(const std::string& key,
                        const std::string& fallback) const;

  void Set(const std::string& key, const std::string& value);

  // Deterministic `key = value` rendering, sorted by key.
  std::string ToText() const;

  const std::map<std::string, std::string>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::string> entries_;
};

// 64-bit FNV-1a, used for provenance hashes.
std::uint64_t Fnv1a64(std::string_view bytes);

}  // namespace tustin

#endif  // TUSTIN_CONFIG_H_
