// Copyright 2026 The prvq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <set>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "prvq/corpus.hpp"
#include "prvq/error.hpp"
#include "prvq/model.hpp"
#include "prvq/signal.hpp"
#include "prvq/trainer.hpp"

namespace prvq::config {

using Json = nlohmann::ordered_json;

/// Strict reader for one JSON object: type mismatches and, on finish(),
/// unknown keys raise ConfigError naming the full key path.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path);

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!matches<T>(*it)) throw ConfigError(where(key) + ": expected " + type_name<T>() + ", found " + it->type_name());
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + ": expected " + type_name<T>() + ", found " + it->type_name());
    }
  }
  /// Sub-object, or nullptr when absent.
  const Json* object(const char* key);
  /// Any value, unchecked, or nullptr when absent.
  const Json* raw(const char* key);
  void finish() const;
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <typename T>
  static bool matches(const Json& v) {
    if constexpr (std::is_same_v<T, bool>) return v.is_boolean();
    else if constexpr (std::is_unsigned_v<T>) return v.is_number_unsigned();
    else if constexpr (std::is_integral_v<T>) return v.is_number_integer();
    else if constexpr (std::is_floating_point_v<T>) return v.is_number();
    else if constexpr (std::is_same_v<T, std::string>) return v.is_string();
    else return true;
  }
  template <typename T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "boolean";
    else if constexpr (std::is_integral_v<T>) return "integer";
    else if constexpr (std::is_floating_point_v<T>) return "number";
    else if constexpr (std::is_same_v<T, std::string>) return "string";
    else return "value";
  }
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json to_json(const signal::FeatureConfig& c);
Json to_json(const model::ModelConfig& c);
Json to_json(const train::TrainConfig& c);
/// Without the feature config, which lives at the top level of a run config.
Json to_json(const corpus::SynthSpec& c);

/// Missing keys keep the values already in `out`. `path` prefixes error messages.
void from_json(const Json& j, signal::FeatureConfig& out, const std::string& path = "features");
void from_json(const Json& j, model::ModelConfig& out, const std::string& path = "model");
void from_json(const Json& j, train::TrainConfig& out, const std::string& path = "train");
/// Validation uses the features already present in `out`.
void from_json(const Json& j, corpus::SynthSpec& out, const std::string& path = "synth");

}  // namespace prvq::config
