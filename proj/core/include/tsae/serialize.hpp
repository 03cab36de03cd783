#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "tsae/data.hpp"
#include "tsae/errors.hpp"
#include "tsae/training.hpp"

namespace tsae {

using json = nlohmann::json;

/// Throws ConfigError naming the first key of `obj` not in `allowed`.
void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& context);

/// Copies `obj[key]` into `out` when present; type mismatches name the key.
template <typename T>
void read_key(const json& obj, const char* key, T& out, const std::string& context) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(context + ": key '" + key + "' has the wrong type");
  }
}

json to_json(const ConvLayerSpec& layer);
ConvLayerSpec conv_layer_from_json(const json& j);

/// Serializes every TrainConfig field except `threads` (which never changes results).
json to_json(const TrainConfig& cfg);
/// Strict: unknown keys are rejected; missing keys keep `defaults`.
TrainConfig train_config_from_json(const json& j, TrainConfig defaults = {});

json to_json(const NormalizationStats& stats);
NormalizationStats normalization_from_json(const json& j);

}  // namespace tsae
