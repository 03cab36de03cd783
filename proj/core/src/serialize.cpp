#include "tsae/serialize.hpp"

#include <algorithm>
#include <cstring>

#include "tsae/errors.hpp"

namespace tsae {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& context) {
  if (!obj.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    const bool known =
        std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return std::strcmp(a, key.c_str()) == 0; });
    if (!known) throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
T require(const json& j, const char* key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(context + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(context + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace

json to_json(const ConvLayerSpec& layer) {
  return {{"in_channels", layer.in_channels},
          {"out_channels", layer.out_channels},
          {"kernel_length", layer.kernel_length},
          {"stride", layer.stride},
          {"activation", to_string(layer.activation)}};
}

ConvLayerSpec conv_layer_from_json(const json& j) {
  const std::string ctx = "encoder layer";
  reject_unknown_keys(j, {"in_channels", "out_channels", "kernel_length", "stride", "activation"}, ctx);
  ConvLayerSpec layer;
  layer.in_channels = require<std::size_t>(j, "in_channels", ctx);
  layer.out_channels = require<std::size_t>(j, "out_channels", ctx);
  layer.kernel_length = require<std::size_t>(j, "kernel_length", ctx);
  read_key(j, "stride", layer.stride, ctx);
  std::string act = "tanh";
  read_key(j, "activation", act, ctx);
  layer.activation = activation_from_string(act);
  return layer;
}

json to_json(const TrainConfig& cfg) {
  json layers = json::array();
  for (const auto& l : cfg.encoder_layers) layers.push_back(to_json(l));
  return {{"n_a", cfg.n_a},
          {"n_b", cfg.n_b},
          {"n_xs", cfg.n_xs},
          {"lambda", cfg.lambda},
          {"learning_rate", cfg.learning_rate},
          {"batch_groups", cfg.batch_groups},
          {"run_length", cfg.run_length},
          {"max_epochs", cfg.max_epochs},
          {"patience", cfg.patience},
          {"seed", cfg.seed},
          {"groups_per_epoch", cfg.groups_per_epoch},
          {"val_max_windows", cfg.val_max_windows},
          {"clip_norm", cfg.clip_norm},
          {"clip_min_horizon", cfg.clip_min_horizon},
          {"encoder_layers", layers}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  const std::string ctx = "train config";
  reject_unknown_keys(j,
                      {"n_a", "n_b", "n_xs", "lambda", "learning_rate", "batch_groups", "run_length", "max_epochs",
                       "patience", "seed", "groups_per_epoch", "val_max_windows", "clip_norm", "clip_min_horizon",
                       "encoder_layers", "threads"},
                      ctx);
  read_key(j, "n_a", cfg.n_a, ctx);
  read_key(j, "n_b", cfg.n_b, ctx);
  read_key(j, "n_xs", cfg.n_xs, ctx);
  read_key(j, "lambda", cfg.lambda, ctx);
  read_key(j, "learning_rate", cfg.learning_rate, ctx);
  read_key(j, "batch_groups", cfg.batch_groups, ctx);
  read_key(j, "run_length", cfg.run_length, ctx);
  read_key(j, "max_epochs", cfg.max_epochs, ctx);
  read_key(j, "patience", cfg.patience, ctx);
  read_key(j, "seed", cfg.seed, ctx);
  read_key(j, "groups_per_epoch", cfg.groups_per_epoch, ctx);
  read_key(j, "val_max_windows", cfg.val_max_windows, ctx);
  read_key(j, "clip_norm", cfg.clip_norm, ctx);
  read_key(j, "clip_min_horizon", cfg.clip_min_horizon, ctx);
  read_key(j, "threads", cfg.threads, ctx);
  if (j.contains("encoder_layers")) {
    if (!j["encoder_layers"].is_array()) throw ConfigError(ctx + ": key 'encoder_layers' must be an array");
    cfg.encoder_layers.clear();
    for (const auto& l : j["encoder_layers"]) cfg.encoder_layers.push_back(conv_layer_from_json(l));
  }
  return cfg;
}

json to_json(const NormalizationStats& stats) {
  auto channel = [](const ChannelStats& c) { return json{{"min", c.min}, {"max", c.max}, {"constant", c.constant}}; };
  return {{"current", channel(stats.current)}, {"voltage", channel(stats.voltage)}};
}

NormalizationStats normalization_from_json(const json& j) {
  auto channel = [](const json& c, const std::string& ctx) {
    reject_unknown_keys(c, {"min", "max", "constant"}, ctx);
    return ChannelStats{require<double>(c, "min", ctx), require<double>(c, "max", ctx),
                        require<bool>(c, "constant", ctx)};
  };
  if (!j.is_object() || !j.contains("current") || !j.contains("voltage")) {
    throw ConfigError("normalization: missing key 'current' or 'voltage'");
  }
  return {channel(j["current"], "normalization.current"), channel(j["voltage"], "normalization.voltage")};
}

}  // namespace tsae
