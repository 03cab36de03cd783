#pragma once

#include <filesystem>
#include <string>

#include "tsae/data.hpp"
#include "tsae/evaluation.hpp"
#include "tsae/serialize.hpp"
#include "tsae/training.hpp"

namespace tsae::cli {

/// Everything one command needs, read from a JSON document with sections
/// data / model / train / eval. Missing keys keep the defaults below.
struct RunConfig {
  // data
  std::string source = "synthetic";  // synthetic | csv
  std::string path;                  // csv source
  SimConfig sim;
  GenerateOptions generate;

  // model + train
  TrainConfig train;
  SplitOptions split;  // n_a / n_b are taken from `train`

  // eval
  HoldoutSpec holdout{{}, 10};
  double soc_target = 0.8;
  double soc_tolerance = 0.01;
  SocProxy soc_proxy;

  bool model_given = false;  // the document had a "model" section

  void validate() const;
};

json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Pretty JSON echo of the effective configuration.
void write_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace tsae::cli
