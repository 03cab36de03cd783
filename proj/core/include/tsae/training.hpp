#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsae/data.hpp"
#include "tsae/decoder.hpp"
#include "tsae/encoder.hpp"
#include "tsae/loss.hpp"
#include "tsae/numerics.hpp"

namespace tsae {

struct TrainConfig {
  std::size_t n_a = 500;
  std::size_t n_b = 200;
  std::size_t n_xs = 3;
  double lambda = 0.1;
  double learning_rate = 1e-3;
  std::size_t batch_groups = 4;       // cycle groups per batch
  std::size_t run_length = 16;        // consecutive windows per group
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 42;
  std::size_t groups_per_epoch = 0;   // 0 = every available group
  std::size_t val_max_windows = 0;    // 0 = every validation window
  double clip_norm = 5.0;
  std::size_t clip_min_horizon = 32;  // clipping only applies when n_b exceeds this
  std::vector<ConvLayerSpec> encoder_layers;  // empty = default schedule
  std::size_t threads = 1;

  EncoderConfig encoder_config() const;
  DecoderConfig decoder_config() const;
  bool clipping_active() const noexcept { return clip_norm > 0.0 && n_b > clip_min_horizon; }
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Encoder + GRU decoder over one named parameter store. Registration order
/// (encoder layers, encoder head, decoder gates, decoder head) fixes the
/// optimizer and reduction order.
class Model {
 public:
  Model(EncoderConfig encoder, DecoderConfig decoder);
  static Model create(const TrainConfig& cfg);

  const Encoder& encoder() const noexcept { return encoder_; }
  const Decoder& decoder() const noexcept { return decoder_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }

  void init_params(std::uint64_t seed);
  /// Replaces the parameters after checking names and shapes.
  void set_params(ParamStore params);

  LatentState encode(const RealMatrix& history) const;
  std::vector<double> predict(const WindowSample& window) const;

 private:
  Encoder encoder_;
  Decoder decoder_;
  ParamStore params_;
};

struct Group {
  std::uint32_t cycle = 0;
  std::vector<std::size_t> windows;  // indices into the WindowSet, consecutive starts
};
using Batch = std::vector<Group>;

/// Tiles every maximal run of stride-1-consecutive windows into groups of
/// `run_length`, shuffles the groups with `epoch_seed`, optionally keeps the
/// first `groups_per_epoch`, and packs `batch_groups` groups per batch.
std::vector<Batch> batch_sampler(const WindowSet& windows, const TrainConfig& cfg, std::uint64_t epoch_seed);

struct BatchOptions {
  double lambda = 0.0;
  bool include_correlation = true;
  std::size_t threads = 1;
};

/// Forward + reverse pass over one batch. Gradients accumulate into
/// `params`: per-group buffers are summed in batch order, and within a group
/// windows contribute in order (decoder first, then encoder).
LossBreakdown compute_batch_gradients(const Model& model, ParamStore& params, const WindowSet& windows,
                                      const Batch& batch, const BatchOptions& options);

/// Forward-only objective of the same batch for `params`.
LossBreakdown batch_loss(const Model& model, const ParamStore& params, const WindowSet& windows, const Batch& batch,
                         double lambda);

/// Mean squared prediction error over (a deterministic, evenly spaced subset of) `windows`.
double prediction_loss(const Model& model, const WindowSet& windows, std::size_t max_windows = 0);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_pred = 0.0;
  double train_corr = 0.0;
  double val_pred = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  // L_pred of the returned parameters over the training windows, evenly
  // subsampled to val_max_windows. Unlike the per-epoch means this is not
  // smeared across mid-epoch parameter updates.
  double final_train_pred = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  Model model;  // best-validation parameters
  TrainHistory history;
  AdamState optimizer;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam over the combined objective with validation early stopping.
/// `resume` continues a previous run's parameters, optimizer and history.
TrainResult train(const WindowSet& train_windows, const WindowSet& val_windows, const TrainConfig& cfg,
                  const TrainResult* resume = nullptr, const EpochCallback& on_epoch = {});

/// Everything needed to reload a trained model.
struct ModelBundle {
  TrainConfig config;
  NormalizationStats stats;
  ParamStore params;
  std::optional<AdamState> optimizer;
  TrainHistory history;

  Model model() const;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace tsae
