#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tsae/data.hpp"
#include "tsae/training.hpp"

namespace tsae {

/// Maps a normalized window to n_b normalized voltage predictions.
using Predictor = std::function<std::vector<double>(const WindowSample&)>;

Predictor model_predictor(const Model& model);

struct CycleMetrics {
  std::string cell_id;
  std::size_t cycle_index = 0;
  std::size_t windows = 0;
  double rmse_v = 0.0;
  double maxabs_v = 0.0;
  double persistence_rmse_v = 0.0;
};

/// Signed prediction errors (predicted - true), volts.
struct ErrorHistogram {
  double lo_v = 0.0;
  double bin_width_v = 0.0;
  std::vector<std::size_t> counts;
};

struct PredictionPoint {
  std::size_t cycle_index = 0;
  std::size_t step = 0;  // sample index within the cycle
  double t_s = 0.0;
  double y_true_v = 0.0;
  double y_pred_v = 0.0;
};

struct PredictionReport {
  std::vector<CycleMetrics> cycles;
  double rmse_v = 0.0;    // sqrt of the window-weighted mean of per-cycle MSE
  double maxabs_v = 0.0;  // maximum absolute error, not mean absolute error
  double persistence_rmse_v = 0.0;
  std::size_t horizon = 0;
  ErrorHistogram histogram;
  std::vector<PredictionPoint> points;
};

/// Non-overlapping windows (stride n_a + n_b) over every cycle of a
/// normalized dataset; errors are measured in denormalized volts.
PredictionReport rollout_metrics(const Predictor& predictor, const Dataset& normalized, std::size_t n_a,
                                 std::size_t n_b, std::size_t threads = 1, std::size_t histogram_bins = 40);
PredictionReport rollout_metrics(const ModelBundle& bundle, const Dataset& raw, std::size_t threads = 1);

/// Coulomb-counting stand-in when a cycle has no recorded SOC.
struct SocProxy {
  double soc_start = 0.8;
  double q_nom_ah = 4.85;
};

/// Per-sample SOC: recorded truth when present, otherwise the proxy.
/// `stats` is required when the cycle is normalized.
std::vector<double> soc_labels(const CycleSeries& cycle, const NormalizationStats* stats, const SocProxy& proxy = {});

struct LatentPoint {
  std::string cell_id;
  std::size_t cycle_index = 0;
  std::size_t window_start = 0;
  double soc = 0.0;      // at the window's last history sample
  double theta_q = 1.0;  // NaN-free; 1.0 when unknown
  bool has_truth = false;
  std::vector<double> latent;
};

/// Per cycle, the latent of the window whose end SOC is nearest `soc_target`
/// (within `tolerance`). Cycles without a qualifying window are omitted.
std::vector<LatentPoint> latent_at_fixed_soc(const Model& model, const Dataset& normalized, double soc_target,
                                             double tolerance, const SocProxy& proxy = {}, std::size_t threads = 1);

/// Stride-1 latents over one cycle of `normalized`.
std::vector<LatentPoint> latent_across_soc(const Model& model, const Dataset& normalized, std::size_t cycle_position,
                                           const SocProxy& proxy = {}, std::size_t stride = 1);

struct AlignmentReport {
  std::vector<double> pearson_soc;
  std::vector<double> spearman_soc;
  std::vector<double> pearson_theta_q;
  std::vector<double> spearman_theta_q;
  double best_abs_pearson_soc = 0.0;
  double best_abs_pearson_theta_q = 0.0;
};

AlignmentReport latent_alignment(std::span<const LatentPoint> points);

/// Mean over trajectories of each feature's Pearson correlation with SOC,
/// then the best |mean| over features.
double within_cycle_soc_alignment(std::span<const std::vector<LatentPoint>> trajectories);

/// Best |Spearman| against cycle index over the latent features and their
/// leading principal direction.
double cycle_ordering_strength(std::span<const LatentPoint> points);

/// Lag-1 autocorrelation of each latent feature along `trajectory`.
std::vector<double> trajectory_lag1(std::span<const LatentPoint> trajectory);

struct LatentReport {
  std::size_t n_xs = 0;
  std::vector<LatentPoint> fixed_soc;
  std::vector<LatentPoint> trajectory;
  std::vector<double> lag1;
  AlignmentReport alignment;
};

/// Latents of the evaluation windows (one per non-overlapping window).
std::vector<LatentPoint> evaluation_latents(const Model& model, const Dataset& normalized, const SocProxy& proxy = {});

void write_predictions_csv(const PredictionReport& report, const std::filesystem::path& path);
void write_metrics_csv(const PredictionReport& report, const std::filesystem::path& path);
void write_latents_csv(std::span<const LatentPoint> points, std::size_t n_xs, const std::filesystem::path& path);

/// predictions.csv, metrics.csv and latents.csv under `dir`.
void export_report(const PredictionReport& report, std::span<const LatentPoint> latents, std::size_t n_xs,
                   const std::filesystem::path& dir);

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);

}  // namespace tsae
