#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tsae/encoder.hpp"
#include "tsae/numerics.hpp"

namespace tsae {

/// Lag series whose (population) variance falls below this are treated as
/// uncorrelated: r := 0 with zero gradient.
inline constexpr double kVarianceGuard = 1e-12;

/// Latents of consecutive (stride-1) windows taken from one cycle.
struct LatentBatch {
  std::string cell_id;
  std::size_t cycle_index = 0;
  std::vector<LatentState> latents;

  std::size_t dimension() const noexcept { return latents.empty() ? 0 : latents.front().size(); }
  std::vector<double> feature(std::size_t i) const;
  void validate(std::size_t n_xs) const;
};

struct LossBreakdown {
  double pred = 0.0;
  double corr = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

/// Mean of squared errors over every entry.
double mse_pred_loss(const RealMatrix& predictions, const RealMatrix& targets);
/// d(mse)/d(predictions).
RealMatrix mse_pred_loss_grad(const RealMatrix& predictions, const RealMatrix& targets);

/// Pearson correlation between x[1..] and x[..T-1], each centred on its own mean.
double lag1_autocorrelation(std::span<const double> series);
double lag1_autocorrelation(const LatentBatch& batch, std::size_t feature);
/// d r / d x for the series above (zero inside the variance guard).
std::vector<double> lag1_autocorrelation_grad(std::span<const double> series);

/// -sum_i |mean_over_groups(r_i)|, bounded in [-n_xs, 0].
double correlation_loss(std::span<const LatentBatch> groups, std::size_t n_xs);

/// Gradient of `upstream * correlation_loss` with respect to every latent entry:
/// one `[T x n_xs]` matrix per group.
std::vector<RealMatrix> correlation_loss_backward(std::span<const LatentBatch> groups, std::size_t n_xs,
                                                  double upstream = 1.0);

LossBreakdown total_loss(double pred, double corr, double lambda);

}  // namespace tsae
