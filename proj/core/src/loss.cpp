#include "tsae/loss.hpp"

#include <cmath>

#include "tsae/errors.hpp"

namespace tsae {

std::vector<double> LatentBatch::feature(std::size_t i) const {
  std::vector<double> out;
  out.reserve(latents.size());
  for (const auto& l : latents) out.push_back(l.values.at(i));
  return out;
}

void LatentBatch::validate(std::size_t n_xs) const {
  if (latents.size() < 3) {
    throw ShapeError("latent batch for cycle " + std::to_string(cycle_index) + " has " +
                     std::to_string(latents.size()) + " latents; at least 3 are required");
  }
  for (const auto& l : latents) {
    if (l.size() != n_xs) throw ShapeError("latent batch entry has wrong dimension");
  }
}

double mse_pred_loss(const RealMatrix& predictions, const RealMatrix& targets) {
  if (!predictions.same_shape(targets)) {
    throw ShapeError("mse: predictions " + predictions.shape_string() + " vs targets " + targets.shape_string());
  }
  if (predictions.empty()) throw ShapeError("mse: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(predictions.size());
}

RealMatrix mse_pred_loss_grad(const RealMatrix& predictions, const RealMatrix& targets) {
  if (!predictions.same_shape(targets)) throw ShapeError("mse: shape mismatch");
  if (predictions.empty()) throw ShapeError("mse: empty batch");
  RealMatrix g(predictions.rows(), predictions.cols());
  const double scale = 2.0 / static_cast<double>(predictions.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (predictions[i] - targets[i]);
  return g;
}

namespace {

struct LagMoments {
  double mean_a = 0.0, mean_b = 0.0;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  std::size_t n = 0;
  bool degenerate = false;
};

// a_t = x[t + 1], b_t = x[t]
LagMoments lag_moments(std::span<const double> x) {
  if (x.size() < 3) {
    throw ShapeError("lag-1 autocorrelation needs at least 3 samples, got " + std::to_string(x.size()));
  }
  LagMoments m;
  m.n = x.size() - 1;
  for (std::size_t t = 0; t < m.n; ++t) {
    m.mean_a += x[t + 1];
    m.mean_b += x[t];
  }
  m.mean_a /= static_cast<double>(m.n);
  m.mean_b /= static_cast<double>(m.n);
  for (std::size_t t = 0; t < m.n; ++t) {
    const double da = x[t + 1] - m.mean_a;
    const double db = x[t] - m.mean_b;
    m.saa += da * da;
    m.sbb += db * db;
    m.sab += da * db;
  }
  const double n = static_cast<double>(m.n);
  m.degenerate = m.saa / n < kVarianceGuard || m.sbb / n < kVarianceGuard;
  return m;
}

}  // namespace

double lag1_autocorrelation(std::span<const double> series) {
  const LagMoments m = lag_moments(series);
  if (m.degenerate) return 0.0;
  return m.sab / std::sqrt(m.saa * m.sbb);
}

double lag1_autocorrelation(const LatentBatch& batch, std::size_t feature) {
  if (feature >= batch.dimension()) throw ShapeError("lag1_autocorrelation: feature index out of range");
  return lag1_autocorrelation(batch.feature(feature));
}

std::vector<double> lag1_autocorrelation_grad(std::span<const double> series) {
  const LagMoments m = lag_moments(series);
  std::vector<double> grad(series.size(), 0.0);
  if (m.degenerate) return grad;
  const double denom = std::sqrt(m.saa * m.sbb);
  const double r = m.sab / denom;
  for (std::size_t t = 0; t < m.n; ++t) {
    const double da = series[t + 1] - m.mean_a;
    const double db = series[t] - m.mean_b;
    grad[t + 1] += db / denom - r * da / m.saa;
    grad[t] += da / denom - r * db / m.sbb;
  }
  return grad;
}

namespace {

std::vector<double> mean_correlations(std::span<const LatentBatch> groups, std::size_t n_xs) {
  if (groups.empty()) throw ShapeError("correlation loss: no latent groups");
  std::vector<double> mean(n_xs, 0.0);
  for (const auto& g : groups) {
    g.validate(n_xs);
    for (std::size_t i = 0; i < n_xs; ++i) mean[i] += lag1_autocorrelation(g.feature(i));
  }
  for (double& v : mean) v /= static_cast<double>(groups.size());
  return mean;
}

}  // namespace

double correlation_loss(std::span<const LatentBatch> groups, std::size_t n_xs) {
  double acc = 0.0;
  for (double r : mean_correlations(groups, n_xs)) acc += std::abs(r);
  return -acc;
}

std::vector<RealMatrix> correlation_loss_backward(std::span<const LatentBatch> groups, std::size_t n_xs,
                                                  double upstream) {
  const std::vector<double> mean = mean_correlations(groups, n_xs);
  const double inv_groups = 1.0 / static_cast<double>(groups.size());
  std::vector<RealMatrix> grads;
  grads.reserve(groups.size());
  for (const auto& g : groups) {
    RealMatrix out(g.latents.size(), n_xs);
    for (std::size_t i = 0; i < n_xs; ++i) {
      const double sign = mean[i] > 0.0 ? 1.0 : (mean[i] < 0.0 ? -1.0 : 0.0);
      const double coeff = -upstream * sign * inv_groups;
      if (coeff == 0.0) continue;
      const std::vector<double> dr = lag1_autocorrelation_grad(g.feature(i));
      for (std::size_t t = 0; t < dr.size(); ++t) out(t, i) = coeff * dr[t];
    }
    grads.push_back(std::move(out));
  }
  return grads;
}

LossBreakdown total_loss(double pred, double corr, double lambda) {
  if (lambda < 0.0) throw ConfigError("correlation weight lambda must be non-negative");
  return {pred, corr, lambda, pred + lambda * corr};
}

}  // namespace tsae
