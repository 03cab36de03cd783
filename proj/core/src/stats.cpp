#include "tsae/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsae/errors.hpp"

namespace tsae {

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: series lengths differ");
  if (x.size() < 2) return 0.0;
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double n = static_cast<double>(x.size());
  if (sxx / n < 1e-24 || syy / n < 1e-24) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) r[order[k]] = avg;
    i = j;
  }
  return r;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pearson(rx, ry);
}

std::vector<double> principal_direction(std::span<const double> points, std::size_t dim) {
  if (dim == 0 || points.size() % dim != 0) throw ShapeError("principal_direction: bad shape");
  const std::size_t n = points.size() / dim;
  std::vector<double> mu(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) mu[d] += points[i * dim + d];
  }
  for (double& m : mu) m /= std::max<std::size_t>(n, 1);
  std::vector<double> cov(dim * dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = 0; b < dim; ++b) {
        cov[a * dim + b] += (points[i * dim + a] - mu[a]) * (points[i * dim + b] - mu[b]);
      }
    }
  }
  std::vector<double> v(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<double> next(dim, 0.0);
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = 0; b < dim; ++b) next[a] += cov[a * dim + b] * v[b];
    }
    const double norm = std::sqrt(std::inner_product(next.begin(), next.end(), next.begin(), 0.0));
    if (norm == 0.0) break;
    for (double& x : next) x /= norm;
    v = std::move(next);
  }
  return v;
}

}  // namespace tsae
