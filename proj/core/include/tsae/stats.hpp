#pragma once

#include <span>
#include <vector>

namespace tsae {

double mean(std::span<const double> x);

/// Pearson correlation; 0 when either series has (near) zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Fractional ranks (ties share their average rank), 1-based.
std::vector<double> ranks(std::span<const double> x);

double spearman(std::span<const double> x, std::span<const double> y);

/// Leading principal direction of row-major `points` (n x dim) by power iteration.
std::vector<double> principal_direction(std::span<const double> points, std::size_t dim);

}  // namespace tsae
