#pragma once

#include <span>
#include <vector>

namespace stepctl {

/// Sample Pearson correlation; 0 when either variance is below 1e-12.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson over average ranks (ties share their mean rank).
double spearman(std::span<const double> x, std::span<const double> y);

std::vector<double> average_ranks(std::span<const double> x);

double median(std::vector<double> values);

}  // namespace stepctl
