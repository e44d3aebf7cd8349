#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dpl/common.hpp"

namespace dpl {

inline MeanSe mean_se(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / xs.size();
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / (xs.size() - 1);
  return {mean, std::sqrt(var / xs.size())};
}

// Linear-interpolation quantile on a copy of the data.
inline double quantile(std::vector<double> xs, double q) {
  require(!xs.empty(), "quantile: empty input");
  std::sort(xs.begin(), xs.end());
  const double pos = q * (xs.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - lo;
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

inline double median(const std::vector<double>& xs) { return quantile(xs, 0.5); }

inline double iqr(const std::vector<double>& xs) {
  return quantile(xs, 0.75) - quantile(xs, 0.25);
}

}  // namespace dpl
