#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace dpl {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline bool is_finite(double x) { return std::isfinite(x); }

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(long successes, long n, double z = 1.959963984540054) {
  require(n > 0, "wilson_interval: n must be positive");
  const double p = static_cast<double>(successes) / static_cast<double>(n);
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = p + z2 / (2.0 * n);
  const double rad = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {(center - rad) / denom, (center + rad) / denom};
}

}  // namespace dpl
