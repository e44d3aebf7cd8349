#pragma once

#include <functional>
#include <stdexcept>

namespace dpl {

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Adaptive Simpson integration to an absolute tolerance. The interval is first
// split into `init_panels` uniform panels so that narrow features away from
// panel midpoints are still detected.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol, int max_depth = 60, int init_panels = 32);

}  // namespace dpl
