#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpl/envs.hpp"
#include "dpl/rng.hpp"

namespace dpl::metrics {

struct Histogram {
  std::vector<double> edges;  // n_bins + 1, sorted
  std::vector<long> counts;   // n_bins
};

// Samples outside [lo, hi] are clipped into the end bins so masses sum to 1.
Histogram make_histogram(const std::vector<double>& samples, int n_bins, double lo,
                         double hi);

// Half the L1 distance between the two binned empirical distributions.
double tv_hist(const std::vector<double>& samples_p,
               const std::vector<double>& samples_q, int n_bins, double lo,
               double hi);

// TV between binned samples and a (possibly unnormalized) density, which is
// normalized internally by quadrature over [lo, hi].
double tv_vs_density(const std::vector<double>& samples,
                     const std::function<double(double)>& density, int n_bins,
                     double lo, double hi);

// Fraction of samples within `radius` of each center.
std::vector<double> mode_mass(const std::vector<double>& samples,
                              const std::vector<double>& centers, double radius);

// Largest unilateral improvement available to any agent, with best responses
// restricted to constant grid actions and values estimated by Monte Carlo
// rollouts with common random numbers. Floored at zero.
double ne_gap_grid(const envs::Env& env,
                   const std::vector<std::function<double(Rng&)>>& samplers,
                   const Eigen::VectorXd& grid, int n_eval, std::uint64_t seed);

// Appends rows keyed by (experiment_id, epoch, metric, value).
class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream& os);
  void row(const std::string& experiment_id, long epoch, const std::string& metric,
           double value);

 private:
  std::ostream& os_;
};

}  // namespace dpl::metrics
