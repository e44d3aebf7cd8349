#include "dpl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "dpl/common.hpp"
#include "dpl/csv.hpp"
#include "dpl/quad.hpp"

namespace dpl::metrics {

Histogram make_histogram(const std::vector<double>& samples, int n_bins, double lo,
                         double hi) {
  require(n_bins >= 1 && hi > lo, "make_histogram: bad arguments");
  require(!samples.empty(), "make_histogram: empty sample set");
  Histogram h;
  h.edges.resize(n_bins + 1);
  for (int i = 0; i <= n_bins; ++i)
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / n_bins;
  h.counts.assign(n_bins, 0);
  const double scale = n_bins / (hi - lo);
  for (double x : samples) {
    int b = static_cast<int>((x - lo) * scale);
    b = std::clamp(b, 0, n_bins - 1);
    ++h.counts[b];
  }
  return h;
}

double tv_hist(const std::vector<double>& samples_p,
               const std::vector<double>& samples_q, int n_bins, double lo,
               double hi) {
  const Histogram hp = make_histogram(samples_p, n_bins, lo, hi);
  const Histogram hq = make_histogram(samples_q, n_bins, lo, hi);
  double tv = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    const double p = static_cast<double>(hp.counts[b]) / samples_p.size();
    const double q = static_cast<double>(hq.counts[b]) / samples_q.size();
    tv += std::abs(p - q);
  }
  return 0.5 * tv;
}

double tv_vs_density(const std::vector<double>& samples,
                     const std::function<double(double)>& density, int n_bins,
                     double lo, double hi) {
  const Histogram h = make_histogram(samples, n_bins, lo, hi);
  std::vector<double> bin_mass(n_bins);
  double z = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    bin_mass[b] = integrate(density, h.edges[b], h.edges[b + 1], 1e-10, 60, 8);
    z += bin_mass[b];
  }
  require(z > 0.0 && std::isfinite(z), "tv_vs_density: density integrates to zero");
  double tv = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    const double p = static_cast<double>(h.counts[b]) / samples.size();
    tv += std::abs(p - bin_mass[b] / z);
  }
  return 0.5 * tv;
}

std::vector<double> mode_mass(const std::vector<double>& samples,
                              const std::vector<double>& centers, double radius) {
  require(radius > 0.0, "mode_mass: radius must be positive");
  std::vector<double> mass(centers.size(), 0.0);
  if (samples.empty()) return mass;
  for (double x : samples)
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (std::abs(x - centers[c]) <= radius) mass[c] += 1.0;
  for (double& m : mass) m /= static_cast<double>(samples.size());
  return mass;
}

namespace {

// Discounted return of one episode; `forced` pins one agent to a constant
// action (index < 0 disables forcing).
double episode_return(const envs::Env& env,
                      const std::vector<std::function<double(Rng&)>>& samplers,
                      int forced_agent, double forced_action, Rng& rng) {
  envs::State s = env.initial_state();
  double ret = 0.0;
  double disc = 1.0;
  std::vector<double> actions(env.n_agents());
  for (int t = 0; t < env.spec().episode_horizon; ++t) {
    for (int i = 0; i < env.n_agents(); ++i)
      actions[i] = (i == forced_agent) ? forced_action : samplers[i](rng);
    const envs::StepResult r = env.step(s, actions, rng);
    ret += disc * r.reward;
    disc *= env.spec().gamma;
    if (r.done) break;
    s = r.next;
  }
  return ret;
}

double mc_value(const envs::Env& env,
                const std::vector<std::function<double(Rng&)>>& samplers,
                int forced_agent, double forced_action, int n_eval,
                std::uint64_t seed) {
  double sum = 0.0;
  for (int e = 0; e < n_eval; ++e) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(e)});
    sum += episode_return(env, samplers, forced_agent, forced_action, rng);
  }
  return sum / n_eval;
}

}  // namespace

double ne_gap_grid(const envs::Env& env,
                   const std::vector<std::function<double(Rng&)>>& samplers,
                   const Eigen::VectorXd& grid, int n_eval, std::uint64_t seed) {
  require(static_cast<int>(samplers.size()) == env.n_agents(),
          "ne_gap_grid: one sampler per agent required");
  require(n_eval >= 1, "ne_gap_grid: n_eval must be positive");
  const double j_current = mc_value(env, samplers, -1, 0.0, n_eval, seed);
  double gap = 0.0;
  for (int i = 0; i < env.n_agents(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < grid.size(); ++g)
      best = std::max(best, mc_value(env, samplers, i, grid(g), n_eval, seed));
    gap = std::max(gap, best - j_current);
  }
  return std::max(gap, 0.0);
}

MetricsWriter::MetricsWriter(std::ostream& os) : os_(os) {
  os_ << "experiment_id,epoch,metric,value\n";
}

void MetricsWriter::row(const std::string& experiment_id, long epoch,
                        const std::string& metric, double value) {
  os_ << experiment_id << ',' << epoch << ',' << metric << ',' << fmt_double(value)
      << '\n';
}

}  // namespace dpl::metrics
