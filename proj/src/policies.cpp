#include "dpl/policies.hpp"

#include <cmath>

#include "dpl/common.hpp"
#include "dpl/envs.hpp"

namespace dpl::policies {

using envs::kAlphaBump;
using envs::kBetaMode;
using envs::kC0;
using envs::kNu;

GridPolicy make_uniform_grid(int n_nodes, double lo, double hi) {
  require(n_nodes >= 2 && hi > lo, "make_uniform_grid: bad arguments");
  GridPolicy p;
  p.nodes = Eigen::VectorXd::LinSpaced(n_nodes, lo, hi);
  p.log_weights = Eigen::VectorXd::Constant(n_nodes, -std::log(double(n_nodes)));
  return p;
}

namespace {

void renormalize(Eigen::VectorXd& lw) {
  const double m = lw.maxCoeff();
  const double lse = m + std::log((lw.array() - m).exp().sum());
  lw.array() -= lse;
}

}  // namespace

GridPolicy grid_softmax_update(const GridPolicy& policy, const Eigen::VectorXd& qhat,
                               double eta, double gamma) {
  require(qhat.size() == policy.nodes.size(), "grid_softmax_update: size mismatch");
  require(qhat.allFinite(), "grid_softmax_update: non-finite qhat");
  GridPolicy out = policy;
  out.log_weights.array() += (eta / (1.0 - gamma)) * qhat.array();
  renormalize(out.log_weights);
  return out;
}

Eigen::VectorXd grid_probabilities(const GridPolicy& policy) {
  return policy.log_weights.array().exp();
}

double sample_grid(const GridPolicy& policy, Rng& rng) {
  const Eigen::VectorXd probs = grid_probabilities(policy);
  const double u = rand_uniform(rng);
  double cum = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    cum += probs(i);
    if (u <= cum) return policy.nodes(i);
  }
  return policy.nodes(policy.nodes.size() - 1);
}

double grid_mass_within(const GridPolicy& policy, double center, double radius) {
  const Eigen::VectorXd probs = grid_probabilities(policy);
  double mass = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    if (std::abs(policy.nodes(i) - center) <= radius) mass += probs(i);
  return mass;
}

double sample_gaussian(const GaussianPolicy1D& policy, Rng& rng, double bound) {
  require(policy.sigma2 > 0.0 && std::isfinite(policy.sigma2),
          "sample_gaussian: invalid variance");
  const double a = policy.mu + std::sqrt(policy.sigma2) * rand_normal(rng);
  return std::clamp(a, -bound, bound);
}

double gaussian_expected_start_reward(double mu, double sigma2) {
  const double s = 1.0 + 2.0 * kAlphaBump * sigma2;
  const double inv_sqrt = 1.0 / std::sqrt(s);
  const double dm = mu - kBetaMode;
  const double dp = mu + kBetaMode;
  return -kNu * (mu * mu + sigma2) +
         kC0 * inv_sqrt * std::exp(-kAlphaBump * dm * dm / s) +
         kC0 * inv_sqrt * std::exp(-kAlphaBump * dp * dp / s);
}

double gaussian_expected_start_reward_dmu(double mu, double sigma2) {
  const double s = 1.0 + 2.0 * kAlphaBump * sigma2;
  const double dm = mu - kBetaMode;
  const double dp = mu + kBetaMode;
  const double em = std::exp(-kAlphaBump * dm * dm / s);
  const double ep = std::exp(-kAlphaBump * dp * dp / s);
  return -2.0 * kNu * mu - 2.0 * kC0 * kAlphaBump * dm / std::pow(s, 1.5) * em -
         2.0 * kC0 * kAlphaBump * dp / std::pow(s, 1.5) * ep;
}

double gaussian_expected_start_reward_dsigma2(double mu, double sigma2) {
  const double s = 1.0 + 2.0 * kAlphaBump * sigma2;
  const double dm = mu - kBetaMode;
  const double dp = mu + kBetaMode;
  const double em = std::exp(-kAlphaBump * dm * dm / s);
  const double ep = std::exp(-kAlphaBump * dp * dp / s);
  const double s52 = std::pow(s, 2.5);
  return -kNu +
         kC0 * kAlphaBump * (2.0 * kAlphaBump * dm * dm - s) / s52 * em +
         kC0 * kAlphaBump * (2.0 * kAlphaBump * dp * dp - s) / s52 * ep;
}

double gaussian_kl_objective_sa(double mu, double sigma2, double mu_prev,
                                double sigma2_prev, double eta, double gamma) {
  require(sigma2 > 0.0 && sigma2_prev > 0.0,
          "gaussian_kl_objective_sa: variances must be positive");
  const double cq = eta / (1.0 - gamma);
  const double dmu = mu - mu_prev;
  return 0.5 * std::log(sigma2_prev / sigma2) +
         (sigma2 + dmu * dmu) / (2.0 * sigma2_prev) - 0.5 -
         cq * gaussian_expected_start_reward(mu, sigma2);
}

KlGrad gaussian_kl_grad_sa(double mu, double sigma2, double mu_prev,
                           double sigma2_prev, double eta, double gamma) {
  require(sigma2 > 0.0 && sigma2_prev > 0.0,
          "gaussian_kl_grad_sa: variances must be positive");
  const double cq = eta / (1.0 - gamma);
  KlGrad g;
  g.dmu = (mu - mu_prev) / sigma2_prev -
          cq * gaussian_expected_start_reward_dmu(mu, sigma2);
  g.dsigma2 = -0.5 / sigma2 + 0.5 / sigma2_prev -
              cq * gaussian_expected_start_reward_dsigma2(mu, sigma2);
  return g;
}

GaussianPolicy1D gaussian_project_sa(const GaussianPolicy1D& prev, double eta,
                                     double gamma) {
  require(std::abs(prev.mu) < 1e-9, "gaussian_project_sa: requires zero mean");
  require(prev.sigma2 > 0.0, "gaussian_project_sa: variance must be positive");
  const double cq = eta / (1.0 - gamma);
  const double inv_prev = 1.0 / prev.sigma2;
  double x = prev.sigma2;
  for (int it = 0; it < 10000; ++it) {
    const double g = -gaussian_expected_start_reward_dsigma2(0.0, x);
    const double next = 1.0 / (inv_prev + 2.0 * cq * g);
    if (std::abs(next - x) <= 1e-12) return {0.0, next};
    x = next;
  }
  throw std::runtime_error("gaussian_project_sa: fixed point did not converge");
}

GaussianPolicy1D gaussian_project_mc(const GaussianPolicy1D& prev,
                                     const std::function<double(double)>& qhat,
                                     double eta, double gamma, int n_samples,
                                     int n_gd_steps, double step_size, Rng& rng) {
  require(prev.sigma2 > 0.0, "gaussian_project_mc: variance must be positive");
  require(n_samples >= 1000, "gaussian_project_mc: need at least 1e3 samples");
  const double cq = eta / (1.0 - gamma);

  Eigen::VectorXd z(n_samples);
  for (int i = 0; i < n_samples; ++i) z(i) = rand_normal(rng);

  // Objective in (mu, log sigma2): the Gaussian-to-Gaussian divergence is
  // closed form; only the energy expectation is estimated with the common
  // random numbers.
  double mu = prev.mu;
  double logs2 = std::log(prev.sigma2);
  const double fd_h = 1e-5;
  for (int step = 0; step < n_gd_steps; ++step) {
    const double s2 = std::exp(logs2);
    const double sigma = std::sqrt(s2);
    double energy_dmu = 0.0;
    double energy_dlogs2 = 0.0;
    for (int i = 0; i < n_samples; ++i) {
      const double a = mu + sigma * z(i);
      const double dq = (qhat(a + fd_h) - qhat(a - fd_h)) / (2.0 * fd_h);
      energy_dmu += dq;
      energy_dlogs2 += dq * 0.5 * sigma * z(i);
    }
    energy_dmu /= n_samples;
    energy_dlogs2 /= n_samples;
    const double gmu = (mu - prev.mu) / prev.sigma2 - cq * energy_dmu;
    const double glogs2 = 0.5 * (s2 / prev.sigma2 - 1.0) - cq * energy_dlogs2;
    mu -= step_size * gmu;
    logs2 -= step_size * glogs2;
    if (!std::isfinite(mu) || !std::isfinite(logs2))
      throw std::runtime_error("gaussian_project_mc: diverged");
  }
  return {mu, std::exp(logs2)};
}

}  // namespace dpl::policies
