#pragma once

#include <Eigen/Dense>
#include <functional>

#include "dpl/rng.hpp"

namespace dpl::policies {

// Discretized softmax policy over a fixed action grid. log_weights are kept
// normalized (logsumexp == 0).
struct GridPolicy {
  Eigen::VectorXd nodes;
  Eigen::VectorXd log_weights;
};

GridPolicy make_uniform_grid(int n_nodes = 401, double lo = -2.0, double hi = 2.0);

// Exact energy-based reweighting within the grid class:
// log_weights += eta/(1-gamma) * qhat, then renormalize.
GridPolicy grid_softmax_update(const GridPolicy& policy, const Eigen::VectorXd& qhat,
                               double eta, double gamma);

Eigen::VectorXd grid_probabilities(const GridPolicy& policy);
double sample_grid(const GridPolicy& policy, Rng& rng);
// Probability mass on nodes within `radius` of `center`.
double grid_mass_within(const GridPolicy& policy, double center, double radius);

struct GaussianPolicy1D {
  double mu = 0.0;
  double sigma2 = 1.0;
};

double sample_gaussian(const GaussianPolicy1D& policy, Rng& rng, double bound);

// Closed form of E_{a~N(mu,sigma2)}[r_start(a)] and its partials.
double gaussian_expected_start_reward(double mu, double sigma2);
double gaussian_expected_start_reward_dmu(double mu, double sigma2);
double gaussian_expected_start_reward_dsigma2(double mu, double sigma2);

// KL(N(mu,sigma2) || prev * exp(eta/(1-gamma) Qhat) / Z) on the start state,
// with the log-partition constant dropped and Qhat the start-reward oracle.
double gaussian_kl_objective_sa(double mu, double sigma2, double mu_prev,
                                double sigma2_prev, double eta, double gamma);

struct KlGrad {
  double dmu = 0.0;
  double dsigma2 = 0.0;
};

KlGrad gaussian_kl_grad_sa(double mu, double sigma2, double mu_prev,
                           double sigma2_prev, double eta, double gamma);

// Stationary point of the objective above in the zero-mean regime, found by
// damped fixed-point iteration on 1/sigma^2 to abs tol 1e-12.
GaussianPolicy1D gaussian_project_sa(const GaussianPolicy1D& prev, double eta,
                                     double gamma);

// Generic projection: reparameterized gradient descent on (mu, log sigma2)
// against a black-box energy, with common random numbers drawn once from rng.
GaussianPolicy1D gaussian_project_mc(const GaussianPolicy1D& prev,
                                     const std::function<double(double)>& qhat,
                                     double eta, double gamma, int n_samples,
                                     int n_gd_steps, double step_size, Rng& rng);

}  // namespace dpl::policies
