#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "dpl/nn.hpp"
#include "dpl/rng.hpp"

namespace dpl::diffusion {

enum class ScheduleKind { kGeometric, kLinear };

// Forward-process variance sequence. Indexing is 1-based in the math; vectors
// store tau = 1..H at positions 0..H-1. Invariants: 0 < beta < 1, alpha_bar
// strictly decreasing, sigma2 == beta/alpha.
struct Schedule {
  int steps = 0;
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  Eigen::VectorXd alpha_bar;
  Eigen::VectorXd sigma2;
  ScheduleKind kind = ScheduleKind::kLinear;
};

// beta_1 = H^{-c'}, beta_{tau+1} = (c'' ln H / H) * min(beta_1 (1 + c'' ln H / H)^tau, 1).
// Requires H >= 3 c'' ln H.
Schedule make_geometric_schedule(int steps, double c_prime, double c_dprime);

Schedule make_linear_schedule(int steps, double beta_start, double beta_end);

void write_schedule_csv(const Schedule& s, std::ostream& os);

// Sum_tau beta_tau / (alpha_tau (1 - alpha_bar_tau)); bounded by
// 1.5 (c' + c'') ln H for the geometric schedule.
double schedule_weight_sum(const Schedule& s);

// DDPM policy head: the network consumes [state features, action, tau/H,
// sqrt(1-alpha_bar_tau)] and predicts the scaled noise eps/sqrt(1-alpha_bar).
// Sampling runs the reverse recursion with the prediction subtracted.
struct DiffusionPolicy {
  nn::Mlp score_net;
  Schedule schedule;
  double action_bound = 1.0;
  int action_dim = 1;
  int state_dim = 1;
  bool noise_last_step = false;
};

DiffusionPolicy make_diffusion_policy(int state_dim, int action_dim,
                                      const std::vector<int>& hidden,
                                      const Schedule& schedule, double action_bound,
                                      Rng& rng);

// Euclidean projection onto the box [-bound, bound]^d.
Eigen::VectorXd project_action(const Eigen::VectorXd& a, double bound);

struct NoiseResult {
  Eigen::VectorXd a_tau;
  Eigen::VectorXd eps;
};

NoiseResult forward_noise(const Eigen::VectorXd& a0, int tau, const Schedule& s,
                          Rng& rng);

Eigen::VectorXd denoise_sample(const DiffusionPolicy& policy,
                               const Eigen::VectorXd& state_features, Rng& rng);

// Rows of `state_features` are independent chains.
Eigen::MatrixXd denoise_sample_batch(const DiffusionPolicy& policy,
                                     const Eigen::MatrixXd& state_features,
                                     Rng& rng);

struct DsmResult {
  double loss = 0.0;
  nn::Grads grads;
};

// Weighted mean over rows of the per-sample denoising losses
// l(a) = sum_tau beta_tau E_eps || net(...) - eps/sqrt(1-alpha_bar) ||^2,
// with the expectation estimated by n_eps fresh draws per tau.
DsmResult dsm_loss_batch(const DiffusionPolicy& policy,
                         const Eigen::MatrixXd& state_features,
                         const Eigen::MatrixXd& a0,
                         const Eigen::VectorXd& weights, Rng& rng, int n_eps);

DsmResult dsm_loss_per_sample(const DiffusionPolicy& policy,
                              const Eigen::VectorXd& state_features,
                              const Eigen::VectorXd& a0, Rng& rng, int n_eps);

struct IssmResult {
  double loss = 0.0;
  bool stepped = false;
};

// One Adam step on the importance-weighted denoising loss. All-zero weights
// leave the policy untouched.
IssmResult issm_loss_and_step(DiffusionPolicy& policy,
                              const Eigen::MatrixXd& state_features,
                              const Eigen::MatrixXd& samples,
                              const Eigen::VectorXd& weights,
                              nn::AdamState& adam, long total_steps, Rng& rng,
                              int n_eps = 1);

// exp(log_weight) with the exponent clamped; increments *clamp_counter when
// the clamp is active.
double clamped_exp_weight(double log_weight, double clamp, long* clamp_counter);

// Minibatch fitting driver: n_steps Adam steps, each on `minibatch` rows
// drawn uniformly with replacement from the weighted sample set. Returns the
// last minibatch loss.
double issm_fit(DiffusionPolicy& policy, const Eigen::MatrixXd& state_features,
                const Eigen::MatrixXd& samples, const Eigen::VectorXd& weights,
                nn::AdamState& adam, long n_steps, int minibatch, Rng& rng,
                int n_eps = 1, long adam_total_steps = 0);

}  // namespace dpl::diffusion
