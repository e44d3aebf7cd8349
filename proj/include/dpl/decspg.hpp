#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "dpl/common.hpp"
#include "dpl/diffusion.hpp"
#include "dpl/envs.hpp"
#include "dpl/policies.hpp"
#include "dpl/trainlog.hpp"

namespace dpl::decspg {

enum class PolicyClass { kGrid, kGaussianClosedForm, kGaussianMc, kDiffusion };
enum class QEstimator { kOracleNeg, kMonteCarlo };

struct DiffusionClassConfig {
  std::vector<int> hidden{64, 64};
  int steps = 10;
  double beta_start = 0.001;
  double beta_end = 0.999;
  double lr_start = 1e-3;
  double lr_end = 1e-3;
  int projection_samples = 512;
  int issm_steps_per_epoch = 30;
  int n_eps = 1;
  double weight_clamp = 50.0;
};

struct DecSpgConfig {
  PolicyClass policy_class = PolicyClass::kGrid;
  int epochs = 150;
  int batch = 200;            // environment steps per epoch
  double eta = 0.009;         // 0.01 * (1 - gamma)
  double gamma = 0.1;
  QEstimator q_estimator = QEstimator::kMonteCarlo;
  std::uint64_t seed = 0;

  int eval_episodes = 50;
  int eval_every = 1;    // 0 disables evaluation
  int snapshot_every = 0;
  int snapshot_samples = 2000;  // diffusion-class snapshots
  int ne_gap_every = 0;
  int ne_gap_episodes = 2000;

  int grid_nodes = 401;
  double grid_lo = -2.0;
  double grid_hi = 2.0;
  double kernel_bandwidth = 0.02;

  double init_mu = 0.0;
  double init_sigma2 = 0.1;

  int mc_samples = 4096;
  int mc_gd_steps = 200;
  double mc_step_size = 0.05;

  // When the estimator is the oracle, switch an agent to Monte-Carlo
  // estimation once its goal coordinate has been reached.
  bool oracle_switch_to_mc_on_reach = false;
  bool stop_on_goal = false;

  DiffusionClassConfig diffusion;
};

// One collected environment step plus its within-episode discounted
// return-to-go.
struct StepRecord {
  envs::State state;
  std::vector<double> actions;
  double reward = 0.0;
  envs::State next;
  bool done = false;
  double return_to_go = 0.0;
};

// Nadaraya-Watson regression of returns onto agent actions at the start
// state, evaluated on the grid. Falls back to the nearest sample where the
// kernel mass underflows.
Eigen::VectorXd estimate_qbar_mc(const std::vector<StepRecord>& records,
                                 const envs::Env& env, int agent,
                                 const Eigen::VectorXd& grid, double bandwidth);

struct AgentPolicyState {
  PolicyClass cls = PolicyClass::kGrid;
  policies::GridPolicy grid;
  policies::GaussianPolicy1D gauss;
  diffusion::DiffusionPolicy diff;
  nn::AdamState diff_adam;
  bool switched_to_mc = false;
  long clamp_count = 0;
};

struct DecSpgResult {
  TrainLog log;
  std::vector<AgentPolicyState> policies;
};

DecSpgResult run_decspg(const envs::Env& env, const DecSpgConfig& cfg);

struct SuccessEstimate {
  long successes = 0;
  long runs = 0;
  double rate = 0.0;
  Interval ci;
};

// Runs n_runs independent trainings; success = goal state visited at least
// once. Runs are fanned out over OpenMP threads.
SuccessEstimate estimate_success_prob(const envs::Env& env, const DecSpgConfig& cfg,
                                      int n_runs);

}  // namespace dpl::decspg
