#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "dpl/diffusion.hpp"
#include "dpl/envs.hpp"
#include "dpl/nn.hpp"
#include "dpl/trainlog.hpp"

namespace dpl::ddpl {

enum class PolicyVariant { kDiffusion, kGaussianHead };

struct ScheduleSpec {
  diffusion::ScheduleKind kind = diffusion::ScheduleKind::kLinear;
  int steps = 20;
  double beta_start = 0.001;  // linear
  double beta_end = 0.999;
  double c_prime = 2.0;  // geometric
  double c_dprime = 4.0;
};

diffusion::Schedule make_schedule(const ScheduleSpec& spec);

struct DdplConfig {
  int epochs = 500;
  int rollout_batch = 20;       // environment steps per epoch
  int update_batch = 256;       // transitions per gradient step
  int next_action_samples = 8;  // per next state
  double eta = 1.0;
  double gamma = 0.1;
  double xi = 0.005;
  PolicyVariant variant = PolicyVariant::kDiffusion;
  ScheduleSpec schedule;
  std::vector<int> hidden{256, 256, 256};
  double lr_start = 1e-4;
  double lr_end = 5e-5;
  long buffer_capacity = 100000;
  bool fresh_buffer = false;
  int steps_per_epoch = 1;
  int n_eps = 1;
  int eval_episodes = 50;
  int eval_every = 10;  // 0 disables
  int snapshot_every = 0;
  int snapshot_samples = 2000;
  double weight_clamp = 50.0;
  bool noise_last_step = false;
  std::uint64_t seed = 0;
};

// Bounded FIFO of joint transitions.
class Buffer {
 public:
  explicit Buffer(long capacity) : capacity_(capacity) {}
  void push(envs::Transition t);
  long size() const { return static_cast<long>(items_.size()); }
  const envs::Transition& operator[](long i) const { return items_[i]; }
  void clear() { items_.clear(); }

 private:
  long capacity_;
  std::deque<envs::Transition> items_;
};

// Decentralized view of a sampled batch: contains only this agent's action.
struct AgentBatch {
  Eigen::MatrixXd state_feat;       // B x F
  Eigen::VectorXd action;           // B (agent's own action)
  Eigen::VectorXd reward;           // B
  Eigen::MatrixXd next_state_feat;  // B x F
  Eigen::VectorXd terminal;         // B, 1.0 where the next state is absorbing
};

AgentBatch make_agent_batch(const Buffer& buffer, const envs::Env& env, int agent,
                            const std::vector<long>& indices);

struct GaussianHead {
  nn::Mlp net;  // features -> (mu, log_sigma)
  double action_bound = 2.0;
  double log_sigma_min = -12.0;
  double log_sigma_max = 4.0;
};

double sample_gaussian_head(const GaussianHead& head, const Eigen::VectorXd& feat,
                            Rng& rng);

struct AgentLearner {
  int index = 0;
  nn::Mlp q_net;
  nn::AdamState q_adam;
  nn::PolyakState q_target;
  PolicyVariant variant = PolicyVariant::kDiffusion;
  diffusion::DiffusionPolicy policy;
  nn::AdamState policy_adam;
  GaussianHead head;
  nn::AdamState head_adam;
  long clamp_count = 0;
};

AgentLearner make_agent_learner(int index, const envs::Env& env,
                                const DdplConfig& cfg, Rng& rng);

// Samples one action per agent from its own policy at the shared state.
std::vector<double> sample_joint_action(const std::vector<AgentLearner>& learners,
                                        const envs::Env& env, const envs::State& s,
                                        Rng& rng);

// Takes `n_steps` environment steps with the current policies and appends the
// transitions to the buffer. Episode state persists across calls.
struct RolloutCursor {
  envs::State state;
  int t_in_episode = 0;
};

void rollout(const envs::Env& env, const std::vector<AgentLearner>& learners,
             int n_steps, Buffer& buffer, RolloutCursor& cursor, Rng& rng);

// Next-action matrix: row t*N+j holds sample j for transition t.
Eigen::MatrixXd sample_next_actions(const AgentLearner& learner,
                                    const envs::Env& env, const AgentBatch& batch,
                                    int n_samples, Rng& rng);

// One TD regression step toward r + gamma * mean_j Qbar(s', a'_j) with the
// Polyak target network, followed by the target update.
double q_update(AgentLearner& learner, const AgentBatch& batch,
                const Eigen::MatrixXd& next_actions, int n_samples, double gamma,
                long adam_total_steps);

struct PolicyUpdateResult {
  double loss = 0.0;
  long clamped = 0;
};

PolicyUpdateResult policy_update(AgentLearner& learner, const AgentBatch& batch,
                                 const Eigen::MatrixXd& next_actions, int n_samples,
                                 double eta, double gamma, double weight_clamp,
                                 long adam_total_steps, int n_eps, Rng& rng);

struct DdplResult {
  TrainLog log;
  std::vector<AgentLearner> learners;
};

DdplResult run_ddpl(const envs::Env& env, const DdplConfig& cfg);

// Sampled actions of one agent's policy at the environment start state.
std::vector<double> policy_action_samples(const AgentLearner& learner,
                                          const envs::Env& env, int n, Rng& rng);

}  // namespace dpl::ddpl
