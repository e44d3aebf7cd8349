#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dpl/rng.hpp"

namespace dpl::envs {

// Start-state reward and flip-probability profiles shared by both chains.
inline constexpr double kNu = 10.0;
inline constexpr double kAlphaBump = 250.0;
inline constexpr double kBetaMode = 0.5;
inline constexpr double kC0 = 2.7;
inline constexpr double kCp = 0.005;
inline constexpr double kC1 = 20000.0;
inline constexpr double kC2 = 30000.0;
inline constexpr double kC3 = 10000.0;
inline constexpr double kDefaultGamma = 0.1;
inline constexpr double kDefaultActionBound = 2.0;
inline constexpr int kEpisodeHorizon = 5;

double r_start(double a);
double p_start(double a);

// Averaged start-state action values under the reward that zeroes out the
// goal bonus; closed forms for the single- and multi-agent chains coincide.
double oracle_qbar_sa(double a);
double oracle_qbar_ma(int agent, double a);

// Probability that a single N(mu, sigma2) action draw triggers the start
// transition, integrated by adaptive quadrature to 1e-12.
double reach_prob_gaussian(double mu, double sigma2);

struct GameSpec {
  int n_agents = 1;
  int action_dim_per_agent = 1;
  double action_bound = kDefaultActionBound;
  double gamma = kDefaultGamma;
  int episode_horizon = kEpisodeHorizon;
};

enum class EnvKind { kSa, kMa, kBandit };

// kSa encodes {s0, s1, s2} as a single entry {0,1,2}; kMa stores the raw
// coordinate vector with entries in {-1,0,1}; kBandit has one dummy state.
struct State {
  std::vector<std::int8_t> v;
  bool operator==(const State&) const = default;
};

struct StepResult {
  State next;
  double reward = 0.0;
  bool done = false;
};

struct Transition {
  State state;
  std::vector<double> actions;
  double reward = 0.0;
  State next;
  bool done = false;
};

class Env {
 public:
  static Env sa();
  static Env ma(int n_agents);
  static Env bandit();

  EnvKind kind() const { return kind_; }
  int n_agents() const { return spec_.n_agents; }
  const GameSpec& spec() const { return spec_; }

  State initial_state() const;
  StepResult step(const State& s, const std::vector<double>& actions, Rng& rng) const;

  bool is_start(const State& s) const;
  bool is_goal(const State& s) const;       // s1 / all-ones
  bool is_absorbing(const State& s) const;  // s2 / all-zeros

  int feature_dim() const;
  Eigen::VectorXd featurize(const State& s) const;

 private:
  Env(EnvKind kind, GameSpec spec) : kind_(kind), spec_(spec) {}
  EnvKind kind_;
  GameSpec spec_;
};

}  // namespace dpl::envs
