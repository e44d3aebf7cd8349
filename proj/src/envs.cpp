#include "dpl/envs.hpp"

#include <cmath>

#include "dpl/common.hpp"
#include "dpl/quad.hpp"

namespace dpl::envs {

double r_start(double a) {
  const double dm = a - kBetaMode;
  const double dp = a + kBetaMode;
  // The two bump terms are summed first so that r_start(-a) == r_start(a)
  // holds exactly in floating point.
  return -kNu * a * a + kC0 * (std::exp(-kAlphaBump * dp * dp) +
                               std::exp(-kAlphaBump * dm * dm));
}

double p_start(double a) {
  const double dp = a + kBetaMode;
  if (std::abs(dp) > 0.25) return 0.0;
  return kCp * std::exp(-kAlphaBump * dp * dp);
}

double oracle_qbar_sa(double a) { return r_start(a); }

double oracle_qbar_ma(int /*agent*/, double a) { return r_start(a); }

double reach_prob_gaussian(double mu, double sigma2) {
  require(sigma2 > 0.0, "reach_prob_gaussian: sigma2 must be positive");
  const double inv2s2 = 0.5 / sigma2;
  const double norm = 1.0 / std::sqrt(2.0 * M_PI * sigma2);
  auto integrand = [&](double a) {
    const double d = a - mu;
    return norm * std::exp(-d * d * inv2s2) * p_start(a);
  };
  // p_start is supported on [-beta-1/4, -beta+1/4]; split finely so that very
  // narrow Gaussian factors are still caught.
  return integrate(integrand, -kBetaMode - 0.25, -kBetaMode + 0.25, 1e-12, 60, 64);
}

Env Env::sa() {
  GameSpec spec;
  spec.n_agents = 1;
  return Env(EnvKind::kSa, spec);
}

Env Env::ma(int n_agents) {
  require(n_agents >= 1, "Env::ma: need at least one agent");
  GameSpec spec;
  spec.n_agents = n_agents;
  return Env(EnvKind::kMa, spec);
}

Env Env::bandit() {
  GameSpec spec;
  spec.n_agents = 1;
  return Env(EnvKind::kBandit, spec);
}

State Env::initial_state() const {
  switch (kind_) {
    case EnvKind::kSa:
      return {{0}};
    case EnvKind::kMa:
      return {std::vector<std::int8_t>(spec_.n_agents, -1)};
    case EnvKind::kBandit:
      return {{0}};
  }
  return {};
}

bool Env::is_start(const State& s) const {
  switch (kind_) {
    case EnvKind::kSa:
      return s.v.size() == 1 && s.v[0] == 0;
    case EnvKind::kMa:
      for (auto c : s.v)
        if (c != -1) return false;
      return true;
    case EnvKind::kBandit:
      return true;
  }
  return false;
}

bool Env::is_goal(const State& s) const {
  switch (kind_) {
    case EnvKind::kSa:
      return s.v.size() == 1 && s.v[0] == 1;
    case EnvKind::kMa:
      for (auto c : s.v)
        if (c != 1) return false;
      return true;
    case EnvKind::kBandit:
      return false;
  }
  return false;
}

bool Env::is_absorbing(const State& s) const {
  switch (kind_) {
    case EnvKind::kSa:
      return s.v.size() == 1 && s.v[0] == 2;
    case EnvKind::kMa:
      for (auto c : s.v)
        if (c != 0) return false;
      return true;
    case EnvKind::kBandit:
      return s.v.size() == 1 && s.v[0] == 1;
  }
  return false;
}

StepResult Env::step(const State& s, const std::vector<double>& actions, Rng& rng) const {
  require(static_cast<int>(actions.size()) == spec_.n_agents,
          "Env::step: wrong number of actions");
  for (double a : actions) require(std::isfinite(a), "Env::step: non-finite action");

  switch (kind_) {
    case EnvKind::kSa: {
      require(s.v.size() == 1 && s.v[0] >= 0 && s.v[0] <= 2, "Env::step: bad state");
      const double a = actions[0];
      if (s.v[0] == 0) {
        const double reward = r_start(a);
        const bool flip = rand_uniform(rng) < p_start(a);
        State next{{static_cast<std::int8_t>(flip ? 1 : 2)}};
        const bool done = is_absorbing(next);
        return {next, reward, done};
      }
      if (s.v[0] == 1) return {{{2}}, kC1, true};
      return {{{2}}, 0.0, true};
    }
    case EnvKind::kMa: {
      const int n = spec_.n_agents;
      require(static_cast<int>(s.v.size()) == n, "Env::step: bad state size");
      if (is_start(s)) {
        double reward = 0.0;
        for (int i = 0; i < n; ++i) reward += r_start(actions[i]);
        State next;
        next.v.resize(n);
        for (int i = 0; i < n; ++i)
          next.v[i] = rand_uniform(rng) < p_start(actions[i]) ? 1 : 0;
        return {next, reward, is_absorbing(next)};
      }
      double reward = 0.0;
      if (is_goal(s)) {
        double sq = 0.0;
        for (double a : actions) sq += a * a;
        reward = kC2 + kC3 * std::exp(-sq);
      } else {
        int ones = 0;
        for (auto c : s.v) ones += (c == 1);
        reward = kC1 * ones;
      }
      State next{std::vector<std::int8_t>(n, 0)};
      return {next, reward, true};
    }
    case EnvKind::kBandit: {
      require(s.v.size() == 1, "Env::step: bad state");
      if (s.v[0] != 0) return {{{1}}, 0.0, true};
      return {{{1}}, r_start(actions[0]), true};
    }
  }
  return {};
}

int Env::feature_dim() const {
  switch (kind_) {
    case EnvKind::kSa:
      return 3;
    case EnvKind::kMa:
      return spec_.n_agents;
    case EnvKind::kBandit:
      return 1;
  }
  return 0;
}

Eigen::VectorXd Env::featurize(const State& s) const {
  switch (kind_) {
    case EnvKind::kSa: {
      Eigen::VectorXd f = Eigen::VectorXd::Zero(3);
      f(s.v[0]) = 1.0;
      return f;
    }
    case EnvKind::kMa: {
      Eigen::VectorXd f(spec_.n_agents);
      for (int i = 0; i < spec_.n_agents; ++i) f(i) = static_cast<double>(s.v[i]);
      return f;
    }
    case EnvKind::kBandit: {
      Eigen::VectorXd f(1);
      f(0) = 1.0;
      return f;
    }
  }
  return {};
}

}  // namespace dpl::envs
