#include "dpl/decspg.hpp"

#include <algorithm>
#include <cmath>

#include "dpl/metrics.hpp"
#include "dpl/stats.hpp"

namespace dpl::decspg {

namespace {

// Collects exactly `n_steps` steps, resetting on termination or horizon, and
// fills in per-episode discounted returns-to-go.
std::vector<StepRecord> collect_steps(const envs::Env& env, int n_steps,
                                      double gamma,
                                      const std::function<void(const envs::State&,
                                                               std::vector<double>&,
                                                               Rng&)>& act,
                                      Rng& rng) {
  std::vector<StepRecord> records;
  records.reserve(n_steps);
  envs::State s = env.initial_state();
  int t_in_episode = 0;
  std::size_t episode_begin = 0;
  auto finish_episode = [&](std::size_t end) {
    double g = 0.0;
    for (std::size_t idx = end; idx-- > episode_begin;) {
      g = records[idx].reward + gamma * g;
      records[idx].return_to_go = g;
    }
    episode_begin = end;
  };
  std::vector<double> actions(env.n_agents());
  for (int step = 0; step < n_steps; ++step) {
    act(s, actions, rng);
    envs::StepResult r = env.step(s, actions, rng);
    records.push_back({s, actions, r.reward, r.next, r.done, 0.0});
    ++t_in_episode;
    if (r.done || t_in_episode >= env.spec().episode_horizon) {
      finish_episode(records.size());
      s = env.initial_state();
      t_in_episode = 0;
    } else {
      s = r.next;
    }
  }
  finish_episode(records.size());
  return records;
}

MeanSe evaluate_return(const envs::Env& env, double gamma, int n_episodes,
                       const std::function<void(const envs::State&,
                                                std::vector<double>&, Rng&)>& act,
                       Rng& rng) {
  std::vector<double> returns(n_episodes);
  std::vector<double> actions(env.n_agents());
  for (int e = 0; e < n_episodes; ++e) {
    envs::State s = env.initial_state();
    double ret = 0.0;
    double disc = 1.0;
    for (int t = 0; t < env.spec().episode_horizon; ++t) {
      act(s, actions, rng);
      envs::StepResult r = env.step(s, actions, rng);
      ret += disc * r.reward;
      disc *= gamma;
      if (r.done) break;
      s = r.next;
    }
    returns[e] = ret;
  }
  return mean_se(returns);
}

bool goal_coordinate_reached(const envs::Env& env, const envs::State& st, int agent) {
  if (env.kind() == envs::EnvKind::kMa) return st.v[agent] == 1;
  return env.is_goal(st);
}

// Piecewise-linear interpolation of grid values, clamped at the ends.
double interp_grid(const Eigen::VectorXd& nodes, const Eigen::VectorXd& vals,
                   double a) {
  const int n = static_cast<int>(nodes.size());
  if (a <= nodes(0)) return vals(0);
  if (a >= nodes(n - 1)) return vals(n - 1);
  const double lo = nodes(0);
  const double h = nodes(1) - nodes(0);
  int idx = static_cast<int>((a - lo) / h);
  idx = std::clamp(idx, 0, n - 2);
  const double frac = (a - nodes(idx)) / h;
  return vals(idx) * (1.0 - frac) + vals(idx + 1) * frac;
}

}  // namespace

Eigen::VectorXd estimate_qbar_mc(const std::vector<StepRecord>& records,
                                 const envs::Env& env, int agent,
                                 const Eigen::VectorXd& grid, double bandwidth) {
  std::vector<double> xs, gs;
  for (const auto& r : records) {
    if (!env.is_start(r.state)) continue;
    xs.push_back(r.actions[agent]);
    gs.push_back(r.return_to_go);
  }
  require(!xs.empty(), "estimate_qbar_mc: no start-state samples in buffer");
  Eigen::VectorXd qhat(grid.size());
  const double inv2h2 = 0.5 / (bandwidth * bandwidth);
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    const double a = grid(g);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double d = xs[i] - a;
      const double w = std::exp(-d * d * inv2h2);
      num += w * gs[i];
      den += w;
    }
    if (den < 1e-8) {
      std::size_t best = 0;
      double best_d = std::abs(xs[0] - a);
      for (std::size_t i = 1; i < xs.size(); ++i) {
        const double d = std::abs(xs[i] - a);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      qhat(g) = gs[best];
    } else {
      qhat(g) = num / den;
    }
  }
  return qhat;
}

namespace {

struct RunState {
  std::vector<AgentPolicyState> agents;
  std::vector<bool> agent_reached;
  bool goal_reached = false;
};

void init_policies(RunState& rs, const envs::Env& env, const DecSpgConfig& cfg) {
  const int n = env.n_agents();
  rs.agents.resize(n);
  rs.agent_reached.assign(n, false);
  for (int i = 0; i < n; ++i) {
    auto& ap = rs.agents[i];
    ap.cls = cfg.policy_class;
    switch (cfg.policy_class) {
      case PolicyClass::kGrid:
        ap.grid = policies::make_uniform_grid(cfg.grid_nodes, cfg.grid_lo, cfg.grid_hi);
        break;
      case PolicyClass::kGaussianClosedForm:
      case PolicyClass::kGaussianMc:
        ap.gauss = {cfg.init_mu, cfg.init_sigma2};
        break;
      case PolicyClass::kDiffusion: {
        Rng rng = make_rng(cfg.seed, {0xD1F, static_cast<std::uint64_t>(i)});
        const auto sched = diffusion::make_linear_schedule(
            cfg.diffusion.steps, cfg.diffusion.beta_start, cfg.diffusion.beta_end);
        ap.diff = diffusion::make_diffusion_policy(env.feature_dim(), 1,
                                                   cfg.diffusion.hidden, sched,
                                                   env.spec().action_bound, rng);
        ap.diff_adam = nn::make_adam(ap.diff.score_net, cfg.diffusion.lr_start,
                                     cfg.diffusion.lr_end);
        break;
      }
    }
  }
}

double sample_agent_action(const AgentPolicyState& ap, const envs::Env& env,
                           const envs::State& s, Rng& rng) {
  switch (ap.cls) {
    case PolicyClass::kGrid:
      return policies::sample_grid(ap.grid, rng);
    case PolicyClass::kGaussianClosedForm:
    case PolicyClass::kGaussianMc:
      return policies::sample_gaussian(ap.gauss, rng, env.spec().action_bound);
    case PolicyClass::kDiffusion:
      return diffusion::denoise_sample(ap.diff, env.featurize(s), rng)(0);
  }
  return 0.0;
}

nlohmann::json snapshot_policy(const AgentPolicyState& ap, const envs::Env& env,
                               const DecSpgConfig& cfg, Rng& rng) {
  nlohmann::json j;
  switch (ap.cls) {
    case PolicyClass::kGrid: {
      std::vector<double> lw(ap.grid.log_weights.data(),
                             ap.grid.log_weights.data() + ap.grid.log_weights.size());
      j["kind"] = "grid";
      j["log_weights"] = lw;
      break;
    }
    case PolicyClass::kGaussianClosedForm:
    case PolicyClass::kGaussianMc:
      j["kind"] = "gaussian";
      j["mu"] = ap.gauss.mu;
      j["sigma2"] = ap.gauss.sigma2;
      break;
    case PolicyClass::kDiffusion: {
      const Eigen::VectorXd sf = env.featurize(env.initial_state());
      Eigen::MatrixXd SF(cfg.snapshot_samples, sf.size());
      SF.rowwise() = sf.transpose();
      const Eigen::MatrixXd acts = diffusion::denoise_sample_batch(ap.diff, SF, rng);
      std::vector<double> xs(acts.data(), acts.data() + acts.rows());
      j["kind"] = "diffusion_samples";
      j["samples"] = xs;
      break;
    }
  }
  return j;
}

}  // namespace

DecSpgResult run_decspg(const envs::Env& env, const DecSpgConfig& cfg) {
  require(cfg.batch >= 1, "run_decspg: batch must be >= 1");
  require(cfg.eta >= 0.0, "run_decspg: eta must be non-negative");
  require(cfg.epochs >= 0, "run_decspg: epochs must be non-negative");
  if (cfg.policy_class == PolicyClass::kGaussianClosedForm)
    require(cfg.q_estimator == QEstimator::kOracleNeg,
            "run_decspg: closed-form class requires the oracle estimator");

  const int n = env.n_agents();
  const double cq = cfg.eta / (1.0 - cfg.gamma);
  DecSpgResult result;
  result.log.n_agents = n;
  RunState rs;
  init_policies(rs, env, cfg);

  // Oracle energies on the grid are epoch-independent.
  Eigen::VectorXd oracle_on_grid;
  const Eigen::VectorXd grid_nodes =
      Eigen::VectorXd::LinSpaced(cfg.grid_nodes, cfg.grid_lo, cfg.grid_hi);
  if (cfg.q_estimator == QEstimator::kOracleNeg) {
    oracle_on_grid.resize(grid_nodes.size());
    for (Eigen::Index g = 0; g < grid_nodes.size(); ++g)
      oracle_on_grid(g) = envs::oracle_qbar_sa(grid_nodes(g));
  }

  auto act_current = [&](const envs::State& s, std::vector<double>& out, Rng& rng) {
    for (int i = 0; i < n; ++i)
      out[i] = sample_agent_action(rs.agents[i], env, s, rng);
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto ep = static_cast<std::uint64_t>(epoch);
    Rng collect_rng = make_rng(cfg.seed, {1, ep});
    auto records = collect_steps(env, cfg.batch, cfg.gamma, act_current, collect_rng);

    for (const auto& r : records) {
      for (int i = 0; i < n; ++i) {
        if (goal_coordinate_reached(env, r.next, i)) rs.agent_reached[i] = true;
        if (goal_coordinate_reached(env, r.state, i)) rs.agent_reached[i] = true;
      }
      if (env.is_goal(r.next) || env.is_goal(r.state)) {
        if (!rs.goal_reached) result.log.first_reach_epoch = epoch;
        rs.goal_reached = true;
      }
    }

    // Policy updates. eta == 0 means the energy-based target equals the
    // previous policy, so the exact projection is the identity.
    if (cfg.eta > 0.0) {
      for (int i = 0; i < n; ++i) {
        auto& ap = rs.agents[i];
        const bool use_oracle = cfg.q_estimator == QEstimator::kOracleNeg &&
                                !(cfg.oracle_switch_to_mc_on_reach &&
                                  rs.agent_reached[i]);
        Rng update_rng = make_rng(cfg.seed, {3, ep, static_cast<std::uint64_t>(i)});

        Eigen::VectorXd qhat_grid;
        if (use_oracle) {
          qhat_grid = oracle_on_grid;
        } else {
          qhat_grid = estimate_qbar_mc(records, env, i, grid_nodes,
                                       cfg.kernel_bandwidth);
        }
        auto qhat_fn = [&](double a) {
          return use_oracle ? envs::oracle_qbar_sa(a)
                            : interp_grid(grid_nodes, qhat_grid, a);
        };

        switch (ap.cls) {
          case PolicyClass::kGrid:
            ap.grid = policies::grid_softmax_update(ap.grid, qhat_grid, cfg.eta,
                                                    cfg.gamma);
            break;
          case PolicyClass::kGaussianClosedForm:
            if (use_oracle) {
              ap.gauss = policies::gaussian_project_sa(ap.gauss, cfg.eta, cfg.gamma);
            } else {
              ap.switched_to_mc = true;
              ap.gauss = policies::gaussian_project_mc(
                  ap.gauss, qhat_fn, cfg.eta, cfg.gamma, cfg.mc_samples,
                  cfg.mc_gd_steps, cfg.mc_step_size, update_rng);
            }
            break;
          case PolicyClass::kGaussianMc:
            ap.gauss = policies::gaussian_project_mc(
                ap.gauss, qhat_fn, cfg.eta, cfg.gamma, cfg.mc_samples,
                cfg.mc_gd_steps, cfg.mc_step_size, update_rng);
            break;
          case PolicyClass::kDiffusion: {
            const Eigen::VectorXd sf = env.featurize(env.initial_state());
            const int m = cfg.diffusion.projection_samples;
            Eigen::MatrixXd SF(m, sf.size());
            SF.rowwise() = sf.transpose();
            const Eigen::MatrixXd samples =
                diffusion::denoise_sample_batch(ap.diff, SF, update_rng);
            Eigen::VectorXd w(m);
            for (int r = 0; r < m; ++r)
              w(r) = diffusion::clamped_exp_weight(cq * qhat_fn(samples(r, 0)),
                                                   cfg.diffusion.weight_clamp,
                                                   &ap.clamp_count);
            const long total =
                static_cast<long>(cfg.epochs) * cfg.diffusion.issm_steps_per_epoch;
            for (int step = 0; step < cfg.diffusion.issm_steps_per_epoch; ++step)
              diffusion::issm_loss_and_step(ap.diff, SF, samples, w, ap.diff_adam,
                                            total, update_rng, cfg.diffusion.n_eps);
            break;
          }
        }
      }
    }

    EpochRow row;
    row.epoch = epoch;
    row.reached_goal = rs.goal_reached;
    if (cfg.eval_every > 0 && epoch % cfg.eval_every == 0) {
      Rng eval_rng = make_rng(cfg.seed, {2, ep});
      const MeanSe ms =
          evaluate_return(env, cfg.gamma, cfg.eval_episodes, act_current, eval_rng);
      row.return_mean = ms.mean;
      row.return_se = ms.se;
    }
    if (cfg.policy_class == PolicyClass::kGaussianClosedForm ||
        cfg.policy_class == PolicyClass::kGaussianMc) {
      row.sigma2.resize(n);
      for (int i = 0; i < n; ++i) row.sigma2[i] = rs.agents[i].gauss.sigma2;
    }
    if (cfg.ne_gap_every > 0 && epoch % cfg.ne_gap_every == 0) {
      std::vector<std::function<double(Rng&)>> samplers;
      for (int i = 0; i < n; ++i) {
        const auto* ap = &rs.agents[i];
        samplers.push_back([ap, &env](Rng& rng) {
          return sample_agent_action(*ap, env, env.initial_state(), rng);
        });
      }
      row.ne_gap = metrics::ne_gap_grid(env, samplers, grid_nodes,
                                        cfg.ne_gap_episodes,
                                        derive_seed(cfg.seed, {4, ep}));
    }
    if (cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0) {
      for (int i = 0; i < n; ++i) {
        Rng snap_rng = make_rng(cfg.seed, {5, ep, static_cast<std::uint64_t>(i)});
        result.log.snapshots.push_back(
            {epoch, i, snapshot_policy(rs.agents[i], env, cfg, snap_rng)});
      }
    }
    result.log.epochs.push_back(std::move(row));
    if (cfg.stop_on_goal && rs.goal_reached) break;
  }

  result.policies = std::move(rs.agents);
  return result;
}

SuccessEstimate estimate_success_prob(const envs::Env& env, const DecSpgConfig& cfg,
                                      int n_runs) {
  require(n_runs >= 100, "estimate_success_prob: need at least 100 runs");
  std::vector<char> success(n_runs, 0);
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < n_runs; ++r) {
    DecSpgConfig run_cfg = cfg;
    run_cfg.seed = derive_seed(cfg.seed, {0x5E, static_cast<std::uint64_t>(r)});
    run_cfg.stop_on_goal = true;
    run_cfg.eval_every = 0;
    run_cfg.snapshot_every = 0;
    run_cfg.ne_gap_every = 0;
    const DecSpgResult res = run_decspg(env, run_cfg);
    success[r] = res.log.first_reach_epoch >= 0 ? 1 : 0;
  }
  SuccessEstimate est;
  est.runs = n_runs;
  for (char s : success) est.successes += s;
  est.rate = static_cast<double>(est.successes) / n_runs;
  est.ci = wilson_interval(est.successes, n_runs);
  return est;
}

}  // namespace dpl::decspg
