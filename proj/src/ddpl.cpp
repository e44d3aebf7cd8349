#include "dpl/ddpl.hpp"

#include <algorithm>
#include <cmath>

#include "dpl/common.hpp"
#include "dpl/stats.hpp"

namespace dpl::ddpl {

diffusion::Schedule make_schedule(const ScheduleSpec& spec) {
  if (spec.kind == diffusion::ScheduleKind::kLinear)
    return diffusion::make_linear_schedule(spec.steps, spec.beta_start, spec.beta_end);
  return diffusion::make_geometric_schedule(spec.steps, spec.c_prime, spec.c_dprime);
}

void Buffer::push(envs::Transition t) {
  items_.push_back(std::move(t));
  if (static_cast<long>(items_.size()) > capacity_) items_.pop_front();
}

AgentBatch make_agent_batch(const Buffer& buffer, const envs::Env& env, int agent,
                            const std::vector<long>& indices) {
  const long b = static_cast<long>(indices.size());
  const int f = env.feature_dim();
  AgentBatch batch;
  batch.state_feat.resize(b, f);
  batch.action.resize(b);
  batch.reward.resize(b);
  batch.next_state_feat.resize(b, f);
  batch.terminal.resize(b);
  for (long r = 0; r < b; ++r) {
    const envs::Transition& t = buffer[indices[r]];
    batch.state_feat.row(r) = env.featurize(t.state).transpose();
    batch.action(r) = t.actions[agent];
    batch.reward(r) = t.reward;
    batch.next_state_feat.row(r) = env.featurize(t.next).transpose();
    batch.terminal(r) = env.is_absorbing(t.next) ? 1.0 : 0.0;
  }
  return batch;
}

double sample_gaussian_head(const GaussianHead& head, const Eigen::VectorXd& feat,
                            Rng& rng) {
  const Eigen::VectorXd out = nn::mlp_forward(head.net, feat);
  const double mu = out(0);
  const double ls = std::clamp(out(1), head.log_sigma_min, head.log_sigma_max);
  const double a = mu + std::exp(ls) * rand_normal(rng);
  return std::clamp(a, -head.action_bound, head.action_bound);
}

AgentLearner make_agent_learner(int index, const envs::Env& env,
                                const DdplConfig& cfg, Rng& rng) {
  AgentLearner l;
  l.index = index;
  l.variant = cfg.variant;
  const int f = env.feature_dim();

  std::vector<int> q_widths;
  q_widths.push_back(f + 1);
  for (int h : cfg.hidden) q_widths.push_back(h);
  q_widths.push_back(1);
  l.q_net = nn::make_mlp(q_widths, nn::Activation::kMish, rng);
  l.q_adam = nn::make_adam(l.q_net, cfg.lr_start, cfg.lr_end);
  l.q_target = {cfg.xi, l.q_net};

  if (cfg.variant == PolicyVariant::kDiffusion) {
    l.policy = diffusion::make_diffusion_policy(f, 1, cfg.hidden,
                                                make_schedule(cfg.schedule),
                                                env.spec().action_bound, rng);
    l.policy.noise_last_step = cfg.noise_last_step;
    l.policy_adam = nn::make_adam(l.policy.score_net, cfg.lr_start, cfg.lr_end);
  } else {
    std::vector<int> h_widths;
    h_widths.push_back(f);
    for (int h : cfg.hidden) h_widths.push_back(h);
    h_widths.push_back(2);
    l.head.net = nn::make_mlp(h_widths, nn::Activation::kMish, rng);
    l.head.action_bound = env.spec().action_bound;
    l.head_adam = nn::make_adam(l.head.net, cfg.lr_start, cfg.lr_end);
  }
  return l;
}

std::vector<double> sample_joint_action(const std::vector<AgentLearner>& learners,
                                        const envs::Env& env, const envs::State& s,
                                        Rng& rng) {
  std::vector<double> actions(learners.size());
  const Eigen::VectorXd feat = env.featurize(s);
  for (std::size_t i = 0; i < learners.size(); ++i) {
    if (learners[i].variant == PolicyVariant::kDiffusion)
      actions[i] = diffusion::denoise_sample(learners[i].policy, feat, rng)(0);
    else
      actions[i] = sample_gaussian_head(learners[i].head, feat, rng);
  }
  return actions;
}

void rollout(const envs::Env& env, const std::vector<AgentLearner>& learners,
             int n_steps, Buffer& buffer, RolloutCursor& cursor, Rng& rng) {
  for (int step = 0; step < n_steps; ++step) {
    const std::vector<double> actions =
        sample_joint_action(learners, env, cursor.state, rng);
    envs::StepResult r = env.step(cursor.state, actions, rng);
    buffer.push({cursor.state, actions, r.reward, r.next, r.done});
    ++cursor.t_in_episode;
    if (r.done || cursor.t_in_episode >= env.spec().episode_horizon) {
      cursor.state = env.initial_state();
      cursor.t_in_episode = 0;
    } else {
      cursor.state = r.next;
    }
  }
}

Eigen::MatrixXd sample_next_actions(const AgentLearner& learner,
                                    const envs::Env& env, const AgentBatch& batch,
                                    int n_samples, Rng& rng) {
  const long b = batch.next_state_feat.rows();
  const int f = static_cast<int>(batch.next_state_feat.cols());
  if (learner.variant == PolicyVariant::kDiffusion) {
    Eigen::MatrixXd rep(b * n_samples, f);
    for (long t = 0; t < b; ++t)
      for (int j = 0; j < n_samples; ++j)
        rep.row(t * n_samples + j) = batch.next_state_feat.row(t);
    return diffusion::denoise_sample_batch(learner.policy, rep, rng);
  }
  // Gaussian head: mu / log_sigma per next state, then reparameterized draws.
  const Eigen::MatrixXd out =
      nn::mlp_forward_batch(learner.head.net, batch.next_state_feat);
  Eigen::MatrixXd actions(b * n_samples, 1);
  for (long t = 0; t < b; ++t) {
    const double mu = out(t, 0);
    const double ls = std::clamp(out(t, 1), learner.head.log_sigma_min,
                                 learner.head.log_sigma_max);
    const double sigma = std::exp(ls);
    for (int j = 0; j < n_samples; ++j) {
      const double a = mu + sigma * rand_normal(rng);
      actions(t * n_samples + j, 0) =
          std::clamp(a, -env.spec().action_bound, env.spec().action_bound);
    }
  }
  return actions;
}

namespace {

Eigen::MatrixXd q_input(const Eigen::MatrixXd& feat, const Eigen::VectorXd& action) {
  Eigen::MatrixXd x(feat.rows(), feat.cols() + 1);
  x.leftCols(feat.cols()) = feat;
  x.col(feat.cols()) = action;
  return x;
}

Eigen::MatrixXd repeat_rows(const Eigen::MatrixXd& m, int reps) {
  Eigen::MatrixXd out(m.rows() * reps, m.cols());
  for (long t = 0; t < m.rows(); ++t)
    for (int j = 0; j < reps; ++j) out.row(t * reps + j) = m.row(t);
  return out;
}

}  // namespace

double q_update(AgentLearner& learner, const AgentBatch& batch,
                const Eigen::MatrixXd& next_actions, int n_samples, double gamma,
                long adam_total_steps) {
  const long b = batch.state_feat.rows();
  require(b >= 1, "q_update: empty batch");
  require(next_actions.rows() == b * n_samples, "q_update: next action mismatch");

  const Eigen::MatrixXd next_rep = repeat_rows(batch.next_state_feat, n_samples);
  const Eigen::MatrixXd qnavals = nn::mlp_forward_batch(
      learner.q_target.target, q_input(next_rep, next_actions.col(0)));
  Eigen::VectorXd bootstrap(b);
  for (long t = 0; t < b; ++t) {
    double acc = 0.0;
    for (int j = 0; j < n_samples; ++j) acc += qnavals(t * n_samples + j, 0);
    bootstrap(t) = acc / n_samples;
  }
  Eigen::VectorXd target =
      batch.reward.array() +
      gamma * (1.0 - batch.terminal.array()) * bootstrap.array();
  require(target.allFinite(), "q_update: non-finite TD target");

  nn::ForwardCache cache;
  const Eigen::MatrixXd pred = nn::mlp_forward_cached(
      learner.q_net, q_input(batch.state_feat, batch.action), cache);
  Eigen::MatrixXd resid = pred;
  resid.col(0) -= target;
  const double loss = resid.col(0).squaredNorm() / b;
  Eigen::MatrixXd dpred = (2.0 / b) * resid;
  nn::Grads g = nn::mlp_backward_batch(learner.q_net, cache, dpred);
  nn::adam_step(learner.q_net, g, learner.q_adam, adam_total_steps);
  nn::polyak_update(learner.q_target, learner.q_net);
  return loss;
}

PolicyUpdateResult policy_update(AgentLearner& learner, const AgentBatch& batch,
                                 const Eigen::MatrixXd& next_actions, int n_samples,
                                 double eta, double gamma, double weight_clamp,
                                 long adam_total_steps, int n_eps, Rng& rng) {
  const long b = batch.next_state_feat.rows();
  const double cq = eta / (1.0 - gamma);
  PolicyUpdateResult out;

  const Eigen::MatrixXd next_rep = repeat_rows(batch.next_state_feat, n_samples);

  if (learner.variant == PolicyVariant::kDiffusion) {
    const Eigen::MatrixXd qvals = nn::mlp_forward_batch(
        learner.q_net, q_input(next_rep, next_actions.col(0)));
    Eigen::VectorXd w(b * n_samples);
    long clamped = 0;
    for (long r = 0; r < b * n_samples; ++r)
      w(r) = diffusion::clamped_exp_weight(cq * qvals(r, 0), weight_clamp, &clamped);
    learner.clamp_count += clamped;
    out.clamped = clamped;
    const diffusion::IssmResult res = diffusion::issm_loss_and_step(
        learner.policy, next_rep, next_actions, w, learner.policy_adam,
        adam_total_steps, rng, n_eps);
    out.loss = res.loss;
    return out;
  }

  // Gaussian head: one Adam step on the reparameterized KL toward the
  // exponentially reweighted target, with the pre-update head as reference.
  nn::ForwardCache head_cache;
  const Eigen::MatrixXd head_out =
      nn::mlp_forward_cached(learner.head.net, batch.next_state_feat, head_cache);
  const long m = b * n_samples;
  Eigen::VectorXd a_flat(m);
  Eigen::VectorXd z_flat(m);
  Eigen::VectorXd sigma_row(b);
  for (long t = 0; t < b; ++t) {
    const double mu = head_out(t, 0);
    const double ls = std::clamp(head_out(t, 1), learner.head.log_sigma_min,
                                 learner.head.log_sigma_max);
    const double sigma = std::exp(ls);
    sigma_row(t) = sigma;
    for (int j = 0; j < n_samples; ++j) {
      const double z = rand_normal(rng);
      z_flat(t * n_samples + j) = z;
      a_flat(t * n_samples + j) = mu + sigma * z;
    }
  }

  // dQ/da through the q-net input gradient.
  nn::ForwardCache q_cache;
  nn::mlp_forward_cached(learner.q_net, q_input(next_rep, a_flat), q_cache);
  const Eigen::MatrixXd q_vals = q_cache.act.back();
  Eigen::MatrixXd dq_in;
  nn::mlp_backward_batch(learner.q_net, q_cache,
                         Eigen::MatrixXd::Ones(m, 1), &dq_in);
  const Eigen::VectorXd dq_da = dq_in.col(dq_in.cols() - 1);

  Eigen::MatrixXd head_grad = Eigen::MatrixXd::Zero(b, 2);
  double loss = 0.0;
  long clamped = 0;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (long t = 0; t < b; ++t) {
    const double sigma = sigma_row(t);
    for (int j = 0; j < n_samples; ++j) {
      const long r = t * n_samples + j;
      const double z = z_flat(r);
      double energy = cq * q_vals(r, 0);
      double denergy = cq * dq_da(r);
      if (energy > weight_clamp) {
        energy = weight_clamp;
        denergy = 0.0;
        ++clamped;
      }
      // d/da of [log pi_new(a) - log pi_old(a) - energy(a)] at new == old.
      const double da = z / sigma - denergy;
      head_grad(t, 0) += inv_m * da;
      head_grad(t, 1) += inv_m * (da * sigma * z - 1.0);
      loss += inv_m * (-energy);
    }
  }
  learner.clamp_count += clamped;
  out.clamped = clamped;
  out.loss = loss;
  nn::Grads g = nn::mlp_backward_batch(learner.head.net, head_cache, head_grad);
  nn::adam_step(learner.head.net, g, learner.head_adam, adam_total_steps);
  return out;
}

std::vector<double> policy_action_samples(const AgentLearner& learner,
                                          const envs::Env& env, int n, Rng& rng) {
  const Eigen::VectorXd feat = env.featurize(env.initial_state());
  std::vector<double> xs(n);
  if (learner.variant == PolicyVariant::kDiffusion) {
    Eigen::MatrixXd SF(n, feat.size());
    SF.rowwise() = feat.transpose();
    const Eigen::MatrixXd acts =
        diffusion::denoise_sample_batch(learner.policy, SF, rng);
    for (int i = 0; i < n; ++i) xs[i] = acts(i, 0);
  } else {
    for (int i = 0; i < n; ++i) xs[i] = sample_gaussian_head(learner.head, feat, rng);
  }
  return xs;
}

namespace {

MeanSe evaluate_policies(const envs::Env& env,
                         const std::vector<AgentLearner>& learners, double gamma,
                         int n_episodes, Rng& rng) {
  std::vector<double> returns(n_episodes);
  for (int e = 0; e < n_episodes; ++e) {
    envs::State s = env.initial_state();
    double ret = 0.0;
    double disc = 1.0;
    for (int t = 0; t < env.spec().episode_horizon; ++t) {
      const std::vector<double> actions = sample_joint_action(learners, env, s, rng);
      const envs::StepResult r = env.step(s, actions, rng);
      ret += disc * r.reward;
      disc *= gamma;
      if (r.done) break;
      s = r.next;
    }
    returns[e] = ret;
  }
  return mean_se(returns);
}

}  // namespace

DdplResult run_ddpl(const envs::Env& env, const DdplConfig& cfg) {
  require(cfg.epochs >= 0, "run_ddpl: epochs must be non-negative");
  require(cfg.rollout_batch >= 0, "run_ddpl: rollout batch must be non-negative");
  require(cfg.update_batch >= 1 && cfg.update_batch <= cfg.buffer_capacity,
          "run_ddpl: update batch must fit in the buffer");
  require(cfg.next_action_samples >= 1, "run_ddpl: need at least one next action");

  const int n = env.n_agents();
  DdplResult result;
  result.log.n_agents = n;

  std::vector<AgentLearner> learners;
  for (int i = 0; i < n; ++i) {
    Rng init_rng = make_rng(cfg.seed, {0x11, static_cast<std::uint64_t>(i)});
    learners.push_back(make_agent_learner(i, env, cfg, init_rng));
  }
  if (cfg.epochs == 0) {
    result.learners = std::move(learners);
    return result;
  }

  Buffer buffer(cfg.buffer_capacity);
  RolloutCursor cursor{env.initial_state(), 0};
  const long total_steps = static_cast<long>(cfg.epochs) * cfg.steps_per_epoch;
  bool goal_reached = false;
  double last_return = kNaN;
  double last_return_se = kNaN;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto ep = static_cast<std::uint64_t>(epoch);
    if (cfg.fresh_buffer) buffer.clear();
    Rng roll_rng = make_rng(cfg.seed, {1, ep});
    rollout(env, learners, cfg.rollout_batch, buffer, cursor, roll_rng);
    require(buffer.size() > 0, "run_ddpl: empty buffer after rollout");

    for (long i = std::max<long>(0, buffer.size() - cfg.rollout_batch);
         i < buffer.size(); ++i) {
      if (env.is_goal(buffer[i].next) || env.is_goal(buffer[i].state)) {
        if (!goal_reached) result.log.first_reach_epoch = epoch;
        goal_reached = true;
      }
    }

    EpochRow row;
    row.epoch = epoch;
    row.td_loss.assign(n, 0.0);
    row.issm_loss.assign(n, 0.0);
    row.clamp_count.assign(n, 0);

    for (int i = 0; i < n; ++i) {
      auto& learner = learners[i];
      const auto ai = static_cast<std::uint64_t>(i);
      for (int step = 0; step < cfg.steps_per_epoch; ++step) {
        const auto st = static_cast<std::uint64_t>(step);
        Rng batch_rng = make_rng(cfg.seed, {2, ep, ai, st});
        std::vector<long> idx(cfg.update_batch);
        std::uniform_int_distribution<long> pick(0, buffer.size() - 1);
        for (auto& v : idx) v = pick(batch_rng);
        const AgentBatch batch = make_agent_batch(buffer, env, i, idx);

        Rng na_rng = make_rng(cfg.seed, {3, ep, ai, st});
        const Eigen::MatrixXd next_actions =
            sample_next_actions(learner, env, batch, cfg.next_action_samples, na_rng);

        row.td_loss[i] = q_update(learner, batch, next_actions,
                                  cfg.next_action_samples, cfg.gamma, total_steps);

        Rng pol_rng = make_rng(cfg.seed, {4, ep, ai, st});
        const PolicyUpdateResult pu = policy_update(
            learner, batch, next_actions, cfg.next_action_samples, cfg.eta,
            cfg.gamma, cfg.weight_clamp, total_steps, cfg.n_eps, pol_rng);
        row.issm_loss[i] = pu.loss;
      }
      row.clamp_count[i] = learner.clamp_count;
      require(std::isfinite(row.td_loss[i]) && std::isfinite(row.issm_loss[i]),
              "run_ddpl: non-finite loss");
    }

    if (cfg.eval_every > 0 && epoch % cfg.eval_every == 0) {
      Rng eval_rng = make_rng(cfg.seed, {5, ep});
      const MeanSe ms =
          evaluate_policies(env, learners, cfg.gamma, cfg.eval_episodes, eval_rng);
      last_return = ms.mean;
      last_return_se = ms.se;
    }
    row.return_mean = last_return;
    row.return_se = last_return_se;
    row.reached_goal = goal_reached;

    if (cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0) {
      for (int i = 0; i < n; ++i) {
        Rng snap_rng = make_rng(cfg.seed, {6, ep, static_cast<std::uint64_t>(i)});
        nlohmann::json j;
        j["kind"] = "action_samples";
        j["samples"] =
            policy_action_samples(learners[i], env, cfg.snapshot_samples, snap_rng);
        result.log.snapshots.push_back({epoch, i, std::move(j)});
      }
    }
    result.log.epochs.push_back(std::move(row));
  }

  result.learners = std::move(learners);
  return result;
}

}  // namespace dpl::ddpl
