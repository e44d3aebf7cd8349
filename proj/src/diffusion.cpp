#include "dpl/diffusion.hpp"

#include <cmath>
#include <iostream>
#include <ostream>

#include "dpl/common.hpp"
#include "dpl/csv.hpp"

namespace dpl::diffusion {

namespace {

void finalize_schedule(Schedule& s) {
  const int H = s.steps;
  s.alpha.resize(H);
  s.alpha_bar.resize(H);
  s.sigma2.resize(H);
  double prod = 1.0;
  for (int t = 0; t < H; ++t) {
    require(s.beta(t) > 0.0 && s.beta(t) < 1.0, "schedule: beta out of (0,1)");
    s.alpha(t) = 1.0 - s.beta(t);
    prod *= s.alpha(t);
    s.alpha_bar(t) = prod;
    s.sigma2(t) = s.beta(t) / s.alpha(t);
  }
}

}  // namespace

Schedule make_geometric_schedule(int steps, double c_prime, double c_dprime) {
  require(steps >= 2, "make_geometric_schedule: need at least 2 steps");
  require(c_prime > 0.0 && c_dprime > 0.0, "make_geometric_schedule: bad constants");
  const double H = static_cast<double>(steps);
  const double lnH = std::log(H);
  require(H >= 3.0 * c_dprime * lnH,
          "make_geometric_schedule: requires H >= 3 c'' ln H");
  Schedule s;
  s.kind = ScheduleKind::kGeometric;
  s.steps = steps;
  s.beta.resize(steps);
  const double rate = c_dprime * lnH / H;
  const double beta1 = std::pow(H, -c_prime);
  s.beta(0) = beta1;
  double growth = 1.0;
  for (int t = 1; t < steps; ++t) {
    growth *= 1.0 + rate;  // (1 + c'' ln H / H)^tau at tau = t
    s.beta(t) = rate * std::min(beta1 * growth, 1.0);
  }
  finalize_schedule(s);
  return s;
}

Schedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  require(steps >= 1, "make_linear_schedule: need at least 1 step");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "make_linear_schedule: need 0 < beta_start <= beta_end < 1");
  Schedule s;
  s.kind = ScheduleKind::kLinear;
  s.steps = steps;
  s.beta.resize(steps);
  if (steps == 1) {
    s.beta(0) = beta_start;
  } else {
    for (int t = 0; t < steps; ++t)
      s.beta(t) = beta_start + (beta_end - beta_start) * t / (steps - 1.0);
  }
  finalize_schedule(s);
  return s;
}

void write_schedule_csv(const Schedule& s, std::ostream& os) {
  os << "tau,beta,alpha,alpha_bar,sigma2\n";
  for (int t = 0; t < s.steps; ++t) {
    os << (t + 1) << ',' << fmt_double(s.beta(t)) << ',' << fmt_double(s.alpha(t))
       << ',' << fmt_double(s.alpha_bar(t)) << ',' << fmt_double(s.sigma2(t))
       << '\n';
  }
}

double schedule_weight_sum(const Schedule& s) {
  double sum = 0.0;
  for (int t = 0; t < s.steps; ++t)
    sum += s.beta(t) / (s.alpha(t) * (1.0 - s.alpha_bar(t)));
  return sum;
}

DiffusionPolicy make_diffusion_policy(int state_dim, int action_dim,
                                      const std::vector<int>& hidden,
                                      const Schedule& schedule, double action_bound,
                                      Rng& rng) {
  require(state_dim >= 0 && action_dim >= 1, "make_diffusion_policy: bad dims");
  require(action_bound > 0.0, "make_diffusion_policy: bad action bound");
  DiffusionPolicy p;
  std::vector<int> widths;
  widths.push_back(state_dim + action_dim + 2);
  for (int h : hidden) widths.push_back(h);
  widths.push_back(action_dim);
  p.score_net = nn::make_mlp(widths, nn::Activation::kMish, rng);
  p.schedule = schedule;
  p.action_bound = action_bound;
  p.action_dim = action_dim;
  p.state_dim = state_dim;
  return p;
}

Eigen::VectorXd project_action(const Eigen::VectorXd& a, double bound) {
  return a.cwiseMax(-bound).cwiseMin(bound);
}

NoiseResult forward_noise(const Eigen::VectorXd& a0, int tau, const Schedule& s,
                          Rng& rng) {
  require(tau >= 1 && tau <= s.steps, "forward_noise: tau out of range");
  const double ab = s.alpha_bar(tau - 1);
  NoiseResult out;
  out.eps.resize(a0.size());
  for (Eigen::Index i = 0; i < a0.size(); ++i) out.eps(i) = rand_normal(rng);
  out.a_tau = std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * out.eps;
  return out;
}

namespace {

// Input layout: [state features | action | tau/H | sqrt(1 - alpha_bar_tau)].
void fill_step_columns(Eigen::MatrixXd& x, int state_dim, int action_dim, int tau,
                       const Schedule& s) {
  const double tfrac = static_cast<double>(tau) / s.steps;
  const double noise_scale = std::sqrt(1.0 - s.alpha_bar(tau - 1));
  x.col(state_dim + action_dim).setConstant(tfrac);
  x.col(state_dim + action_dim + 1).setConstant(noise_scale);
}

}  // namespace

Eigen::MatrixXd denoise_sample_batch(const DiffusionPolicy& policy,
                                     const Eigen::MatrixXd& state_features,
                                     Rng& rng) {
  const Schedule& s = policy.schedule;
  const long n = state_features.rows();
  const int d = policy.action_dim;
  require(state_features.cols() == policy.state_dim,
          "denoise_sample_batch: state feature width mismatch");
  Eigen::MatrixXd a(n, d);
  for (long r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) a(r, c) = rand_normal(rng);

  Eigen::MatrixXd x(n, policy.state_dim + d + 2);
  x.leftCols(policy.state_dim) = state_features;
  nn::ForwardCache cache;
  for (int tau = s.steps; tau >= 1; --tau) {
    x.middleCols(policy.state_dim, d) = a;
    fill_step_columns(x, policy.state_dim, d, tau, s);
    const Eigen::MatrixXd& pred = nn::mlp_forward_cached(policy.score_net, x, cache);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(tau - 1));
    a = inv_sqrt_alpha * (a - s.beta(tau - 1) * pred);
    if (tau > 1 || policy.noise_last_step) {
      const double sig = std::sqrt(s.sigma2(tau - 1));
      for (long r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) a(r, c) += sig * rand_normal(rng);
    }
    require(a.allFinite(), "denoise_sample_batch: non-finite intermediate");
  }
  return a.cwiseMax(-policy.action_bound).cwiseMin(policy.action_bound);
}

Eigen::VectorXd denoise_sample(const DiffusionPolicy& policy,
                               const Eigen::VectorXd& state_features, Rng& rng) {
  return denoise_sample_batch(policy, state_features.transpose(), rng)
      .row(0)
      .transpose();
}

DsmResult dsm_loss_batch(const DiffusionPolicy& policy,
                         const Eigen::MatrixXd& state_features,
                         const Eigen::MatrixXd& a0, const Eigen::VectorXd& weights,
                         Rng& rng, int n_eps) {
  const Schedule& s = policy.schedule;
  const long n = a0.rows();
  const int d = policy.action_dim;
  require(n_eps >= 1, "dsm_loss_batch: n_eps must be >= 1");
  require(state_features.rows() == n && weights.size() == n,
          "dsm_loss_batch: row mismatch");
  require(a0.cols() == d, "dsm_loss_batch: action width mismatch");
  require(weights.allFinite() && (weights.array() >= 0.0).all(),
          "dsm_loss_batch: weights must be finite and non-negative");

  DsmResult out;
  out.grads = nn::Grads::zeros_like(policy.score_net);
  const double norm = 1.0 / (static_cast<double>(n) * n_eps);

  Eigen::MatrixXd x(n, policy.state_dim + d + 2);
  x.leftCols(policy.state_dim) = state_features;
  Eigen::MatrixXd eps(n, d);
  Eigen::MatrixXd resid(n, d);
  nn::ForwardCache cache;
  for (int tau = 1; tau <= s.steps; ++tau) {
    const double ab = s.alpha_bar(tau - 1);
    const double sqrt_ab = std::sqrt(ab);
    const double inv_sqrt_om = 1.0 / std::sqrt(1.0 - ab);
    const double beta = s.beta(tau - 1);
    for (int rep = 0; rep < n_eps; ++rep) {
      for (long r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) eps(r, c) = rand_normal(rng);
      x.middleCols(policy.state_dim, d) = sqrt_ab * a0 + std::sqrt(1.0 - ab) * eps;
      fill_step_columns(x, policy.state_dim, d, tau, s);
      const Eigen::MatrixXd& pred = nn::mlp_forward_cached(policy.score_net, x, cache);
      resid = pred - inv_sqrt_om * eps;
      out.loss +=
          beta * norm * (resid.array().square().rowwise().sum() * weights.array()).sum();
      // d(loss)/d(pred): 2 beta w_r resid / (n n_eps)
      resid.array().colwise() *= weights.array() * (2.0 * beta * norm);
      nn::mlp_backward_batch_accum(policy.score_net, cache, resid, out.grads);
    }
  }
  return out;
}

DsmResult dsm_loss_per_sample(const DiffusionPolicy& policy,
                              const Eigen::VectorXd& state_features,
                              const Eigen::VectorXd& a0, Rng& rng, int n_eps) {
  return dsm_loss_batch(policy, state_features.transpose(), a0.transpose(),
                        Eigen::VectorXd::Ones(1), rng, n_eps);
}

IssmResult issm_loss_and_step(DiffusionPolicy& policy,
                              const Eigen::MatrixXd& state_features,
                              const Eigen::MatrixXd& samples,
                              const Eigen::VectorXd& weights, nn::AdamState& adam,
                              long total_steps, Rng& rng, int n_eps) {
  IssmResult out;
  if ((weights.array() == 0.0).all()) {
    std::cerr << "issm_loss_and_step: all importance weights are zero, skipping step\n";
    return out;
  }
  DsmResult dsm =
      dsm_loss_batch(policy, state_features, samples, weights, rng, n_eps);
  nn::adam_step(policy.score_net, dsm.grads, adam, total_steps);
  out.loss = dsm.loss;
  out.stepped = true;
  return out;
}

double clamped_exp_weight(double log_weight, double clamp, long* clamp_counter) {
  if (log_weight > clamp) {
    if (clamp_counter) ++(*clamp_counter);
    log_weight = clamp;
  }
  return std::exp(log_weight);
}

double issm_fit(DiffusionPolicy& policy, const Eigen::MatrixXd& state_features,
                const Eigen::MatrixXd& samples, const Eigen::VectorXd& weights,
                nn::AdamState& adam, long n_steps, int minibatch, Rng& rng,
                int n_eps, long adam_total_steps) {
  const long n = samples.rows();
  require(n >= 1, "issm_fit: empty sample set");
  if (adam_total_steps <= 0) adam_total_steps = adam.step_count + n_steps;
  const int m = static_cast<int>(std::min<long>(minibatch, n));
  Eigen::MatrixXd sf(m, state_features.cols());
  Eigen::MatrixXd a0(m, samples.cols());
  Eigen::VectorXd w(m);
  std::uniform_int_distribution<long> pick(0, n - 1);
  double last_loss = 0.0;
  for (long step = 0; step < n_steps; ++step) {
    for (int r = 0; r < m; ++r) {
      const long idx = pick(rng);
      sf.row(r) = state_features.row(idx);
      a0.row(r) = samples.row(idx);
      w(r) = weights(idx);
    }
    const IssmResult res =
        issm_loss_and_step(policy, sf, a0, w, adam, adam_total_steps, rng, n_eps);
    last_loss = res.loss;
  }
  return last_loss;
}

}  // namespace dpl::diffusion
