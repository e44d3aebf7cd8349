// Compares the plain-loop reference kernels against the fast batched path at
// the layer shapes the training loops actually use.

#include <chrono>
#include <cstdio>
#include <vector>

#include "dpl/nn.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double flops_forward(const dpl::nn::Mlp& net, long batch) {
  double f = 0.0;
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l)
    f += 2.0 * net.widths[l] * net.widths[l + 1];
  return f * batch;
}

void bench_config(const std::vector<int>& widths, long batch, int reps) {
  dpl::Rng rng(7);
  const auto net = dpl::nn::make_mlp(widths, dpl::nn::Activation::kMish, rng);
  Eigen::MatrixXd x(batch, widths.front());
  std::normal_distribution<double> nd;
  for (long r = 0; r < batch; ++r)
    for (int c = 0; c < widths.front(); ++c) x(r, c) = nd(rng);
  Eigen::MatrixXd dy = Eigen::MatrixXd::Ones(batch, widths.back());

  auto t0 = Clock::now();
  Eigen::MatrixXd y_ref;
  for (int i = 0; i < reps; ++i) y_ref = dpl::nn::ref::forward_batch(net, x);
  const double ref_fwd = seconds_since(t0);

  t0 = Clock::now();
  Eigen::MatrixXd y_fast;
  for (int i = 0; i < reps; ++i) y_fast = dpl::nn::mlp_forward_batch(net, x);
  const double fast_fwd = seconds_since(t0);

  t0 = Clock::now();
  for (int i = 0; i < reps; ++i) dpl::nn::ref::backward_batch(net, x, dy);
  const double ref_bwd = seconds_since(t0);

  dpl::nn::ForwardCache cache;
  t0 = Clock::now();
  for (int i = 0; i < reps; ++i) {
    dpl::nn::mlp_forward_cached(net, x, cache);
    dpl::nn::mlp_backward_batch(net, cache, dy);
  }
  const double fast_bwd = seconds_since(t0);

  const double diff = (y_ref - y_fast).cwiseAbs().maxCoeff();
  const double gf = flops_forward(net, batch) * reps / 1e9;
  std::printf("widths");
  for (int w : widths) std::printf(" %d", w);
  std::printf("  batch %ld\n", batch);
  std::printf("  forward : ref %7.2f ms (%6.2f GF/s)   fast %7.2f ms (%6.2f GF/s)\n",
              1e3 * ref_fwd, gf / ref_fwd, 1e3 * fast_fwd, gf / fast_fwd);
  std::printf("  fwd+bwd : ref %7.2f ms               fast %7.2f ms   speedup %.1fx\n",
              1e3 * (ref_fwd + ref_bwd), 1e3 * fast_bwd,
              (ref_fwd + ref_bwd) / fast_bwd);
  std::printf("  max |ref - fast| = %.3e\n\n", diff);
}

}  // namespace

int main() {
  bench_config({5, 256, 256, 256, 1}, 1024, 10);
  bench_config({4, 64, 64, 1}, 256, 100);
  bench_config({6, 256, 256, 256, 1}, 256, 20);
  return 0;
}
