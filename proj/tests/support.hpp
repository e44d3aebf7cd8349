#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dpl/nn.hpp"
#include "dpl/rng.hpp"

namespace dpl::testsupport {

// Central finite differences of L(theta) = <cotangent, net(input)> against the
// analytic backward pass. Checks every parameter when max_per_layer <= 0,
// otherwise a deterministic subsample per layer. Relative error uses a small
// absolute floor so near-zero entries are compared absolutely.
inline double max_grad_rel_error(nn::Mlp net, const Eigen::VectorXd& input,
                                 const Eigen::VectorXd& cotangent,
                                 int max_per_layer = 0, double step = 1e-5) {
  const nn::Grads analytic = nn::mlp_backward(net, input, cotangent);
  auto loss = [&]() { return cotangent.dot(nn::mlp_forward(net, input)); };
  double worst = 0.0;
  auto check_entry = [&](double* p, double g) {
    const double saved = *p;
    *p = saved + step;
    const double up = loss();
    *p = saved - step;
    const double dn = loss();
    *p = saved;
    const double fd = (up - dn) / (2.0 * step);
    const double rel = std::abs(fd - g) / (std::max(std::abs(fd), std::abs(g)) + 1e-6);
    worst = std::max(worst, rel);
  };
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    const long nw = net.w[l].size();
    const long stride_w =
        max_per_layer > 0 ? std::max<long>(1, nw / max_per_layer) : 1;
    for (long k = 0; k < nw; k += stride_w)
      check_entry(net.w[l].data() + k, analytic.w[l](k));
    const long nb = net.b[l].size();
    const long stride_b =
        max_per_layer > 0 ? std::max<long>(1, nb / max_per_layer) : 1;
    for (long k = 0; k < nb; k += stride_b)
      check_entry(net.b[l].data() + k, analytic.b[l](k));
  }
  return worst;
}

inline Eigen::VectorXd random_vec(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rand_normal(rng);
  return v;
}

// Chunked mean of a per-draw sampler; OpenMP-safe and deterministic because
// every chunk owns a derived stream and chunks are reduced in order.
inline double mc_mean(const std::function<double(Rng&)>& draw, long n_draws,
                      std::uint64_t seed) {
  const long chunk = 1 << 16;
  const long n_chunks = (n_draws + chunk - 1) / chunk;
  std::vector<double> sums(n_chunks, 0.0);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < n_chunks; ++c) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(c)});
    const long lo = c * chunk;
    const long hi = std::min(n_draws, lo + chunk);
    double s = 0.0;
    for (long i = lo; i < hi; ++i) s += draw(rng);
    sums[c] = s;
  }
  double total = 0.0;
  for (double s : sums) total += s;
  return total / static_cast<double>(n_draws);
}

}  // namespace dpl::testsupport
