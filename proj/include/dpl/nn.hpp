#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dpl/rng.hpp"

#include <nlohmann/json_fwd.hpp>

namespace dpl::nn {

enum class Activation { kMish, kIdentity };

double mish(double x);
double mish_grad(double x);

// Dense multilayer perceptron with explicit forward/backward passes. Hidden
// layers use the configured activation; the output layer is always linear.
struct Mlp {
  std::vector<int> widths;                // e.g. {5, 256, 256, 256, 1}
  std::vector<Eigen::MatrixXd> w;         // w[l]: widths[l+1] x widths[l]
  std::vector<Eigen::VectorXd> b;
  Activation hidden_activation = Activation::kMish;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int layer_count() const { return static_cast<int>(w.size()); }
  std::size_t param_count() const;
  bool finite() const;
};

// Glorot-uniform weights, zero biases.
Mlp make_mlp(const std::vector<int>& widths, Activation hidden, Rng& rng);

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& input);
// Rows are samples.
Eigen::MatrixXd mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& inputs);

// Reusable across calls; matrices keep their storage when shapes repeat.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> act;  // act[0] = inputs, act[l] = layer l output
  std::vector<Eigen::MatrixXd> pre;  // pre-activation per layer
  Eigen::MatrixXd delta, delta_next;  // backward scratch
  Eigen::ArrayXXd s1, s2, s3;         // activation scratch
};

// Returns a reference into the cache; valid until the next call.
const Eigen::MatrixXd& mlp_forward_cached(const Mlp& net,
                                          const Eigen::MatrixXd& inputs,
                                          ForwardCache& cache);

struct Grads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  static Grads zeros_like(const Mlp& net);
  void set_zero();
  void add_scaled(const Grads& other, double scale);
  void scale(double s);
  bool finite() const;
  double squared_norm() const;
};

// Gradients are summed over batch rows. `output_grad` is the cotangent of the
// batched output; pass `input_grad` to also get d(loss)/d(inputs).
Grads mlp_backward_batch(const Mlp& net, ForwardCache& cache,
                         const Eigen::MatrixXd& output_grad,
                         Eigen::MatrixXd* input_grad = nullptr);

// Allocation-free variant: adds the batch-summed gradients into `accum`.
void mlp_backward_batch_accum(const Mlp& net, ForwardCache& cache,
                              const Eigen::MatrixXd& output_grad, Grads& accum,
                              Eigen::MatrixXd* input_grad = nullptr);

Grads mlp_backward(const Mlp& net, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& output_grad,
                   Eigen::VectorXd* input_grad = nullptr);

// Adam with a linearly decayed learning rate: at update t (0-based),
// lr(t) = lr_start + (lr_end - lr_start) * t / total_steps.
struct AdamState {
  long step_count = 0;
  Grads first_moment;
  Grads second_moment;
  double lr_start = 1e-4;
  double lr_end = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(const Mlp& net, double lr_start, double lr_end);

// Learning rate the next adam_step call will use.
double adam_effective_lr(const AdamState& state, long total_steps);

void adam_step(Mlp& params, const Grads& grads, AdamState& state, long total_steps);

struct PolyakState {
  double smoothing = 0.005;  // weight on the fresh parameters
  Mlp target;
};

void polyak_update(PolyakState& state, const Mlp& fresh);

nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

// Plain-loop implementations of the batched passes. They are the readable
// oracle the fast path is tested against, and the baseline for the kernel
// benchmark.
namespace ref {
Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& inputs);
Grads backward_batch(const Mlp& net, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd& output_grad,
                     Eigen::MatrixXd* input_grad = nullptr);
}  // namespace ref

}  // namespace dpl::nn
