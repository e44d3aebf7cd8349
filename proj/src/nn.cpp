#include "dpl/nn.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "dpl/common.hpp"

namespace dpl::nn {

namespace {

double softplus(double x) {
  if (x > 20.0) return x;
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Vectorized mish via tanh(softplus(x)) = (w^2 + 2w) / (w^2 + 2w + 2) with
// w = exp(x); the exponent is clamped so the unused branch stays finite.
Eigen::MatrixXd mish_matrix(const Eigen::MatrixXd& z) {
  const auto x = z.array();
  const Eigen::ArrayXXd w = x.min(30.0).exp();
  const Eigen::ArrayXXd num = w * (w + 2.0);
  return (x > 20.0).select(x, x * num / (num + 2.0));
}

void check_layer_shapes(const Mlp& net) {
  require(net.widths.size() >= 2, "mlp: need at least input and output widths");
  require(net.w.size() + 1 == net.widths.size() && net.b.size() == net.w.size(),
          "mlp: layer count mismatch");
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    require(net.w[l].rows() == net.widths[l + 1] && net.w[l].cols() == net.widths[l],
            "mlp: weight shape mismatch");
    require(net.b[l].size() == net.widths[l + 1], "mlp: bias shape mismatch");
  }
}

}  // namespace

double mish(double x) { return x * std::tanh(softplus(x)); }

double mish_grad(double x) {
  const double t = std::tanh(softplus(x));
  return t + x * (1.0 - t * t) * sigmoid(x);
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < w.size(); ++l) n += w[l].size() + b[l].size();
  return n;
}

bool Mlp::finite() const {
  for (const auto& m : w)
    if (!m.allFinite()) return false;
  for (const auto& v : b)
    if (!v.allFinite()) return false;
  return true;
}

Mlp make_mlp(const std::vector<int>& widths, Activation hidden, Rng& rng) {
  require(widths.size() >= 2, "make_mlp: need at least two widths");
  for (int wd : widths) require(wd > 0, "make_mlp: widths must be positive");
  Mlp net;
  net.widths = widths;
  net.hidden_activation = hidden;
  net.w.reserve(widths.size() - 1);
  net.b.reserve(widths.size() - 1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Eigen::MatrixXd wl(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) wl(i, j) = u(rng);
    net.w.push_back(std::move(wl));
    net.b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

Eigen::MatrixXd mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& inputs) {
  check_layer_shapes(net);
  require(inputs.cols() == net.input_dim(), "mlp_forward: input width mismatch");
  Eigen::MatrixXd a = inputs;
  const int L = net.layer_count();
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd z = a * net.w[l].transpose();
    z.rowwise() += net.b[l].transpose();
    if (l + 1 < L && net.hidden_activation == Activation::kMish)
      a = mish_matrix(z);
    else
      a = std::move(z);
  }
  return a;
}

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& input) {
  return mlp_forward_batch(net, input.transpose()).row(0).transpose();
}

const Eigen::MatrixXd& mlp_forward_cached(const Mlp& net,
                                          const Eigen::MatrixXd& inputs,
                                          ForwardCache& cache) {
  check_layer_shapes(net);
  require(inputs.cols() == net.input_dim(), "mlp_forward: input width mismatch");
  const int L = net.layer_count();
  const long batch = inputs.rows();
  if (static_cast<int>(cache.act.size()) != L + 1) {
    cache.act.resize(L + 1);
    cache.pre.resize(L);
  }
  cache.act[0] = inputs;
  for (int l = 0; l < L; ++l) {
    const int out = net.widths[l + 1];
    cache.pre[l].resize(batch, out);
    cache.pre[l].noalias() = cache.act[l] * net.w[l].transpose();
    cache.pre[l].rowwise() += net.b[l].transpose();
    cache.act[l + 1].resize(batch, out);
    if (l + 1 < L && net.hidden_activation == Activation::kMish) {
      const auto x = cache.pre[l].array();
      cache.s1 = x.min(30.0).exp();
      cache.s2 = cache.s1 * (cache.s1 + 2.0);
      cache.act[l + 1].array() = (x > 20.0).select(x, x * cache.s2 / (cache.s2 + 2.0));
    } else {
      cache.act[l + 1] = cache.pre[l];
    }
  }
  return cache.act.back();
}

Grads Grads::zeros_like(const Mlp& net) {
  Grads g;
  g.w.reserve(net.w.size());
  g.b.reserve(net.b.size());
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    g.w.push_back(Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols()));
    g.b.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
  }
  return g;
}

void Grads::set_zero() {
  for (auto& m : w) m.setZero();
  for (auto& v : b) v.setZero();
}

void Grads::add_scaled(const Grads& other, double scale) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    w[l] += scale * other.w[l];
    b[l] += scale * other.b[l];
  }
}

void Grads::scale(double s) {
  for (auto& m : w) m *= s;
  for (auto& v : b) v *= s;
}

bool Grads::finite() const {
  for (const auto& m : w)
    if (!m.allFinite()) return false;
  for (const auto& v : b)
    if (!v.allFinite()) return false;
  return true;
}

double Grads::squared_norm() const {
  double s = 0.0;
  for (const auto& m : w) s += m.squaredNorm();
  for (const auto& v : b) s += v.squaredNorm();
  return s;
}

void mlp_backward_batch_accum(const Mlp& net, ForwardCache& cache,
                              const Eigen::MatrixXd& output_grad, Grads& accum,
                              Eigen::MatrixXd* input_grad) {
  const int L = net.layer_count();
  require(static_cast<int>(cache.pre.size()) == L, "mlp_backward: stale cache");
  require(output_grad.rows() == cache.act[0].rows() &&
              output_grad.cols() == net.output_dim(),
          "mlp_backward: output_grad shape mismatch");
  const long batch = output_grad.rows();
  cache.delta = output_grad;
  for (int l = L - 1; l >= 0; --l) {
    if (l + 1 < L && net.hidden_activation == Activation::kMish) {
      const auto x = cache.pre[l].array();
      cache.s1 = x.min(30.0).exp();
      cache.s2 = cache.s1 * (cache.s1 + 2.0);
      cache.s3 = cache.s2 / (cache.s2 + 2.0);  // tanh(softplus(x))
      cache.delta.array() *=
          cache.s3 + x * (1.0 - cache.s3.square()) * (cache.s1 / (1.0 + cache.s1));
    }
    accum.w[l].noalias() += cache.delta.transpose() * cache.act[l];
    accum.b[l].noalias() += cache.delta.colwise().sum().transpose();
    if (l > 0 || input_grad != nullptr) {
      cache.delta_next.resize(batch, net.widths[l]);
      cache.delta_next.noalias() = cache.delta * net.w[l];
      if (l == 0 && input_grad != nullptr) {
        *input_grad = cache.delta_next;
      } else {
        std::swap(cache.delta, cache.delta_next);
      }
    }
  }
}

Grads mlp_backward_batch(const Mlp& net, ForwardCache& cache,
                         const Eigen::MatrixXd& output_grad,
                         Eigen::MatrixXd* input_grad) {
  Grads g = Grads::zeros_like(net);
  mlp_backward_batch_accum(net, cache, output_grad, g, input_grad);
  return g;
}

Grads mlp_backward(const Mlp& net, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& output_grad,
                   Eigen::VectorXd* input_grad) {
  ForwardCache cache;
  mlp_forward_cached(net, input.transpose(), cache);
  Eigen::MatrixXd dx;
  Grads g = mlp_backward_batch(net, cache, output_grad.transpose(),
                               input_grad ? &dx : nullptr);
  if (input_grad) *input_grad = dx.row(0).transpose();
  return g;
}

AdamState make_adam(const Mlp& net, double lr_start, double lr_end) {
  AdamState st;
  st.first_moment = Grads::zeros_like(net);
  st.second_moment = Grads::zeros_like(net);
  st.lr_start = lr_start;
  st.lr_end = lr_end;
  return st;
}

double adam_effective_lr(const AdamState& state, long total_steps) {
  return state.lr_start + (state.lr_end - state.lr_start) *
                              static_cast<double>(state.step_count) /
                              static_cast<double>(total_steps);
}

void adam_step(Mlp& params, const Grads& grads, AdamState& state, long total_steps) {
  require(grads.finite(), "adam_step: non-finite gradient");
  require(state.step_count < total_steps, "adam_step: step budget exhausted");
  const double lr = adam_effective_lr(state, total_steps);
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t l = 0; l < params.w.size(); ++l) {
    auto& mw = state.first_moment.w[l];
    auto& vw = state.second_moment.w[l];
    mw = state.beta1 * mw + (1.0 - state.beta1) * grads.w[l];
    vw = state.beta2 * vw +
         (1.0 - state.beta2) * grads.w[l].array().square().matrix();
    params.w[l].array() -=
        lr * (mw.array() / bc1) / ((vw.array() / bc2).sqrt() + state.eps);

    auto& mb = state.first_moment.b[l];
    auto& vb = state.second_moment.b[l];
    mb = state.beta1 * mb + (1.0 - state.beta1) * grads.b[l];
    vb = state.beta2 * vb +
         (1.0 - state.beta2) * grads.b[l].array().square().matrix();
    params.b[l].array() -=
        lr * (mb.array() / bc1) / ((vb.array() / bc2).sqrt() + state.eps);
  }
}

void polyak_update(PolyakState& state, const Mlp& fresh) {
  require(state.target.w.size() == fresh.w.size(), "polyak_update: shape mismatch");
  const double xi = state.smoothing;
  for (std::size_t l = 0; l < fresh.w.size(); ++l) {
    require(state.target.w[l].rows() == fresh.w[l].rows() &&
                state.target.w[l].cols() == fresh.w[l].cols(),
            "polyak_update: shape mismatch");
    state.target.w[l] = xi * fresh.w[l] + (1.0 - xi) * state.target.w[l];
    state.target.b[l] = xi * fresh.b[l] + (1.0 - xi) * state.target.b[l];
  }
}

nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json j;
  j["widths"] = net.widths;
  j["activation"] = net.hidden_activation == Activation::kMish ? "mish" : "identity";
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    nlohmann::json layer;
    std::vector<double> wflat(net.w[l].data(), net.w[l].data() + net.w[l].size());
    std::vector<double> bflat(net.b[l].data(), net.b[l].data() + net.b[l].size());
    layer["w"] = wflat;  // column-major
    layer["b"] = bflat;
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp net;
  net.widths = j.at("widths").get<std::vector<int>>();
  net.hidden_activation = j.at("activation").get<std::string>() == "mish"
                              ? Activation::kMish
                              : Activation::kIdentity;
  const auto& layers = j.at("layers");
  require(layers.size() + 1 == net.widths.size(), "mlp_from_json: layer mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto wflat = layers[l].at("w").get<std::vector<double>>();
    const auto bflat = layers[l].at("b").get<std::vector<double>>();
    const int rows = net.widths[l + 1];
    const int cols = net.widths[l];
    require(static_cast<int>(wflat.size()) == rows * cols &&
                static_cast<int>(bflat.size()) == rows,
            "mlp_from_json: size mismatch");
    Eigen::MatrixXd wl(rows, cols);
    std::copy(wflat.begin(), wflat.end(), wl.data());
    Eigen::VectorXd bl(rows);
    std::copy(bflat.begin(), bflat.end(), bl.data());
    net.w.push_back(std::move(wl));
    net.b.push_back(std::move(bl));
  }
  check_layer_shapes(net);
  return net;
}

namespace ref {

Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& inputs) {
  const int L = net.layer_count();
  const long batch = inputs.rows();
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < L; ++l) {
    const int out = net.widths[l + 1];
    const int in = net.widths[l];
    Eigen::MatrixXd z(batch, out);
    for (long r = 0; r < batch; ++r) {
      for (int o = 0; o < out; ++o) {
        double acc = net.b[l](o);
        for (int i = 0; i < in; ++i) acc += net.w[l](o, i) * a(r, i);
        z(r, o) = (l + 1 < L && net.hidden_activation == Activation::kMish)
                      ? mish(acc)
                      : acc;
      }
    }
    a = std::move(z);
  }
  return a;
}

Grads backward_batch(const Mlp& net, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd& output_grad,
                     Eigen::MatrixXd* input_grad) {
  const int L = net.layer_count();
  const long batch = inputs.rows();
  // forward, keeping pre-activations and activations
  std::vector<Eigen::MatrixXd> act(static_cast<std::size_t>(L) + 1);
  std::vector<Eigen::MatrixXd> pre(static_cast<std::size_t>(L));
  act[0] = inputs;
  for (int l = 0; l < L; ++l) {
    const int out = net.widths[l + 1];
    const int in = net.widths[l];
    pre[l].resize(batch, out);
    act[l + 1].resize(batch, out);
    for (long r = 0; r < batch; ++r) {
      for (int o = 0; o < out; ++o) {
        double acc = net.b[l](o);
        for (int i = 0; i < in; ++i) acc += net.w[l](o, i) * act[l](r, i);
        pre[l](r, o) = acc;
        act[l + 1](r, o) =
            (l + 1 < L && net.hidden_activation == Activation::kMish) ? mish(acc)
                                                                      : acc;
      }
    }
  }
  Grads g = Grads::zeros_like(net);
  Eigen::MatrixXd delta = output_grad;
  for (int l = L - 1; l >= 0; --l) {
    const int out = net.widths[l + 1];
    const int in = net.widths[l];
    if (l + 1 < L && net.hidden_activation == Activation::kMish) {
      for (long r = 0; r < batch; ++r)
        for (int o = 0; o < out; ++o) delta(r, o) *= mish_grad(pre[l](r, o));
    }
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) {
        double acc = 0.0;
        for (long r = 0; r < batch; ++r) acc += delta(r, o) * act[l](r, i);
        g.w[l](o, i) = acc;
      }
      double accb = 0.0;
      for (long r = 0; r < batch; ++r) accb += delta(r, o);
      g.b[l](o) = accb;
    }
    if (l > 0 || input_grad != nullptr) {
      Eigen::MatrixXd prev(batch, in);
      for (long r = 0; r < batch; ++r) {
        for (int i = 0; i < in; ++i) {
          double acc = 0.0;
          for (int o = 0; o < out; ++o) acc += delta(r, o) * net.w[l](o, i);
          prev(r, i) = acc;
        }
      }
      if (l == 0 && input_grad != nullptr) *input_grad = std::move(prev);
      else delta = std::move(prev);
    }
  }
  return g;
}

}  // namespace ref

}  // namespace dpl::nn
