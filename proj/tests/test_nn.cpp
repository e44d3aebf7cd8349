#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "dpl/nn.hpp"
#include "support.hpp"

using namespace dpl;
using namespace dpl::nn;

namespace {

Mlp zero_net(const std::vector<int>& widths, Activation act) {
  Rng rng(0);
  Mlp net = make_mlp(widths, act, rng);
  for (auto& w : net.w) w.setZero();
  for (auto& b : net.b) b.setZero();
  return net;
}

}  // namespace

TEST_CASE("forward: all-zero parameters give the zero vector") {
  const Mlp net = zero_net({4, 8, 3}, Activation::kMish);
  Rng rng(1);
  const Eigen::VectorXd y = mlp_forward(net, testsupport::random_vec(4, rng));
  CHECK(y.size() == 3);
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: identity single layer returns its input") {
  Mlp net = zero_net({5, 5}, Activation::kIdentity);
  net.w[0] = Eigen::MatrixXd::Identity(5, 5);
  Rng rng(2);
  const Eigen::VectorXd v = testsupport::random_vec(5, rng);
  const Eigen::VectorXd y = mlp_forward(net, v);
  CHECK((y - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: dimension mismatch is a hard error") {
  const Mlp net = zero_net({4, 8, 3}, Activation::kMish);
  CHECK_THROWS(mlp_forward(net, Eigen::VectorXd::Zero(5)));
}

TEST_CASE("forward: golden 2-3-1 net") {
  std::ifstream in(std::string(DPL_SOURCE_DIR) + "/tests/golden/mlp_2_3_1.json");
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  const Mlp net = mlp_from_json(j.at("net"));
  Eigen::VectorXd x(2);
  x << j.at("input")[0].get<double>(), j.at("input")[1].get<double>();
  const double expected = j.at("output").get<double>();
  const Eigen::VectorXd y = mlp_forward(net, x);
  CHECK(y.size() == 1);
  CHECK(y(0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("forward is pure: identical runs agree bitwise") {
  Rng rng(3);
  const Mlp net = make_mlp({3, 16, 16, 2}, Activation::kMish, rng);
  const Eigen::VectorXd x = testsupport::random_vec(3, rng);
  const Eigen::VectorXd y1 = mlp_forward(net, x);
  const Eigen::VectorXd y2 = mlp_forward(net, x);
  CHECK(std::memcmp(y1.data(), y2.data(), sizeof(double) * y1.size()) == 0);
}

TEST_CASE("backward: zero cotangent gives zero gradients") {
  Rng rng(4);
  const Mlp net = make_mlp({3, 8, 2}, Activation::kMish, rng);
  const Grads g =
      mlp_backward(net, testsupport::random_vec(3, rng), Eigen::VectorXd::Zero(2));
  CHECK(g.squared_norm() == 0.0);
}

TEST_CASE("backward: single linear neuron has dy/dw = x") {
  Mlp net = zero_net({1, 1}, Activation::kIdentity);
  net.w[0](0, 0) = 0.37;
  Eigen::VectorXd x(1), c(1);
  x << 2.5;
  c << 1.0;
  const Grads g = mlp_backward(net, x, c);
  CHECK(g.w[0](0, 0) == 2.5);
  CHECK(g.b[0](0) == 1.0);
}

TEST_CASE("backward matches central finite differences on seeded nets") {
  // Layer configurations used across the project.
  const std::vector<std::vector<int>> configs = {
      {2, 3, 1}, {4, 8, 8, 2}, {4, 64, 64, 1}, {6, 32, 32, 32, 1}};
  for (const auto& widths : configs) {
    for (int s = 0; s < 100; ++s) {
      Rng rng(derive_seed(900, {static_cast<std::uint64_t>(s),
                                static_cast<std::uint64_t>(widths.size())}));
      const Mlp net = make_mlp(widths, Activation::kMish, rng);
      const Eigen::VectorXd x = testsupport::random_vec(widths.front(), rng);
      const Eigen::VectorXd c = testsupport::random_vec(widths.back(), rng);
      const int budget = widths[1] >= 64 ? 12 : 0;  // subsample big layers
      const double err = testsupport::max_grad_rel_error(net, x, c, budget);
      CHECK(err < 1e-5);
    }
  }
}

TEST_CASE("backward: input gradient matches finite differences") {
  Rng rng(5);
  const Mlp net = make_mlp({4, 16, 2}, Activation::kMish, rng);
  const Eigen::VectorXd x = testsupport::random_vec(4, rng);
  const Eigen::VectorXd c = testsupport::random_vec(2, rng);
  Eigen::VectorXd dx;
  mlp_backward(net, x, c, &dx);
  const double h = 1e-5;
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double fd = (c.dot(mlp_forward(net, xp)) - c.dot(mlp_forward(net, xm))) /
                      (2.0 * h);
    CHECK(std::abs(fd - dx(i)) < 1e-6 * (1.0 + std::abs(fd)));
  }
}

TEST_CASE("reference kernels agree with the fast path") {
  Rng rng(6);
  const Mlp net = make_mlp({5, 32, 32, 2}, Activation::kMish, rng);
  Eigen::MatrixXd x(64, 5);
  for (long r = 0; r < x.rows(); ++r)
    x.row(r) = testsupport::random_vec(5, rng).transpose();
  Eigen::MatrixXd dy(64, 2);
  for (long r = 0; r < dy.rows(); ++r)
    dy.row(r) = testsupport::random_vec(2, rng).transpose();

  const Eigen::MatrixXd y_ref = ref::forward_batch(net, x);
  const Eigen::MatrixXd y_fast = mlp_forward_batch(net, x);
  CHECK((y_ref - y_fast).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd dx_ref, dx_fast;
  const Grads g_ref = ref::backward_batch(net, x, dy, &dx_ref);
  ForwardCache cache;
  mlp_forward_cached(net, x, cache);
  const Grads g_fast = mlp_backward_batch(net, cache, dy, &dx_fast);
  CHECK((dx_ref - dx_fast).cwiseAbs().maxCoeff() < 1e-10);
  for (std::size_t l = 0; l < g_ref.w.size(); ++l) {
    CHECK((g_ref.w[l] - g_fast.w[l]).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((g_ref.b[l] - g_fast.b[l]).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged for any step count") {
  Rng rng(7);
  Mlp net = make_mlp({3, 8, 1}, Activation::kMish, rng);
  const Mlp before = net;
  AdamState st = make_adam(net, 1e-3, 1e-3);
  const Grads zero = Grads::zeros_like(net);
  for (int t = 0; t < 17; ++t) adam_step(net, zero, st, 100);
  CHECK(st.step_count == 17);
  for (std::size_t l = 0; l < net.w.size(); ++l)
    CHECK((net.w[l] - before.w[l]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: one step with constant gradient moves by ~lr*sign(g)") {
  Mlp net = zero_net({1, 1}, Activation::kIdentity);
  net.w[0](0, 0) = 1.0;
  AdamState st = make_adam(net, 1e-3, 1e-3);
  Grads g = Grads::zeros_like(net);
  g.w[0](0, 0) = 0.4;
  adam_step(net, g, st, 10);
  // m-hat = g, v-hat = g^2  =>  delta = lr * g / (|g| + eps)
  const double expected = 1.0 - 1e-3 * 0.4 / (0.4 + 1e-8);
  CHECK(net.w[0](0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adam: learning rate interpolates linearly") {
  Mlp net = zero_net({1, 1}, Activation::kIdentity);
  AdamState st = make_adam(net, 1e-4, 5e-5);
  const Grads zero = Grads::zeros_like(net);
  const long total = 100;
  CHECK(adam_effective_lr(st, total) == doctest::Approx(1e-4).epsilon(1e-15));
  for (int t = 0; t < 50; ++t) adam_step(net, zero, st, total);
  CHECK(adam_effective_lr(st, total) == doctest::Approx(7.5e-5).epsilon(1e-15));
}

TEST_CASE("adam: non-finite gradient is a hard error") {
  Rng rng(8);
  Mlp net = make_mlp({2, 2}, Activation::kIdentity, rng);
  AdamState st = make_adam(net, 1e-3, 1e-3);
  Grads g = Grads::zeros_like(net);
  g.w[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(adam_step(net, g, st, 10));
}

TEST_CASE("adam: step budget is enforced") {
  Rng rng(9);
  Mlp net = make_mlp({2, 2}, Activation::kIdentity, rng);
  AdamState st = make_adam(net, 1e-3, 1e-3);
  const Grads zero = Grads::zeros_like(net);
  adam_step(net, zero, st, 1);
  CHECK_THROWS(adam_step(net, zero, st, 1));
}

TEST_CASE("polyak: smoothing 1 copies the fresh parameters") {
  Rng rng(10);
  const Mlp fresh = make_mlp({2, 4, 1}, Activation::kMish, rng);
  Mlp target = zero_net({2, 4, 1}, Activation::kMish);
  PolyakState st{1.0, target};
  polyak_update(st, fresh);
  for (std::size_t l = 0; l < fresh.w.size(); ++l)
    CHECK((st.target.w[l] - fresh.w[l]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("polyak: xi=0.005 moves zero target to 0.005") {
  Mlp fresh = zero_net({1, 1}, Activation::kIdentity);
  fresh.w[0](0, 0) = 1.0;
  PolyakState st{0.005, zero_net({1, 1}, Activation::kIdentity)};
  polyak_update(st, fresh);
  CHECK(st.target.w[0](0, 0) == doctest::Approx(0.005).epsilon(1e-15));
}

TEST_CASE("polyak: repeated updates converge geometrically to the target") {
  Mlp fresh = zero_net({1, 1}, Activation::kIdentity);
  fresh.w[0](0, 0) = 2.0;
  PolyakState st{0.1, zero_net({1, 1}, Activation::kIdentity)};
  for (int k = 0; k < 200; ++k) polyak_update(st, fresh);
  const double expected_gap = 2.0 * std::pow(0.9, 200);
  CHECK(std::abs(st.target.w[0](0, 0) - 2.0) ==
        doctest::Approx(expected_gap).epsilon(1e-9));
}

TEST_CASE("json snapshot round-trips parameters exactly") {
  Rng rng(11);
  const Mlp net = make_mlp({3, 8, 2}, Activation::kMish, rng);
  const Mlp back = mlp_from_json(mlp_to_json(net));
  REQUIRE(back.widths == net.widths);
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    CHECK((back.w[l] - net.w[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.b[l] - net.b[l]).cwiseAbs().maxCoeff() == 0.0);
  }
}
