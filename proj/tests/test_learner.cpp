#include <doctest.h>

#include <functional>

#include "recoverlab/env.hpp"
#include "recoverlab/errors.hpp"
#include "recoverlab/ppo.hpp"

using namespace recoverlab;

namespace {

using DNet = DenseNet<double>;
using Mat = DNet::Mat;
using Vec = DNet::Vec;

// flatten / scatter utilities for finite-difference checks
std::vector<double*> param_ptrs(DNet& net, Vec* log_std = nullptr) {
  std::vector<double*> out;
  for (int l = 0; l < net.num_layers(); ++l) {
    for (long i = 0; i < net.W[l].size(); ++i) out.push_back(net.W[l].data() + i);
    for (long i = 0; i < net.b[l].size(); ++i) out.push_back(net.b[l].data() + i);
  }
  if (log_std) {
    for (long i = 0; i < log_std->size(); ++i) out.push_back(log_std->data() + i);
  }
  return out;
}

std::vector<double> grad_flat(const DNet::Grads& g, const Vec* log_std_grad = nullptr) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    for (long i = 0; i < g.dW[l].size(); ++i) out.push_back(*(g.dW[l].data() + i));
    for (long i = 0; i < g.db[l].size(); ++i) out.push_back(*(g.db[l].data() + i));
  }
  if (log_std_grad) {
    for (long i = 0; i < log_std_grad->size(); ++i) out.push_back(*(log_std_grad->data() + i));
  }
  return out;
}

// max relative / absolute error between analytic gradients and central differences
double fd_check(DNet& net, Vec* log_std, const std::function<double()>& loss,
                const std::vector<double>& analytic, bool relative = true, double h = 1e-5) {
  auto ptrs = param_ptrs(net, log_std);
  REQUIRE(ptrs.size() == analytic.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const double save = *ptrs[i];
    *ptrs[i] = save + h;
    const double up = loss();
    *ptrs[i] = save - h;
    const double down = loss();
    *ptrs[i] = save;
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(fd - analytic[i]);
    worst = std::max(worst, relative ? err / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6})
                                     : err);
  }
  return worst;
}

}  // namespace

TEST_SUITE_BEGIN("learner");

TEST_CASE("net forward") {
  SUBCASE("zero parameters give zero output") {
    Rng rng(1, 0);
    DNet net = make_dense_net<double>({5, 8, 3}, rng, 1.0);
    for (auto& w : net.W) w.setZero();
    for (auto& b : net.b) b.setZero();
    Vec x = Vec::Ones(5);
    CHECK(net.forward_one(x).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("single linear layer: w=2, b=1, x=3 -> 7") {
    DNet net;
    net.W.push_back(Mat::Constant(1, 1, 2.0));
    net.b.push_back(Vec::Constant(1, 1.0));
    Vec x = Vec::Constant(1, 3.0);
    CHECK(net.forward_one(x)[0] == doctest::Approx(7.0).epsilon(1e-15));
  }

  SUBCASE("tanh saturation near +-1") {
    DNet net;
    net.W.push_back(Mat::Constant(1, 1, 100.0));
    net.b.push_back(Vec::Zero(1));
    net.W.push_back(Mat::Constant(1, 1, 1.0));
    net.b.push_back(Vec::Zero(1));
    DNet::Workspace ws;
    Mat x = Mat::Constant(1, 1, 3.0);
    net.forward(x, ws);
    CHECK(std::abs(ws.h[1](0, 0) - 1.0) < 1e-6);
  }

  SUBCASE("dimension mismatches are rejected") {
    Rng rng(1, 0);
    DNet net = make_dense_net<double>({5, 8, 3}, rng, 1.0);
    DNet::Workspace ws;
    Mat bad = Mat::Zero(2, 4);
    CHECK_THROWS_AS(net.forward(bad, ws), ShapeMismatch);
  }
}

TEST_CASE("net backward: linearity over samples and zero upstream") {
  Rng rng(2, 0);
  DNet net = make_dense_net<double>({6, 8, 2}, rng, 1.0);
  Mat X(3, 6);
  for (int i = 0; i < X.size(); ++i) *(X.data() + i) = rng.normal();
  Mat dY(3, 2);
  for (int i = 0; i < dY.size(); ++i) *(dY.data() + i) = rng.normal();

  DNet::Workspace ws;
  net.forward(X, ws);
  DNet::Grads all;
  all.init_like(net);
  net.backward(ws, dY, all);

  DNet::Grads sum;
  sum.init_like(net);
  for (int i = 0; i < 3; ++i) {
    DNet::Workspace wi;
    net.forward(Mat(X.row(i)), wi);
    net.backward(wi, Mat(dY.row(i)), sum);
  }
  auto a = grad_flat(all), b = grad_flat(sum);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-10));

  DNet::Grads zero;
  zero.init_like(net);
  net.backward(ws, Mat::Zero(3, 2), zero);
  for (double g : grad_flat(zero)) CHECK(g == 0.0);
}

TEST_CASE("gradient check: value MSE loss") {
  Rng rng(3, 0);
  DNet net = make_dense_net<double>({12, 16, 1}, rng, 1.0);
  const int B = 7;
  Mat obs(B, 12);
  Vec targets(B);
  for (int i = 0; i < obs.size(); ++i) *(obs.data() + i) = rng.normal();
  for (int i = 0; i < B; ++i) targets[i] = rng.normal(0.0, 3.0);
  const double scale = 2.5;

  DNet::Grads grads;
  grads.init_like(net);
  value_loss_backward<double>(net, scale, obs, targets, 1.0, grads);

  auto loss = [&]() {
    DNet::Workspace ws;
    const Mat& out = net.forward(obs, ws);
    return (out.col(0) * scale - targets).squaredNorm() / B;
  };
  CHECK(fd_check(net, nullptr, loss, grad_flat(grads)) < 1e-4);
}

TEST_CASE("gradient check: clipped policy surrogate with entropy bonus") {
  Rng rng(4, 0);
  const int D = 4, B = 9;
  DNet net = make_dense_net<double>({10, 16, D}, rng, 0.3);
  Vec log_std = Vec::Constant(D, -0.3);
  Mat obs(B, 10), actions(B, D);
  Vec logp_old(B), adv(B);
  for (int i = 0; i < obs.size(); ++i) *(obs.data() + i) = rng.normal();
  for (int i = 0; i < actions.size(); ++i) *(actions.data() + i) = rng.normal();
  for (int i = 0; i < B; ++i) {
    adv[i] = rng.normal();
    // spread ratios across clipped and unclipped regions
    DNet::Workspace ws;
    const Mat& mean = net.forward(obs, ws);
    logp_old[i] =
        policy_log_prob<double>(Vec(mean.row(i).transpose()), log_std,
                                Vec(actions.row(i).transpose())) +
        rng.uniform(-0.4, 0.4);
  }
  const double clip = 0.2, ent = 0.01;

  DNet::Grads grads;
  grads.init_like(net);
  Vec lsg = Vec::Zero(D);
  policy_loss_backward<double>(net, log_std, obs, actions, logp_old, adv, clip, ent, grads, lsg);

  auto loss = [&]() {
    DNet::Workspace ws;
    const Mat& mean = net.forward(obs, ws);
    double total = 0.0;
    for (int i = 0; i < B; ++i) {
      const double lp = policy_log_prob<double>(Vec(mean.row(i).transpose()), log_std,
                                                Vec(actions.row(i).transpose()));
      const double ratio = std::exp(lp - logp_old[i]);
      const double unclipped = -adv[i] * ratio;
      const double clipped = -adv[i] * std::clamp(ratio, 1.0 - clip, 1.0 + clip);
      total += std::max(unclipped, clipped);
    }
    return total / B - ent * policy_entropy<double>(log_std);
  };
  CHECK(fd_check(net, &log_std, loss, grad_flat(grads, &lsg)) < 1e-4);
}

TEST_CASE("gradient check: entropy loss alone") {
  Vec log_std = Vec::Constant(5, 0.2);
  // d(-c * entropy)/d(log_std_i) = -c exactly
  const double c = 0.005;
  Vec analytic = Vec::Constant(5, -c);
  for (int i = 0; i < 5; ++i) {
    const double h = 1e-6;
    Vec up = log_std, down = log_std;
    up[i] += h;
    down[i] -= h;
    const double fd =
        (-c * policy_entropy<double>(up) + c * policy_entropy<double>(down)) / (2 * h);
    CHECK(fd == doctest::Approx(analytic[i]).epsilon(1e-6));
  }
}

TEST_CASE("policy surrogate properties") {
  Rng rng(5, 0);
  const int D = 3, B = 6;
  DNet net = make_dense_net<double>({8, 12, D}, rng, 0.5);
  Vec log_std = Vec::Constant(D, -0.1);
  Mat obs(B, 8), actions(B, D);
  for (int i = 0; i < obs.size(); ++i) *(obs.data() + i) = rng.normal();
  for (int i = 0; i < actions.size(); ++i) *(actions.data() + i) = rng.normal();

  DNet::Workspace ws;
  const Mat mean = net.forward(obs, ws);
  Vec logp_now(B);
  for (int i = 0; i < B; ++i) {
    logp_now[i] = policy_log_prob<double>(Vec(mean.row(i).transpose()), log_std,
                                          Vec(actions.row(i).transpose()));
  }

  SUBCASE("at ratio 1 the clipped gradient equals the vanilla policy gradient") {
    Vec adv(B);
    for (int i = 0; i < B; ++i) adv[i] = rng.normal();
    DNet::Grads grads;
    grads.init_like(net);
    Vec lsg = Vec::Zero(D);
    policy_loss_backward<double>(net, log_std, obs, actions, logp_now, adv, 0.2, 0.0, grads,
                                 lsg);
    // vanilla estimator: mean over samples of -A * logpi, by finite differences
    auto vanilla = [&]() {
      DNet::Workspace w2;
      const Mat& mu = net.forward(obs, w2);
      double total = 0.0;
      for (int i = 0; i < B; ++i) {
        total += -adv[i] * policy_log_prob<double>(Vec(mu.row(i).transpose()), log_std,
                                                   Vec(actions.row(i).transpose()));
      }
      return total / B;
    };
    CHECK(fd_check(net, &log_std, vanilla, grad_flat(grads, &lsg), false) < 1e-8);
  }

  SUBCASE("zero advantages give exactly zero policy gradients") {
    DNet::Grads grads;
    grads.init_like(net);
    Vec lsg = Vec::Zero(D);
    policy_loss_backward<double>(net, log_std, obs, actions, logp_now, Vec::Zero(B), 0.2, 0.0,
                                 grads, lsg);
    for (double g : grad_flat(grads, &lsg)) CHECK(g == 0.0);
  }

  SUBCASE("a sample clipped on the far side contributes zero gradient") {
    Mat obs1 = obs.topRows(1);
    Mat act1 = actions.topRows(1);
    Vec logp_old1(1), adv1(1);
    // ratio = e^{0.5} = 1.65 > 1.2 with positive advantage: the clip plateau
    logp_old1[0] = logp_now[0] - 0.5;
    adv1[0] = 2.0;
    DNet::Grads grads;
    grads.init_like(net);
    Vec lsg = Vec::Zero(D);
    const auto stats = policy_loss_backward<double>(net, log_std, obs1, act1, logp_old1, adv1,
                                                    0.2, 0.0, grads, lsg);
    CHECK(stats.clip_fraction == 1.0);
    for (double g : grad_flat(grads, &lsg)) CHECK(g == 0.0);
  }
}

TEST_CASE("policy_sample") {
  SUBCASE("sigma -> 0 collapses to the mean") {
    Rng rng(6, 0);
    Eigen::VectorXd mean(3);
    mean << 0.5, -0.2, 1.0;
    Eigen::VectorXd log_std = Eigen::VectorXd::Constant(3, -40.0);
    auto [a, lp] = policy_sample<double>(mean, log_std, rng);
    CHECK((a - mean).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("standard normal density at the mean: 6 dims total -5.5136") {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
    Eigen::VectorXd log_std = Eigen::VectorXd::Zero(6);
    const double lp = policy_log_prob<double>(mean, log_std, mean);
    CHECK(lp == doctest::Approx(-6.0 * 0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
    CHECK(lp == doctest::Approx(-5.5136).epsilon(1e-4));
  }

  SUBCASE("empirical mean within 3 standard errors") {
    Rng rng(7, 0);
    Eigen::VectorXd mean(2);
    mean << 1.5, -0.7;
    Eigen::VectorXd log_std = Eigen::VectorXd::Constant(2, std::log(0.8));
    const int n = 100000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < n; ++i) {
      auto [a, lp] = policy_sample<double>(mean, log_std, rng);
      sum += a;
    }
    const double se = 0.8 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(sum[0] / n - 1.5) < 3 * se);
    CHECK(std::abs(sum[1] / n + 0.7) < 3 * se);
  }
}

TEST_CASE("compute_gae") {
  SUBCASE("single terminal step: A0 = r0 - V0") {
    std::vector<double> adv, ret;
    compute_gae({2.0}, {0.7}, {1}, 99.0, 0.99, 0.95, adv, ret);
    CHECK(adv[0] == doctest::Approx(2.0 - 0.7).epsilon(1e-15));
    CHECK(ret[0] == doctest::Approx(2.0).epsilon(1e-15));
  }

  SUBCASE("lambda = 0 reduces to one-step TD errors") {
    Rng rng(8, 0);
    const int n = 12;
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n, 0);
    d[n - 1] = 1;
    for (int i = 0; i < n; ++i) {
      r[i] = rng.normal();
      v[i] = rng.normal();
    }
    std::vector<double> adv, ret;
    compute_gae(r, v, d, 0.0, 0.99, 0.0, adv, ret);
    for (int i = 0; i < n; ++i) {
      const double next = (i + 1 < n) ? 0.99 * v[i + 1] : 0.0;
      CHECK(adv[i] == doctest::Approx(r[i] + next - v[i]).epsilon(1e-12));
    }
  }

  SUBCASE("lambda = 1 equals the discounted Monte-Carlo oracle") {
    Rng rng(9, 0);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 10;
      std::vector<double> r(n), v(n);
      std::vector<std::uint8_t> d(n, 0);
      const bool terminal = trial % 2 == 0;
      if (terminal) d[n - 1] = 1;
      const double bootstrap = rng.normal();
      for (int i = 0; i < n; ++i) {
        r[i] = rng.normal();
        v[i] = rng.normal();
      }
      std::vector<double> adv, ret;
      compute_gae(r, v, d, bootstrap, 0.99, 1.0, adv, ret);
      // brute force: discounted sum of rewards plus the bootstrap tail
      for (int t = 0; t < n; ++t) {
        double mc = 0.0, g = 1.0;
        for (int k = t; k < n; ++k) {
          mc += g * r[k];
          g *= 0.99;
        }
        if (!terminal) mc += g * bootstrap;
        CHECK(std::abs(adv[t] - (mc - v[t])) < 1e-10);
        CHECK(std::abs(ret[t] - mc) < 1e-10);
      }
    }
  }

  SUBCASE("misaligned arrays are rejected") {
    std::vector<double> adv, ret;
    CHECK_THROWS_AS(compute_gae({1.0, 2.0}, {0.0}, {0, 1}, 0.0, 0.99, 0.95, adv, ret),
                    ShapeMismatch);
  }
}

TEST_CASE("adam_update") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(3, 1.5);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(3), v = Eigen::VectorXd::Zero(3);
    adam_update(p, g, m, v, 1, 0.001);
    CHECK((p.array() == 1.5).all());
  }

  SUBCASE("first step is approximately -lr * sign(g)") {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd g = Eigen::VectorXd::Constant(1, 0.3);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(1), v = Eigen::VectorXd::Zero(1);
    adam_update(p, g, m, v, 1, 0.001);
    // m_hat = g, v_hat = g^2: update = -lr * g / (|g| + eps)
    CHECK(p[0] == doctest::Approx(-0.001 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
    CHECK(p[0] == doctest::Approx(-0.001).epsilon(1e-6));
  }

  SUBCASE("two steps with constant gradient match the closed-form trace") {
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, g0 = -0.4;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd g = Eigen::VectorXd::Constant(1, g0);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(1), v = Eigen::VectorXd::Zero(1);
    adam_update(p, g, m, v, 1, lr, b1, b2, eps);
    adam_update(p, g, m, v, 2, lr, b1, b2, eps);

    // hand-computed trace
    double mm = 0.0, vv = 0.0, pp = 0.0;
    for (int step = 1; step <= 2; ++step) {
      mm = b1 * mm + (1 - b1) * g0;
      vv = b2 * vv + (1 - b2) * g0 * g0;
      const double mh = mm / (1 - std::pow(b1, step));
      const double vh = vv / (1 - std::pow(b2, step));
      pp -= lr * mh / (std::sqrt(vh) + eps);
    }
    CHECK(p[0] == doctest::Approx(pp).epsilon(1e-12));
  }
}

TEST_CASE("ppo_update") {
  // small synthetic batch through the full update path
  auto make_setup = [](std::uint64_t seed) {
    Rng rng(seed, 0);
    GaussianPolicy<float> policy;
    policy.net = make_dense_net<float>({kActorObsDim, 16, kActionDim}, rng, 0.01f);
    policy.log_std = Eigen::VectorXf::Zero(kActionDim);
    ValueNet<float> value;
    value.net = make_dense_net<float>({kCriticObsDim, 16, 1}, rng, 1.0f);
    value.output_scale = 100.0f;
    return std::pair(policy, value);
  };

  auto make_batch = [](std::uint64_t seed, GaussianPolicy<float>& policy,
                       ValueNet<float>& value) {
    Rng rng(seed, 1);
    TrajectoryBatch b;
    b.resize(4, 12, kActorObsDim, kCriticObsDim, kActionDim);
    DenseNet<float>::Workspace ws;
    for (int i = 0; i < b.rows(); ++i) {
      for (int j = 0; j < kActorObsDim; ++j)
        b.actor_obs(i, j) = static_cast<float>(rng.normal());
      for (int j = 0; j < kCriticObsDim; ++j)
        b.critic_obs(i, j) = static_cast<float>(rng.normal());
      Eigen::VectorXf mean = policy.net.forward_one(b.actor_obs.row(i).transpose());
      auto [a, lp] = policy_sample<float>(mean, policy.log_std, rng);
      b.actions.row(i) = a.transpose();
      b.log_probs[i] = lp;
      b.rewards[i] = static_cast<float>(rng.normal());
      b.values[i] =
          value.net.forward_one(b.critic_obs.row(i).transpose())[0] * value.output_scale;
      b.dones[i] = (i / 4 == 11) ? 1 : 0;
    }
    b.bootstrap_values = Eigen::VectorXf::Zero(4);
    return b;
  };

  SUBCASE("runs, returns finite statistics, changes parameters") {
    auto [policy, value] = make_setup(42);
    TrajectoryBatch b = make_batch(43, policy, value);
    AdamState<float> pa, va;
    pa.init_like(policy.net);
    va.init_like(value.net);
    Eigen::VectorXf lm = Eigen::VectorXf::Zero(kActionDim), lv = lm;
    PpoConfig cfg;
    cfg.minibatches = 4;
    cfg.update_epochs = 2;
    Rng rng(7, 7);
    const float w0 = policy.net.W[0](0, 0);
    const UpdateStats stats = ppo_update(b, policy, value, pa, lm, lv, va, cfg, rng);
    CHECK(std::isfinite(stats.policy_loss));
    CHECK(std::isfinite(stats.value_loss));
    CHECK(stats.entropy > 0.0);
    CHECK(policy.net.W[0](0, 0) != w0);
    CHECK(policy.log_std.maxCoeff() <= static_cast<float>(cfg.log_std_max));
    CHECK(policy.log_std.minCoeff() >= static_cast<float>(cfg.log_std_min));
  }

  SUBCASE("advantage normalization makes the update invariant to advantage scale") {
    // identical setups; rewards scaled by 10 on one side with lambda = 1,
    // gamma = 1 and zero values so advantages are a pure positive rescaling
    auto [p1, v1] = make_setup(50);
    auto [p2, v2] = make_setup(50);
    TrajectoryBatch b1 = make_batch(51, p1, v1);
    for (int i = 0; i < b1.rows(); ++i) b1.values[i] = 0.0f;
    TrajectoryBatch b2 = b1;
    for (int i = 0; i < b2.rows(); ++i) b2.rewards[i] *= 10.0f;

    PpoConfig cfg;
    cfg.gamma = 1.0;
    cfg.gae_lambda = 1.0;
    cfg.update_epochs = 1;
    cfg.minibatches = 2;
    cfg.value_coef = 0.0;  // isolate the policy path

    AdamState<float> pa1, va1, pa2, va2;
    pa1.init_like(p1.net);
    va1.init_like(v1.net);
    pa2.init_like(p2.net);
    va2.init_like(v2.net);
    Eigen::VectorXf lm1 = Eigen::VectorXf::Zero(kActionDim), lv1 = lm1;
    Eigen::VectorXf lm2 = lm1, lv2 = lm1;
    Rng r1(9, 9), r2(9, 9);
    ppo_update(b1, p1, v1, pa1, lm1, lv1, va1, cfg, r1);
    ppo_update(b2, p2, v2, pa2, lm2, lv2, va2, cfg, r2);
    for (int l = 0; l < p1.net.num_layers(); ++l) {
      CHECK((p1.net.W[l] - p2.net.W[l]).cwiseAbs().maxCoeff() < 2e-6f);
    }
  }

  SUBCASE("non-finite advantages raise NonFiniteLoss") {
    auto [policy, value] = make_setup(60);
    TrajectoryBatch b = make_batch(61, policy, value);
    b.rewards[3] = std::numeric_limits<float>::quiet_NaN();
    AdamState<float> pa, va;
    pa.init_like(policy.net);
    va.init_like(value.net);
    Eigen::VectorXf lm = Eigen::VectorXf::Zero(kActionDim), lv = lm;
    PpoConfig cfg;
    Rng rng(1, 1);
    CHECK_THROWS_AS(ppo_update(b, policy, value, pa, lm, lv, va, cfg, rng), NonFiniteLoss);
  }

  SUBCASE("the actor never sees privileged inputs (dimension check)") {
    auto [policy, value] = make_setup(70);
    CHECK(policy.net.input_dim() == kActorObsDim);
    CHECK(value.net.input_dim() == kCriticObsDim);
    CHECK(kCriticObsDim - kActorObsDim == kPrivilegedDim);
  }
}

TEST_SUITE_END();
